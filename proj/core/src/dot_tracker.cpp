#include "evetac/dot_tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evetac/errors.hpp"

namespace evetac {

void TrackerConfig::validate() const
{
    if (!(ring_inner > 0.0) || !(ring_outer > ring_inner))
        throw InvalidInput("tracker: need 0 < inner < outer ring radius");
    if (!(step_size > 0.0))
        throw InvalidInput("tracker: step size must be positive");
    if (reg_weight < 0.0)
        throw InvalidInput("tracker: regularizer weight must be >= 0");
    if (min_events < 0)
        throw InvalidInput("tracker: event gate must be >= 0");
}

std::vector<std::vector<Vec2>> assign_events(const EventFrame& frame,
                                             std::span<const Vec2> centers,
                                             const TrackerConfig& cfg)
{
    std::vector<std::vector<Vec2>> out(centers.size());
    const double outer_sq = cfg.ring_outer * cfg.ring_outer;
    const double inner_sq = cfg.ring_inner * cfg.ring_inner;
    for (const Event& e : frame.events) {
        const double ex = e.x;
        const double ey = e.y;
        int best = -1;
        double best_sq = std::numeric_limits<double>::max();
        for (std::size_t d = 0; d < centers.size(); ++d) {
            const double dx = ex - centers[d].x;
            const double dy = ey - centers[d].y;
            const double sq = dx * dx + dy * dy;
            if (sq < best_sq) {
                best_sq = sq;
                best = static_cast<int>(d);
            }
        }
        if (best >= 0 && best_sq > inner_sq && best_sq < outer_sq)
            out[best].push_back({ex - centers[best].x, ey - centers[best].y});
    }
    return out;
}

Vec2 update_dot(const Vec2& center, std::span<const Vec2> rel_events, double radius,
                std::span<const Vec2> neighbor_centers,
                std::span<const double> neighbor_rest_dist_sq,
                const TrackerConfig& cfg)
{
    if (static_cast<int>(rel_events.size()) <= cfg.min_events)
        return center;

    Vec2 grad;
    for (const Vec2& x : rel_events) {
        const double n = x.norm();
        if (n == 0.0)
            continue; // direction undefined
        const double s = radius / n;
        grad.x += -2.0 * (x.x - s * x.x);
        grad.y += -2.0 * (x.y - s * x.y);
    }

    if (cfg.reg_weight > 0.0 && !neighbor_centers.empty()) {
        Vec2 reg;
        for (std::size_t j = 0; j < neighbor_centers.size(); ++j) {
            const Vec2 diff = center - neighbor_centers[j];
            const double gap = diff.norm_sq() - neighbor_rest_dist_sq[j];
            reg.x += 4.0 * diff.x * gap;
            reg.y += 4.0 * diff.y * gap;
        }
        const double w = cfg.reg_weight * (8.0 / static_cast<double>(neighbor_centers.size()));
        grad.x += w * reg.x;
        grad.y += w * reg.y;
    }

    return {center.x - cfg.step_size * grad.x, center.y - cfg.step_size * grad.y};
}

DotTracker::DotTracker(const DotLattice& lattice, const TrackerConfig& cfg)
    : lattice_(lattice), cfg_(cfg)
{
    cfg_.validate();
    reset();
}

void DotTracker::reset()
{
    centers_ = lattice_.rest;
    next_centers_ = centers_;
    assigned_.assign(lattice_.rest.size(), {});
    last_t_us_ = -1;
}

void DotTracker::process_frame(const EventFrame& frame)
{
    if (frame.t_end_us <= last_t_us_)
        throw InvalidInput("tracker: frame timestamps must be strictly increasing");
    last_t_us_ = frame.t_end_us;

    for (auto& v : assigned_)
        v.clear();
    const double outer_sq = cfg_.ring_outer * cfg_.ring_outer;
    const double inner_sq = cfg_.ring_inner * cfg_.ring_inner;
    for (const Event& e : frame.events) {
        const double ex = e.x;
        const double ey = e.y;
        int best = -1;
        double best_sq = std::numeric_limits<double>::max();
        for (std::size_t d = 0; d < centers_.size(); ++d) {
            const double dx = ex - centers_[d].x;
            const double dy = ey - centers_[d].y;
            const double sq = dx * dx + dy * dy;
            if (sq < best_sq) {
                best_sq = sq;
                best = static_cast<int>(d);
            }
        }
        if (best >= 0 && best_sq > inner_sq && best_sq < outer_sq)
            assigned_[best].push_back({ex - centers_[best].x, ey - centers_[best].y});
    }

    thread_local std::vector<Vec2> nbr_centers;
    for (std::size_t d = 0; d < centers_.size(); ++d) {
        const auto& nbr = lattice_.neighbors[d];
        nbr_centers.clear();
        for (int j : nbr)
            nbr_centers.push_back(centers_[j]);
        next_centers_[d] = update_dot(centers_[d], assigned_[d], lattice_.radius, nbr_centers,
                                      lattice_.rest_dist_sq[d], cfg_);
    }
    centers_.swap(next_centers_);
}

TrackResult track(std::span<const EventFrame> frames, const DotLattice& lattice,
                  const TrackerConfig& cfg)
{
    DotTracker tracker(lattice, cfg);
    TrackResult res;
    res.positions.reserve(frames.size());
    for (const EventFrame& f : frames) {
        tracker.process_frame(f);
        res.positions.push_back(tracker.centers());
    }
    return res;
}

EndpointReport endpoint_consistency(std::span<const Vec2> final_centers,
                                    const DotLattice& lattice, double radius_px)
{
    EndpointReport rep;
    for (std::size_t d = 0; d < final_centers.size(); ++d)
        if ((final_centers[d] - lattice.rest[d]).norm() > radius_px)
            ++rep.lost_dots;
    rep.success = rep.lost_dots == 0;
    return rep;
}

} // namespace evetac
