#include "evetac/features.hpp"

#include <algorithm>
#include <cmath>

#include "evetac/errors.hpp"

namespace evetac {

FeatureFrame extract(const EventFrame& frame, std::span<const Vec2> centers,
                     const DotLattice& lattice, double assoc_radius)
{
    FeatureFrame f;
    f.t_end_us = frame.t_end_us;
    f.total_events = static_cast<std::uint32_t>(frame.events.size());
    const std::size_t n = centers.size();
    f.dot_events.assign(n, 0.0f);
    f.dot_positions.assign(centers.begin(), centers.end());
    f.dot_displacement.resize(n);
    for (std::size_t d = 0; d < n; ++d)
        f.dot_displacement[d] = static_cast<float>((centers[d] - lattice.rest[d]).norm());

    const double r_sq = assoc_radius * assoc_radius;
    for (const Event& e : frame.events) {
        const double ex = e.x;
        const double ey = e.y;
        for (std::size_t d = 0; d < n; ++d) {
            const double dx = ex - centers[d].x;
            const double dy = ey - centers[d].y;
            if (dx * dx + dy * dy < r_sq)
                f.dot_events[d] += 1.0f;
        }
    }
    return f;
}

HistorySpec history_spec(SlipConfigKind kind)
{
    switch (kind) {
    case SlipConfigKind::NoHist:
        return {true, true, 1, 1};
    case SlipConfigKind::Hist10:
        return {true, true, 10, 10};
    case SlipConfigKind::EventsOnlyHist10:
        return {false, true, 10, 10};
    case SlipConfigKind::DispOnlyHist10:
        return {true, false, 10, 10};
    case SlipConfigKind::Hist20:
        return {true, true, 20, 20};
    case SlipConfigKind::Hist50Down5:
        return {true, true, 50, 10};
    case SlipConfigKind::FastSlowHist50:
        return {true, true, 50, 15};
    case SlipConfigKind::BaselineImageHist10:
        return {false, false, 10, 0};
    }
    throw InvalidInput("unknown slip configuration");
}

int input_length(SlipConfigKind kind)
{
    const HistorySpec s = history_spec(kind);
    return s.per_feature_len * ((s.use_disp ? 1 : 0) + (s.use_events ? 1 : 0));
}

std::string to_string(SlipConfigKind kind)
{
    switch (kind) {
    case SlipConfigKind::NoHist: return "no-hist";
    case SlipConfigKind::Hist10: return "hist-10";
    case SlipConfigKind::EventsOnlyHist10: return "events-only-hist-10";
    case SlipConfigKind::DispOnlyHist10: return "disp-only-hist-10";
    case SlipConfigKind::Hist20: return "hist-20";
    case SlipConfigKind::Hist50Down5: return "hist-50-down-5";
    case SlipConfigKind::FastSlowHist50: return "fast-slow-hist-50";
    case SlipConfigKind::BaselineImageHist10: return "baseline-image-hist-10";
    }
    return "?";
}

SlipConfigKind slip_config_from_string(const std::string& name)
{
    for (SlipConfigKind k : {SlipConfigKind::NoHist, SlipConfigKind::Hist10,
                             SlipConfigKind::EventsOnlyHist10, SlipConfigKind::DispOnlyHist10,
                             SlipConfigKind::Hist20, SlipConfigKind::Hist50Down5,
                             SlipConfigKind::FastSlowHist50, SlipConfigKind::BaselineImageHist10})
        if (to_string(k) == name)
            return k;
    throw InvalidInput("unknown slip configuration: " + name);
}

FeatureHistory::FeatureHistory(int dots, int capacity)
    : dots_(dots), capacity_(capacity)
{
    disp_.assign(static_cast<std::size_t>(dots_) * capacity_, 0.0f);
    events_.assign(static_cast<std::size_t>(dots_) * capacity_, 0.0f);
}

void FeatureHistory::clear()
{
    filled_ = 0;
    head_ = 0;
}

void FeatureHistory::push(std::span<const float> disp, std::span<const float> events)
{
    if (static_cast<int>(disp.size()) != dots_ || static_cast<int>(events.size()) != dots_)
        throw InvalidInput("feature history: dot count mismatch");
    head_ = (head_ + 1) % capacity_;
    std::copy(disp.begin(), disp.end(), disp_.begin() + static_cast<std::size_t>(head_) * dots_);
    std::copy(events.begin(), events.end(),
              events_.begin() + static_cast<std::size_t>(head_) * dots_);
    filled_ = std::min(filled_ + 1, capacity_);
}

float FeatureHistory::disp_at(int lag, int dot) const
{
    const int slot = (head_ - lag % capacity_ + capacity_) % capacity_;
    return disp_[static_cast<std::size_t>(slot) * dots_ + dot];
}

float FeatureHistory::events_at(int lag, int dot) const
{
    const int slot = (head_ - lag % capacity_ + capacity_) % capacity_;
    return events_[static_cast<std::size_t>(slot) * dots_ + dot];
}

bool FeatureHistory::ready(SlipConfigKind kind) const
{
    return filled_ >= history_spec(kind).required_history;
}

void FeatureHistory::fill_input(SlipConfigKind kind, int dot, std::span<double> out) const
{
    const HistorySpec spec = history_spec(kind);
    if (kind == SlipConfigKind::BaselineImageHist10)
        throw InvalidInput("baseline image configuration has no per-dot inputs");
    if (filled_ < spec.required_history)
        throw InvalidInput("feature history: window too short for " + to_string(kind));
    if (static_cast<int>(out.size()) != input_length(kind))
        throw InvalidInput("feature history: output span has wrong length");
    fill_history_vector(kind, *this, dot, out);
}

} // namespace evetac
