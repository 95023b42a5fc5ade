#pragma once

#include <span>
#include <vector>

#include "evetac/event.hpp"
#include "evetac/gel_sim.hpp"
#include "evetac/geometry.hpp"

namespace evetac {

struct TrackerConfig {
    double ring_inner = 10.0; // px
    double ring_outer = 20.0; // px
    double step_size = 0.003; // alpha
    double reg_weight = 0.001; // w_dist, before the 8/|neighbors| scaling
    int min_events = 10;      // update only when strictly more events than this

    void validate() const;
};

/*
 * Assigns each event of the frame to the dot whose ring it falls into.
 * An event belongs to its nearest center only and must satisfy
 * inner < ||x - c|| < outer. Returned positions are dot-relative.
 */
std::vector<std::vector<Vec2>> assign_events(const EventFrame& frame,
                                             std::span<const Vec2> centers,
                                             const TrackerConfig& cfg);

/*
 * One gradient step for a single dot. rel_events are dot-relative event
 * locations inside the ring; neighbor data comes from the lattice. Events
 * exactly at the center are skipped. With reg_weight = 0 this is the plain
 * event-sum update.
 */
Vec2 update_dot(const Vec2& center, std::span<const Vec2> rel_events, double radius,
                std::span<const Vec2> neighbor_centers,
                std::span<const double> neighbor_rest_dist_sq,
                const TrackerConfig& cfg);

class DotTracker {
public:
    DotTracker(const DotLattice& lattice, const TrackerConfig& cfg);

    // Consumes one 1 ms frame: ring assignment plus one update per dot.
    // Neighbor positions are read double-buffered from before the tick.
    void process_frame(const EventFrame& frame);

    const std::vector<Vec2>& centers() const { return centers_; }
    const DotLattice& lattice() const { return lattice_; }
    const TrackerConfig& config() const { return cfg_; }
    void reset();

private:
    DotLattice lattice_;
    TrackerConfig cfg_;
    std::vector<Vec2> centers_;
    std::vector<Vec2> next_centers_;
    std::vector<std::vector<Vec2>> assigned_;
    std::int64_t last_t_us_ = -1;
};

struct TrackResult {
    std::vector<std::vector<Vec2>> positions; // per tick, per dot
};

TrackResult track(std::span<const EventFrame> frames, const DotLattice& lattice,
                  const TrackerConfig& cfg);

/*
 * Endpoint-consistency check: a trajectory is successful when every dot
 * ends within `radius_px` of its rest position. Also reports how many
 * dots ended outside it (lost track).
 */
struct EndpointReport {
    bool success = false;
    int lost_dots = 0;
};

EndpointReport endpoint_consistency(std::span<const Vec2> final_centers,
                                    const DotLattice& lattice, double radius_px = 20.0);

} // namespace evetac
