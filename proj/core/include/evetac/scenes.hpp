#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evetac/gel_sim.hpp"

namespace evetac {

// (A) speaker-style vibration pressing on the gel; amplitude scaled with
// frequency so the event rate stays in a useful range at every tone
GelScene vibration_scene(double freq_hz, std::uint64_t seed = 1);

// (B) randomized-waypoint shear with a linear ground-truth force model;
// 9x7 = 63 dots like the full gel
GelScene shear_scene(std::uint64_t seed = 1, double force_noise_sigma = 0.3,
                     double duration_hint_s = 20.0);

// (C) grasp, perturb, slip, release; used for the data-rate comparison
GelScene grasp_slip_scene(std::uint64_t seed = 1);
// slip interval of scene C, seconds
std::pair<double, double> grasp_slip_window();

// (D) textured object sweeping across the gel while it shears; endpoint
// consistent ground truth
GelScene distractor_scene(std::uint64_t seed = 1);
double distractor_duration_s();

// (E) labeled slip trajectories with the cut-gel window region
struct SlipObjectParams {
    int id = 0;
    double shear_level_px = 6.0;   // pre-slip gel loading
    double slip_speed_px_ms = 1.0; // peak texture speed during slip
    double slip_relax_frac = 0.5;  // fraction of shear released while slipping
    double accordance_amp_px = 0.5;
    double jitter_amp_px = 0.35;
    double jitter_rate_hz = 45.0;
    int bars = 16;
    double bar_width = 7.0;
    double bar_pitch = 34.0;
    double gain_sigma = 200.0;
};

GelScene slip_trajectory_scene(const SlipObjectParams& obj, std::uint64_t seed);
double slip_trajectory_duration_s();

// Synthetic object sets: distinct parameter draws for the training world
// and the held-out evaluation world.
std::vector<SlipObjectParams> slip_object_set(int count, bool held_out, std::uint64_t seed = 7);

Rect default_window_region();
Rect default_marker_region();

// canonical named instances for the CLI
std::map<std::string, GelScene> scene_library();

// human-readable key/value scene files
std::string serialize_scene(const GelScene& scene);
GelScene parse_scene(const std::string& text);
void save_scene(const std::string& path, const GelScene& scene);
GelScene load_scene_file(const std::string& path);

} // namespace evetac
