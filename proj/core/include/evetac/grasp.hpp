#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "evetac/slip.hpp"

namespace evetac::grasp {

struct ControllerConfig {
    double kp = 50.0;
    double approach_uff = -2.0;
    double lift_slip_inc = -1.0;
    double lift_noslip_inc = 0.01;
    double lift_clip_lo = -5.0;
    double lift_clip_hi = 0.0;
    double balance_slip_inc = -2.0;
    double balance_noslip_inc = 0.01;
    double balance_clip_lo = -5.0;
    double balance_clip_hi_pre = 2.0;  // before the first balance slip
    double balance_clip_hi_post = 0.0; // after it
};

enum class Phase { Approach, Lift, Balance };

/*
 * Position-law controller state: u_c = K_p * (x_e + u_ff) with
 * x_e = x_ref - x_g once a reference is latched, zero before.
 */
struct GripperState {
    double x_g = 0.0;   // opening width, mm
    double x_ref = 0.0; // reference width once latched
    bool x_ref_set = false;
    double u_ff = 0.0;
    Phase phase = Phase::Approach;
    bool prev_slip = false;
    bool balance_slipped = false; // first balance slip happened
    double x_g_prev = 0.0;        // opening width at the previous controller tick
    double kp = 50.0;
};

// One 500 Hz controller step during the lifting phase; returns u_c.
double lift_step(GripperState& st, bool slip_now, const ControllerConfig& cfg);

// One 500 Hz controller step during the balancing phase; returns u_c.
double balance_step(GripperState& st, bool slip_now, const ControllerConfig& cfg);

struct GraspSimObject {
    double mass_g = 250.0;
    double friction = 0.6;          // per-finger Coulomb coefficient
    double stiffness_n_mm = 2.0;    // contact normal stiffness
    double width_mm = 45.0;         // object width between the fingers
    double grasp_height_mm = 40.0;  // slipping further than this loses the object
    double slip_damping = 0.4;      // N per mm/s of slip
};

enum class DetectorKind { Oracle, Model };

struct PerturbSpec {
    double added_mass_g = 0.0;
    double at_balance_s = 5.0; // drop time within the balance phase
};

struct EpisodeConfig {
    double approach_s = 3.0;
    double lift_s = 10.0;
    double balance_s = 20.0;
    double lift_height_mm = 100.0;
    double lift_ramp_s = 4.0;
    DetectorKind detector = DetectorKind::Oracle;
    std::optional<PerturbSpec> perturb;
    bool open_loop = false;    // keep the approach feedforward, ignore slip
    double balance_kp_scale = 1.0;
    std::uint64_t seed = 1;
    bool keep_log = false;
};

struct EpisodeLogRow {
    std::int64_t tick_ms = 0;
    double x_g = 0.0, x_ref = 0.0, u_ff = 0.0, u_c = 0.0;
    int slip = 0;
    double travel_mm = 0.0;
};

struct EpisodeResult {
    bool contact_made = false;
    bool lift_success = false;
    bool balance_success = false;
    bool overall_success = false;
    double x_g_contact = 0.0;     // opening width at first stable contact
    double x_g_end = 0.0;
    double dwidth_total = 0.0;    // x_g_end - x_g_contact
    double min_x_g_lift = 0.0;    // tightest grip during lift
    double x_g_balance_end = 0.0;
    double travel_mm = 0.0;       // total slip distance of the object
    std::vector<EpisodeLogRow> log;
};

/*
 * Transduction from gripper physics to the gel simulator in full-stack
 * mode: tangential load maps linearly to gel shear, slipping activates the
 * stick-slip jitter channel and drags the window texture along.
 */
struct TransductionModel {
    double shear_px_per_n = 1.6;   // gel shear per newton of tangential load
    double texture_px_per_mm = 3.0;
    double jitter_full_speed = 2.0; // mm/s of slip for full jitter gain
};

struct FullStackDetector {
    SlipModelConfig model_cfg;
    nn::Network net;
    TransductionModel transduction;
};

EpisodeResult run_episode(const GraspSimObject& obj, const EpisodeConfig& cfg,
                          const FullStackDetector* detector = nullptr);

// object set used by the grasp experiments; index 0/1 are the empty/filled
// bottle pair (248 g / 550 g, otherwise identical)
std::vector<GraspSimObject> grasp_object_set();

void write_episode_log(const std::string& path, const EpisodeResult& res);

} // namespace evetac::grasp
