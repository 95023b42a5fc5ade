#include "evetac/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "evetac/errors.hpp"
#include "evetac/scenes.hpp"

namespace evetac::grasp {

namespace {

constexpr double kGravity = 9.81;       // m/s^2
constexpr double kWidthGain = 0.05;     // mm/s of opening per controller unit
constexpr double kControllerDtS = 2e-3; // 500 Hz
constexpr double kDetectorDtS = 1e-3;   // 1 kHz
constexpr int kContactTicks = 5;        // penetration ticks that end approach

double clip(double v, double lo, double hi)
{
    return std::clamp(v, lo, hi);
}

} // namespace

double lift_step(GripperState& st, bool slip_now, const ControllerConfig& cfg)
{
    const double inc = slip_now ? cfg.lift_slip_inc : cfg.lift_noslip_inc;
    st.u_ff = clip(st.u_ff + inc, cfg.lift_clip_lo, cfg.lift_clip_hi);

    if (st.prev_slip && !slip_now) {
        // first stable width after a slip: latch; later latches may only tighten
        if (!st.x_ref_set || st.x_g < st.x_ref) {
            st.x_ref = st.x_g;
            st.x_ref_set = true;
        }
    }
    const double x_e = st.x_ref_set ? st.x_ref - st.x_g : 0.0;
    st.prev_slip = slip_now;
    return st.kp * (x_e + st.u_ff);
}

double balance_step(GripperState& st, bool slip_now, const ControllerConfig& cfg)
{
    if (!st.balance_slipped && slip_now) {
        st.balance_slipped = true;
        st.x_ref = st.x_g_prev; // minimal force reference: previous tick's width
        st.x_ref_set = true;
    }
    const double inc = slip_now ? cfg.balance_slip_inc : cfg.balance_noslip_inc;
    const double hi = st.balance_slipped ? cfg.balance_clip_hi_post : cfg.balance_clip_hi_pre;
    st.u_ff = clip(st.u_ff + inc, cfg.balance_clip_lo, hi);

    const double x_e = st.x_ref_set ? st.x_ref - st.x_g : 0.0;
    st.prev_slip = slip_now;
    return st.kp * (x_e + st.u_ff);
}

std::vector<GraspSimObject> grasp_object_set()
{
    std::vector<GraspSimObject> objs;
    // empty / filled bottle pair: identical except mass
    objs.push_back({248.0, 0.55, 2.0, 60.0, 45.0, 0.4});
    objs.push_back({550.0, 0.55, 2.0, 60.0, 45.0, 0.4});
    objs.push_back({150.0, 0.70, 2.5, 30.0, 35.0, 0.4});
    objs.push_back({341.0, 0.45, 1.8, 70.0, 50.0, 0.4});
    objs.push_back({236.0, 0.60, 2.2, 36.0, 40.0, 0.35});
    objs.push_back({420.0, 0.75, 3.0, 52.0, 45.0, 0.45});
    objs.push_back({190.0, 0.50, 1.5, 41.0, 38.0, 0.4});
    objs.push_back({520.0, 0.65, 2.6, 48.0, 42.0, 0.5});
    return objs;
}

namespace {

struct FullStackState {
    std::unique_ptr<GelSim> sim;
    std::unique_ptr<DotTracker> tracker;
    std::unique_ptr<SlipDetectorStream> stream;
    TransductionModel model;
};

GelScene full_stack_scene(std::uint64_t seed)
{
    // E-style cut gel without a scripted deformation; channels come from
    // the live drive
    GelScene s;
    s.name = "full-stack";
    s.seed = seed;
    s.grid.rows = 7;
    s.grid.cols = 8;
    s.window_region = default_window_region();
    s.contrast_threshold = 0.35;
    s.noise_rate = 2e-5;
    s.gain.mode = GainField::Mode::Gaussian;
    s.gain.center = {270.0, 240.0};
    s.gain.sigma = 200.0;
    s.gain.floor = 0.3;
    s.jitter.amplitude_px = 0.3;
    s.jitter.rate_hz = 45.0;
    return s;
}

} // namespace

EpisodeResult run_episode(const GraspSimObject& obj, const EpisodeConfig& cfg,
                          const FullStackDetector* detector)
{
    if (cfg.detector == DetectorKind::Model && detector == nullptr)
        throw InvalidInput("run_episode: model detector requested but none supplied");

    EpisodeResult res;
    ControllerConfig ctrl_cfg;
    GripperState st;
    st.kp = ctrl_cfg.kp;
    st.x_g = obj.width_mm + 8.0; // start open
    st.x_g_prev = st.x_g;

    FullStackState fs;
    if (cfg.detector == DetectorKind::Model) {
        fs.sim = std::make_unique<GelSim>(full_stack_scene(cfg.seed));
        fs.tracker = std::make_unique<DotTracker>(fs.sim->lattice(), TrackerConfig{});
        fs.stream = std::make_unique<SlipDetectorStream>(detector->model_cfg, detector->net);
        fs.model = detector->transduction;
    }

    const double mass_kg_base = obj.mass_g * 1e-3;
    double added_mass_kg = 0.0;
    double z_gripper = 0.0;       // mm
    double z_gripper_prev = 0.0;
    double slip_dist = 0.0;       // mm, object travel relative to the gripper
    bool contact_latched = false;
    int contact_ticks = 0;
    bool contact_lost = false;
    double u_c = 0.0;
    std::uint64_t slip_counter = 0; // monotone, shared with the controller
    std::uint64_t last_counter_read = 0;

    const std::int64_t approach_ticks = static_cast<std::int64_t>(cfg.approach_s * 1000.0);
    const std::int64_t lift_ticks = static_cast<std::int64_t>(cfg.lift_s * 1000.0);
    const std::int64_t balance_ticks = static_cast<std::int64_t>(cfg.balance_s * 1000.0);
    const std::int64_t total_ticks = approach_ticks + lift_ticks + balance_ticks;
    std::int64_t lift_start = -1;
    std::int64_t balance_start = -1;

    for (std::int64_t tick = 0; tick < total_ticks; ++tick) {
        // ---- phase schedule
        if (st.phase == Phase::Approach && (contact_latched || tick >= approach_ticks)) {
            if (!contact_latched)
                break; // approach timed out without contact
            st.phase = Phase::Lift;
            st.u_ff = 0.0;
            st.prev_slip = false;
            lift_start = tick;
            res.x_g_contact = st.x_g;
            res.min_x_g_lift = st.x_g;
        }
        if (st.phase == Phase::Lift && lift_start >= 0 && tick - lift_start >= lift_ticks) {
            st.phase = Phase::Balance;
            st.u_ff = 0.0;
            st.prev_slip = false;
            st.x_ref_set = false;
            st.balance_slipped = false;
            st.kp = ctrl_cfg.kp * cfg.balance_kp_scale;
            balance_start = tick;
        }
        if (balance_start >= 0 && tick - balance_start >= balance_ticks)
            break;

        // ---- physics at 1 kHz
        if (st.phase == Phase::Balance && cfg.perturb && balance_start >= 0 &&
            tick - balance_start >= static_cast<std::int64_t>(cfg.perturb->at_balance_s * 1000.0))
            added_mass_kg = cfg.perturb->added_mass_g * 1e-3;
        const double mass_kg = mass_kg_base + added_mass_kg;

        z_gripper_prev = z_gripper;
        if (st.phase != Phase::Approach && lift_start >= 0) {
            const double t_lift = static_cast<double>(tick - lift_start) * kDetectorDtS;
            z_gripper = cfg.lift_height_mm * std::min(1.0, t_lift / cfg.lift_ramp_s);
        }
        const double rise_mm_s = (z_gripper - z_gripper_prev) / kDetectorDtS;

        const double pen = std::max(0.0, obj.width_mm - st.x_g);
        const double normal_n = obj.stiffness_n_mm * pen;
        const double capacity_n = 2.0 * obj.friction * normal_n;
        if (contact_latched && pen <= 0.0)
            contact_lost = true;

        const double weight_n = mass_kg * kGravity;
        const double z_object = z_gripper - slip_dist;
        const bool airborne = z_object > 0.05;

        // slipping: airborne with too little grip, or the fingers sliding up
        // around an object still resting on the table
        double slip_speed_mm_s = 0.0;
        if (!contact_lost && st.phase != Phase::Approach) {
            if (airborne && weight_n > capacity_n)
                slip_speed_mm_s = (weight_n - capacity_n) / obj.slip_damping;
            else if (!airborne && weight_n > capacity_n && rise_mm_s > 0.0)
                slip_speed_mm_s = rise_mm_s;
        }
        const bool slipping = slip_speed_mm_s > 0.0;
        slip_dist += slip_speed_mm_s * kDetectorDtS;
        if (slip_dist > obj.grasp_height_mm)
            contact_lost = true;

        // ---- detector at 1 kHz
        bool slip_flag_tick = false;
        if (cfg.detector == DetectorKind::Oracle) {
            slip_flag_tick = slipping && !contact_lost;
            if (slip_flag_tick)
                ++slip_counter;
        } else {
            // transmitted tangential force shears the gel; slip rattles it
            const double held_n = slipping ? capacity_n : (airborne ? weight_n : 0.0);
            GelSim::LiveDrive drive;
            drive.shear = {0.0, fs.model.shear_px_per_n * held_n};
            drive.jitter_gain =
                slipping ? std::min(1.0, slip_speed_mm_s / fs.model.jitter_full_speed) : 0.0;
            drive.texture_pos = {0.0, slip_dist * fs.model.texture_px_per_mm};
            drive.slip = slipping;
            fs.sim->set_live_drive(drive);
            const EventFrame& frame = fs.sim->step();
            fs.tracker->process_frame(frame);
            const FeatureFrame feat = extract(frame, fs.tracker->centers(), fs.sim->lattice());
            slip_flag_tick = fs.stream->push(feat);
            slip_counter = fs.stream->counter().load(std::memory_order_relaxed);
        }

        // ---- controller at 500 Hz; slip = counter moved since the last read
        if (tick % 2 == 0) {
            const bool slip_since_last = slip_counter > last_counter_read;
            last_counter_read = slip_counter;

            switch (st.phase) {
            case Phase::Approach:
                u_c = contact_latched ? 0.0 : st.kp * ctrl_cfg.approach_uff;
                break;
            case Phase::Lift:
                u_c = cfg.open_loop ? 0.0 : lift_step(st, slip_since_last, ctrl_cfg);
                break;
            case Phase::Balance:
                u_c = cfg.open_loop ? 0.0 : balance_step(st, slip_since_last, ctrl_cfg);
                break;
            }
            st.x_g_prev = st.x_g;
        }

        // gripper actuation, zero-order hold between controller ticks
        st.x_g = std::clamp(st.x_g + kWidthGain * u_c * kDetectorDtS, 0.0, 120.0);

        if (st.phase == Phase::Approach && !contact_latched) {
            contact_ticks = pen > 0.0 ? contact_ticks + 1 : 0;
            if (contact_ticks >= kContactTicks) {
                contact_latched = true;
                res.contact_made = true;
            }
        }
        if (st.phase == Phase::Lift)
            res.min_x_g_lift = std::min(res.min_x_g_lift, st.x_g);

        if (cfg.keep_log && tick % 2 == 0)
            res.log.push_back({tick, st.x_g, st.x_ref_set ? st.x_ref : 0.0, st.u_ff, u_c,
                               slip_flag_tick ? 1 : 0, slip_dist});

        if (st.phase == Phase::Lift && lift_start >= 0 && tick - lift_start == lift_ticks - 1) {
            const double z_obj_end = z_gripper - slip_dist;
            res.lift_success = !contact_lost && z_obj_end > 0.5 * cfg.lift_height_mm &&
                               slip_dist < obj.grasp_height_mm;
        }
        if (contact_lost && st.phase != Phase::Approach)
            break;
    }

    res.balance_success = res.lift_success && !contact_lost;
    res.overall_success = res.lift_success && res.balance_success;
    res.x_g_end = st.x_g;
    res.x_g_balance_end = st.x_g;
    res.dwidth_total = res.x_g_end - res.x_g_contact;
    res.travel_mm = slip_dist;
    return res;
}

void write_episode_log(const std::string& path, const EpisodeResult& res)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out << "tick,x_g,x_ref,u_ff,u_c,slip,travel\n";
    for (const EpisodeLogRow& row : res.log)
        out << row.tick_ms << ',' << row.x_g << ',' << row.x_ref << ',' << row.u_ff << ','
            << row.u_c << ',' << row.slip << ',' << row.travel_mm << '\n';
}

} // namespace evetac::grasp
