#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "evetac/codec.hpp"
#include "evetac/event.hpp"
#include "evetac/geometry.hpp"

namespace evetac {

/*
 * Scalar timeline: piecewise interpolation between (time, value) knots,
 * smoothstep by default so velocities start and end at zero. Constant
 * extrapolation outside the knot range; an empty track reads as 0.
 */
struct Track {
    std::vector<std::pair<double, double>> knots; // (t seconds, value)
    bool smooth = true;

    double at(double t) const;
    double velocity(double t) const; // d value / dt
    bool empty() const { return knots.empty(); }
    void add(double t, double v) { knots.emplace_back(t, v); }
};

struct GridSpec {
    int rows = 7;
    int cols = 8;
    double radius = 15.0;  // px, mean dot radius
    double spacing = 55.0; // px between neighboring centers
    // Lattice origin (top-left dot center). NaN = centered automatically in
    // the sensor area left of the window region.
    double origin_x = std::nan("");
    double origin_y = std::nan("");

    int count() const { return rows * cols; }
};

// Asymmetric periodic displacement added to every dot. The waveform rises
// for `duty` of the period and falls for the rest, so the event rate carries
// the fundamental rather than its double.
struct VibrationSpec {
    double freq_hz = 0.0;
    double amplitude_px = 0.0;
    double duty = 0.3;
    Vec2 direction{0.0, 1.0};
    Track envelope; // 0..1, empty = always on
};

// Dark parallel bars rigidly attached to a moving pose; models object
// texture seen through the window region or a distractor sliding over
// the gel.
struct TextureSpec {
    int bars = 0;
    double bar_width = 6.0;
    double bar_length = 90.0;
    double pitch = 18.0;     // center-to-center distance between bars
    bool horizontal = true;  // long side along x, stacked along y
    Vec2 anchor{0.0, 0.0};   // bar-frame origin when pose is (0,0)
    std::optional<Rect> clip;
    Track pos_x, pos_y;
};

// Seeded micro-displacement bursts (stick-slip rattle) gated by an envelope.
struct JitterSpec {
    double amplitude_px = 0.0;
    double rate_hz = 0.0; // expected kicks per second while enabled
    double decay_hz = 60.0;
    Track envelope;
};

struct ForceModel {
    double k[2][2] = {{0.0, 0.0}, {0.0, 0.0}}; // F = K * mean displacement
    double noise_sigma = 0.0;                  // N, per-axis Gaussian
};

// Per-dot attenuation of the shear/jitter field (contact localization).
struct GainField {
    enum class Mode { Uniform, Gaussian };
    Mode mode = Mode::Uniform;
    Vec2 center{320.0, 240.0};
    double sigma = 200.0;
    double floor = 0.0;

    double at(const Vec2& rest) const;
};

struct GelScene {
    std::string name;
    int width = kSensorWidth;
    int height = kSensorHeight;
    GridSpec grid;
    double contrast_threshold = 0.2; // C, log-intensity units
    double noise_rate = 1e-5;        // spurious events / pixel / s
    std::uint64_t seed = 1;
    std::optional<Rect> window_region;
    bool allow_super_nyquist = false;

    Track shear_x, shear_y; // common dot displacement field, px
    VibrationSpec vibration;
    JitterSpec jitter;
    TextureSpec texture;
    GainField gain;
    std::vector<std::pair<double, double>> slip_windows; // [begin, end) seconds
    ForceModel force;

    bool slipping_at(double t) const;
    void validate() const; // throws InvalidScene
};

struct DotLattice {
    int rows = 0;
    int cols = 0;
    double radius = 0.0;
    double spacing = 0.0;
    std::vector<Vec2> rest;                  // rows*cols, row-major
    std::vector<std::vector<int>> neighbors; // 8-connectivity, border-truncated
    std::vector<std::vector<double>> rest_dist_sq;

    int count() const { return static_cast<int>(rest.size()); }
};

DotLattice build_lattice(const GelScene& scene);

struct GroundTruthTick {
    std::int64_t t_end_us = 0;
    std::vector<Vec2> dot_centers;
    double fx = 0.0, fy = 0.0;
    bool slip = false;
    Vec2 texture_pos;
};

struct GroundTruth {
    std::vector<GroundTruthTick> ticks;
};

/*
 * Event generation follows the per-pixel log-brightness threshold model:
 * a pixel keeps a reference log intensity, emits an event whenever the
 * rendered log intensity departs from it by the contrast threshold, and
 * steps the reference by one threshold per event. Each 1 ms tick is
 * simulated in 10 substeps of 100 us; event timestamps are substep times.
 */
class GelSim {
public:
    static constexpr int kSubsteps = 10;

    explicit GelSim(const GelScene& scene);

    // Advances one 1 ms tick. The returned frame stays valid until the next
    // call. truth() describes the same tick.
    const EventFrame& step();
    const GroundTruthTick& truth() const { return truth_; }

    const DotLattice& lattice() const { return lattice_; }
    const GelScene& scene() const { return scene_; }
    std::int64_t current_tick() const { return tick_; }

    // External drive for closed-loop use: when enabled it replaces the
    // scripted shear/texture/slip channels. Call once before every step();
    // values are interpolated linearly across the tick.
    struct LiveDrive {
        Vec2 shear;
        double jitter_gain = 0.0;
        Vec2 texture_pos;
        bool slip = false;
    };
    void set_live_drive(const LiveDrive& d);

    // Rendered log intensity at the current sim time; independent re-render,
    // used by verification code.
    double log_intensity_at(int px, int py) const;
    float reference_level(int px, int py) const
    {
        return ref_log_[static_cast<std::size_t>(py) * scene_.width + px];
    }

    static double log_intensity_of_coverage(double cov);

private:
    struct BarGeom {
        double x0, y0, x1, y1; // in texture frame
    };

    Vec2 dot_center_at(int dot, double t) const;
    Vec2 texture_pos_at(double t) const;
    Vec2 shear_at(double t) const;
    double live_blend(double t) const;
    double coverage_at(double px, double py, double t) const; // dots + texture
    void touch_pixel(int px, int py, double t_s, std::int64_t t_us);
    void mark_dot_band(const Vec2& c_old, const Vec2& c_new, double t_s, std::int64_t t_us);
    void mark_rect(double x0, double y0, double x1, double y1, double t_s, std::int64_t t_us);
    void substep(double t_prev_s, double t_s, std::int64_t t_us);
    void rebuild_bins(double t);
    void advance_jitter(double t_prev, double t);

    GelScene scene_;
    DotLattice lattice_;
    std::vector<float> cur_log_;   // rendered log intensity per pixel
    std::vector<float> ref_log_;   // per-pixel reference level
    std::vector<std::uint32_t> stamp_;
    std::uint32_t stamp_now_ = 0;
    std::vector<float> cov_lut_;
    std::vector<BarGeom> bars_;
    std::int64_t tick_ = 0;
    EventFrame frame_;
    GroundTruthTick truth_;
    bool live_mode_ = false;
    LiveDrive live_prev_;
    LiveDrive live_cur_;
    std::mt19937_64 rng_;
    std::mt19937_64 force_rng_;
    Vec2 jitter_now_;
    Vec2 jitter_target_;
    std::mt19937_64 jitter_rng_;

    // coarse spatial bins over dots, rebuilt per substep
    static constexpr int kBinShift = 6; // 64 px bins
    int bins_x_ = 0, bins_y_ = 0;
    std::vector<std::vector<int>> bins_;
    std::vector<Vec2> centers_now_;
    std::vector<Vec2> centers_prev_;
};

struct SimResult {
    Recording recording;
    GroundTruth truth;
    DotLattice lattice;
};

using FrameSink = std::function<void(const EventFrame&, const GroundTruthTick&)>;

SimResult simulate(const GelScene& scene, double duration_s);
void simulate_stream(const GelScene& scene, double duration_s, const FrameSink& sink);

} // namespace evetac
