#include "evetac/gel_sim.hpp"

#include <algorithm>
#include <cmath>

#include "evetac/errors.hpp"

namespace evetac {

namespace {

constexpr double kBackground = 1.0;
constexpr double kInterior = 0.05;
constexpr double kClamp = 0.01;
constexpr int kLutSize = 4096;
constexpr double kSubstepS = 1e-4;

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

// coverage of a pixel center at distance d from a disk of radius r,
// 1 px linear anti-aliasing ramp
inline double disk_coverage(double d, double r)
{
    return std::clamp(r + 0.5 - d, 0.0, 1.0);
}

inline double interval_coverage(double v, double lo, double hi)
{
    // coverage of a unit pixel centered at v against the slab [lo, hi]
    return std::clamp(std::min(v - lo, hi - v) + 0.5, 0.0, 1.0);
}

} // namespace

double Track::at(double t) const
{
    if (knots.empty())
        return 0.0;
    if (t <= knots.front().first)
        return knots.front().second;
    if (t >= knots.back().first)
        return knots.back().second;
    std::size_t i = 1;
    while (knots[i].first < t)
        ++i;
    const auto& [t0, v0] = knots[i - 1];
    const auto& [t1, v1] = knots[i];
    if (t1 <= t0)
        return v1;
    double u = (t - t0) / (t1 - t0);
    if (smooth)
        u = smoothstep(u);
    return v0 + (v1 - v0) * u;
}

double Track::velocity(double t) const
{
    if (knots.size() < 2 || t <= knots.front().first || t >= knots.back().first)
        return 0.0;
    std::size_t i = 1;
    while (knots[i].first < t)
        ++i;
    const auto& [t0, v0] = knots[i - 1];
    const auto& [t1, v1] = knots[i];
    if (t1 <= t0)
        return 0.0;
    const double u = (t - t0) / (t1 - t0);
    const double du = smooth ? 6.0 * u * (1.0 - u) : 1.0;
    return (v1 - v0) * du / (t1 - t0);
}

double GainField::at(const Vec2& rest) const
{
    if (mode == Mode::Uniform)
        return 1.0;
    const double d2 = (rest - center).norm_sq();
    return floor + (1.0 - floor) * std::exp(-d2 / (2.0 * sigma * sigma));
}

bool GelScene::slipping_at(double t) const
{
    for (const auto& [b, e] : slip_windows)
        if (t >= b && t < e)
            return true;
    return false;
}

void GelScene::validate() const
{
    if (contrast_threshold <= 0.0)
        throw InvalidScene("scene: contrast threshold must be positive");
    if (grid.rows < 1 || grid.cols < 1)
        throw InvalidScene("scene: empty dot grid");
    if (noise_rate < 0.0)
        throw InvalidScene("scene: negative noise rate");
    if (vibration.freq_hz >= 500.0 && !allow_super_nyquist)
        throw InvalidScene("scene: vibration above the 500 Hz Nyquist limit");

    const DotLattice lat = build_lattice(*this);
    const double margin = 2.0 * grid.radius;
    for (const Vec2& c : lat.rest) {
        if (c.x < margin || c.x > width - margin || c.y < margin || c.y > height - margin)
            throw InvalidScene("scene: dot grid does not fit the sensor with 2r margin");
        if (window_region && window_region->contains(c.x, c.y))
            throw InvalidScene("scene: dot inside the window region");
    }
}

DotLattice build_lattice(const GelScene& scene)
{
    DotLattice lat;
    lat.rows = scene.grid.rows;
    lat.cols = scene.grid.cols;
    lat.radius = scene.grid.radius;
    lat.spacing = scene.grid.spacing;

    double ox = scene.grid.origin_x;
    double oy = scene.grid.origin_y;
    if (std::isnan(ox)) {
        double usable = scene.width;
        if (scene.window_region && scene.window_region->x0 > scene.width / 2.0)
            usable = scene.window_region->x0; // window strip on the right
        ox = (usable - (lat.cols - 1) * lat.spacing) / 2.0;
    }
    if (std::isnan(oy))
        oy = (scene.height - (lat.rows - 1) * lat.spacing) / 2.0;

    lat.rest.reserve(static_cast<std::size_t>(lat.rows) * lat.cols);
    for (int r = 0; r < lat.rows; ++r)
        for (int c = 0; c < lat.cols; ++c)
            lat.rest.push_back({ox + c * lat.spacing, oy + r * lat.spacing});

    lat.neighbors.resize(lat.rest.size());
    lat.rest_dist_sq.resize(lat.rest.size());
    for (int r = 0; r < lat.rows; ++r) {
        for (int c = 0; c < lat.cols; ++c) {
            const int i = r * lat.cols + c;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0)
                        continue;
                    const int nr = r + dr;
                    const int nc = c + dc;
                    if (nr < 0 || nr >= lat.rows || nc < 0 || nc >= lat.cols)
                        continue;
                    const int j = nr * lat.cols + nc;
                    lat.neighbors[i].push_back(j);
                    lat.rest_dist_sq[i].push_back((lat.rest[i] - lat.rest[j]).norm_sq());
                }
            }
        }
    }
    return lat;
}

double GelSim::log_intensity_of_coverage(double cov)
{
    const double intensity = kBackground - (kBackground - kInterior) * std::clamp(cov, 0.0, 1.0);
    return std::log(std::max(intensity, kClamp));
}

GelSim::GelSim(const GelScene& scene) : scene_(scene)
{
    scene_.validate();
    lattice_ = build_lattice(scene_);

    const std::size_t n = static_cast<std::size_t>(scene_.width) * scene_.height;
    cur_log_.resize(n);
    ref_log_.resize(n);
    stamp_.assign(n, 0);

    cov_lut_.resize(kLutSize + 1);
    for (int i = 0; i <= kLutSize; ++i)
        cov_lut_[i] = static_cast<float>(log_intensity_of_coverage(static_cast<double>(i) / kLutSize));

    rng_.seed(scene_.seed * 0x9e3779b97f4a7c15ULL + 1);
    force_rng_.seed(scene_.seed * 0x9e3779b97f4a7c15ULL + 2);
    jitter_rng_.seed(scene_.seed * 0x9e3779b97f4a7c15ULL + 3);

    bins_x_ = (scene_.width >> kBinShift) + 1;
    bins_y_ = (scene_.height >> kBinShift) + 1;
    bins_.resize(static_cast<std::size_t>(bins_x_) * bins_y_);
    centers_now_.resize(lattice_.rest.size());
    centers_prev_.resize(lattice_.rest.size());

    bars_.clear();
    for (int b = 0; b < scene_.texture.bars; ++b) {
        BarGeom g;
        if (scene_.texture.horizontal) {
            g.x0 = scene_.texture.anchor.x;
            g.x1 = g.x0 + scene_.texture.bar_length;
            g.y0 = scene_.texture.anchor.y + b * scene_.texture.pitch;
            g.y1 = g.y0 + scene_.texture.bar_width;
        } else {
            g.y0 = scene_.texture.anchor.y;
            g.y1 = g.y0 + scene_.texture.bar_length;
            g.x0 = scene_.texture.anchor.x + b * scene_.texture.pitch;
            g.x1 = g.x0 + scene_.texture.bar_width;
        }
        bars_.push_back(g);
    }

    // initial render; reference levels start in equilibrium
    rebuild_bins(0.0);
    for (int y = 0; y < scene_.height; ++y)
        for (int x = 0; x < scene_.width; ++x) {
            const double cov = coverage_at(x, y, 0.0);
            const float l = cov_lut_[static_cast<int>(cov * kLutSize + 0.5)];
            cur_log_[static_cast<std::size_t>(y) * scene_.width + x] = l;
            ref_log_[static_cast<std::size_t>(y) * scene_.width + x] = l;
        }
}

void GelSim::set_live_drive(const LiveDrive& d)
{
    if (!live_mode_) {
        live_mode_ = true;
        live_prev_ = d;
    } else {
        live_prev_ = live_cur_;
    }
    live_cur_ = d;
}

double GelSim::live_blend(double t) const
{
    return std::clamp(t * 1000.0 - static_cast<double>(tick_), 0.0, 1.0);
}

Vec2 GelSim::texture_pos_at(double t) const
{
    if (live_mode_) {
        const double u = live_blend(t);
        return live_prev_.texture_pos + (live_cur_.texture_pos - live_prev_.texture_pos) * u;
    }
    return {scene_.texture.pos_x.at(t), scene_.texture.pos_y.at(t)};
}

Vec2 GelSim::shear_at(double t) const
{
    if (live_mode_) {
        const double u = live_blend(t);
        return live_prev_.shear + (live_cur_.shear - live_prev_.shear) * u;
    }
    return {scene_.shear_x.at(t), scene_.shear_y.at(t)};
}

Vec2 GelSim::dot_center_at(int dot, double t) const
{
    const Vec2 shear = shear_at(t) + jitter_now_;
    Vec2 disp = shear * scene_.gain.at(lattice_.rest[dot]);

    const VibrationSpec& vib = scene_.vibration;
    if (vib.freq_hz > 0.0 && vib.amplitude_px != 0.0) {
        double env = vib.envelope.empty() ? 1.0 : vib.envelope.at(t);
        if (env != 0.0) {
            double phase = t * vib.freq_hz;
            phase -= std::floor(phase);
            double wave;
            if (phase < vib.duty)
                wave = -1.0 + 2.0 * phase / vib.duty;
            else
                wave = 1.0 - 2.0 * (phase - vib.duty) / (1.0 - vib.duty);
            disp += vib.direction * (vib.amplitude_px * env * wave);
        }
    }
    return lattice_.rest[dot] + disp;
}

void GelSim::advance_jitter(double t_prev, double t)
{
    const JitterSpec& j = scene_.jitter;
    double gain = live_mode_ ? live_cur_.jitter_gain
                             : (j.envelope.empty() ? (j.amplitude_px > 0.0 ? 1.0 : 0.0)
                                                   : j.envelope.at(t));
    if (j.amplitude_px <= 0.0)
        gain = 0.0;
    const double dt = t - t_prev;
    if (gain > 0.0 && j.rate_hz > 0.0) {
        std::poisson_distribution<int> kicks(j.rate_hz * dt);
        std::normal_distribution<double> amp(0.0, j.amplitude_px);
        const int n = kicks(jitter_rng_);
        for (int k = 0; k < n; ++k)
            jitter_target_ = {amp(jitter_rng_) * gain, amp(jitter_rng_) * gain};
    } else {
        jitter_target_ = {};
    }
    const double a = std::clamp(j.decay_hz * dt, 0.0, 1.0);
    jitter_now_ += (jitter_target_ - jitter_now_) * a;
}

void GelSim::rebuild_bins(double t)
{
    for (auto& b : bins_)
        b.clear();
    const double reach = lattice_.radius + 2.0;
    for (int d = 0; d < lattice_.count(); ++d) {
        const Vec2 c = dot_center_at(d, t);
        centers_now_[d] = c;
        const int bx0 = std::max(0, static_cast<int>(c.x - reach)) >> kBinShift;
        const int bx1 = std::min(scene_.width - 1, static_cast<int>(c.x + reach)) >> kBinShift;
        const int by0 = std::max(0, static_cast<int>(c.y - reach)) >> kBinShift;
        const int by1 = std::min(scene_.height - 1, static_cast<int>(c.y + reach)) >> kBinShift;
        for (int by = by0; by <= by1; ++by)
            for (int bx = bx0; bx <= bx1; ++bx)
                bins_[static_cast<std::size_t>(by) * bins_x_ + bx].push_back(d);
    }
}

double GelSim::coverage_at(double px, double py, double t) const
{
    double cov = 0.0;
    const int bx = std::clamp(static_cast<int>(px), 0, scene_.width - 1) >> kBinShift;
    const int by = std::clamp(static_cast<int>(py), 0, scene_.height - 1) >> kBinShift;
    for (int d : bins_[static_cast<std::size_t>(by) * bins_x_ + bx]) {
        const Vec2& c = centers_now_[d];
        const double dist = std::hypot(px - c.x, py - c.y);
        cov = std::max(cov, disk_coverage(dist, lattice_.radius));
    }

    if (!bars_.empty()) {
        const TextureSpec& tex = scene_.texture;
        if (!tex.clip || tex.clip->contains(px, py)) {
            const Vec2 pose = texture_pos_at(t);
            const double lx = px - pose.x;
            const double ly = py - pose.y;
            for (const BarGeom& g : bars_) {
                const double cx = interval_coverage(lx, g.x0, g.x1);
                if (cx <= 0.0)
                    continue;
                const double cy = interval_coverage(ly, g.y0, g.y1);
                cov = std::max(cov, cx * cy);
            }
        }
    }
    return cov;
}

double GelSim::log_intensity_at(int px, int py) const
{
    const double t = static_cast<double>(tick_) * 1e-3;
    return cov_lut_[static_cast<int>(coverage_at(px, py, t) * kLutSize + 0.5)];
}

void GelSim::touch_pixel(int px, int py, double t_s, std::int64_t t_us)
{
    if (px < 0 || px >= scene_.width || py < 0 || py >= scene_.height)
        return;
    const std::size_t idx = static_cast<std::size_t>(py) * scene_.width + px;
    if (stamp_[idx] == stamp_now_)
        return;
    stamp_[idx] = stamp_now_;

    const double cov = coverage_at(px, py, t_s);
    const float new_log = cov_lut_[static_cast<int>(cov * kLutSize + 0.5)];
    if (new_log == cur_log_[idx])
        return;
    cur_log_[idx] = new_log;

    const float c = static_cast<float>(scene_.contrast_threshold);
    float ref = ref_log_[idx];
    while (new_log - ref >= c) {
        ref += c;
        frame_.events.push_back({t_us, static_cast<std::uint16_t>(px),
                                 static_cast<std::uint16_t>(py), +1});
    }
    while (ref - new_log >= c) {
        ref -= c;
        frame_.events.push_back({t_us, static_cast<std::uint16_t>(px),
                                 static_cast<std::uint16_t>(py), -1});
    }
    ref_log_[idx] = ref;
}

void GelSim::mark_dot_band(const Vec2& c_old, const Vec2& c_new, double t_s, std::int64_t t_us)
{
    const Vec2 mid = (c_old + c_new) * 0.5;
    const double m = (c_new - c_old).norm() * 0.5;
    const double outer = lattice_.radius + 0.5 + m + 0.51;
    const double inner = std::max(0.0, lattice_.radius - 0.5 - m - 0.51);
    const int y0 = std::max(0, static_cast<int>(std::ceil(mid.y - outer)));
    const int y1 = std::min(scene_.height - 1, static_cast<int>(std::floor(mid.y + outer)));
    for (int y = y0; y <= y1; ++y) {
        const double dy = y - mid.y;
        const double q = outer * outer - dy * dy;
        if (q < 0.0)
            continue;
        const double half_out = std::sqrt(q);
        const double qi = inner * inner - dy * dy;
        const double half_in = qi > 0.0 ? std::sqrt(qi) : 0.0;
        if (half_in <= 0.5) {
            const int x0 = static_cast<int>(std::ceil(mid.x - half_out));
            const int x1 = static_cast<int>(std::floor(mid.x + half_out));
            for (int x = x0; x <= x1; ++x)
                touch_pixel(x, y, t_s, t_us);
        } else {
            int x0 = static_cast<int>(std::ceil(mid.x - half_out));
            int x1 = static_cast<int>(std::floor(mid.x - half_in));
            for (int x = x0; x <= x1; ++x)
                touch_pixel(x, y, t_s, t_us);
            x0 = static_cast<int>(std::ceil(mid.x + half_in));
            x1 = static_cast<int>(std::floor(mid.x + half_out));
            for (int x = x0; x <= x1; ++x)
                touch_pixel(x, y, t_s, t_us);
        }
    }
}

void GelSim::mark_rect(double x0, double y0, double x1, double y1, double t_s, std::int64_t t_us)
{
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int ix1 = std::min(scene_.width - 1, static_cast<int>(std::ceil(x1)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int iy1 = std::min(scene_.height - 1, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y <= iy1; ++y)
        for (int x = ix0; x <= ix1; ++x)
            touch_pixel(x, y, t_s, t_us);
}

void GelSim::substep(double t_prev_s, double t_s, std::int64_t t_us)
{
    ++stamp_now_;

    centers_prev_.swap(centers_now_);
    const Vec2 tex_old = texture_pos_at(t_prev_s);
    advance_jitter(t_prev_s, t_s);
    rebuild_bins(t_s);

    for (int d = 0; d < lattice_.count(); ++d) {
        const Vec2& a = centers_prev_[d];
        const Vec2& b = centers_now_[d];
        if (a.x != b.x || a.y != b.y)
            mark_dot_band(a, b, t_s, t_us);
    }

    if (!bars_.empty()) {
        const Vec2 tex_new = texture_pos_at(t_s);
        if (tex_new.x != tex_old.x || tex_new.y != tex_old.y) {
            const TextureSpec& tex = scene_.texture;
            for (const BarGeom& g : bars_) {
                double x0 = std::min(g.x0 + tex_old.x, g.x0 + tex_new.x) - 1.0;
                double x1 = std::max(g.x1 + tex_old.x, g.x1 + tex_new.x) + 1.0;
                double y0 = std::min(g.y0 + tex_old.y, g.y0 + tex_new.y) - 1.0;
                double y1 = std::max(g.y1 + tex_old.y, g.y1 + tex_new.y) + 1.0;
                if (tex.clip) {
                    x0 = std::max(x0, tex.clip->x0 - 1.0);
                    x1 = std::min(x1, tex.clip->x1 + 1.0);
                    y0 = std::max(y0, tex.clip->y0 - 1.0);
                    y1 = std::min(y1, tex.clip->y1 + 1.0);
                }
                if (x0 <= x1 && y0 <= y1)
                    mark_rect(x0, y0, x1, y1, t_s, t_us);
            }
        }
    }

    // uniform spurious events; each steps the reference like a real crossing
    if (scene_.noise_rate > 0.0) {
        const double lambda = scene_.noise_rate * static_cast<double>(scene_.width) *
                              scene_.height * kSubstepS;
        std::poisson_distribution<int> dist(lambda);
        const int n = dist(rng_);
        for (int i = 0; i < n; ++i) {
            const int px = static_cast<int>(rng_() % scene_.width);
            const int py = static_cast<int>(rng_() % scene_.height);
            const std::int8_t p = (rng_() & 1) ? 1 : -1;
            const std::size_t idx = static_cast<std::size_t>(py) * scene_.width + px;
            ref_log_[idx] += static_cast<float>(p * scene_.contrast_threshold);
            frame_.events.push_back({t_us, static_cast<std::uint16_t>(px),
                                     static_cast<std::uint16_t>(py), p});
        }
    }
}

const EventFrame& GelSim::step()
{
    frame_.events.clear();
    const std::int64_t t_start_us = tick_ * kTickUs;
    frame_.t_end_us = t_start_us + kTickUs;

    for (int s = 0; s < kSubsteps; ++s) {
        const double t_prev = (tick_ * 1e-3) + s * kSubstepS;
        const double t_now = t_prev + kSubstepS;
        const std::int64_t t_us = t_start_us + (s + 1) * 100 - 1;
        substep(t_prev, t_now, t_us);
    }

    const double t_end_s = (tick_ + 1) * 1e-3;

    truth_.t_end_us = frame_.t_end_us;
    truth_.dot_centers = centers_now_;
    truth_.texture_pos = texture_pos_at(t_end_s);
    truth_.slip = live_mode_ ? live_cur_.slip : scene_.slipping_at(t_end_s);

    Vec2 mean_disp;
    for (int d = 0; d < lattice_.count(); ++d)
        mean_disp += centers_now_[d] - lattice_.rest[d];
    if (lattice_.count() > 0)
        mean_disp = mean_disp * (1.0 / lattice_.count());
    std::normal_distribution<double> noise(0.0, scene_.force.noise_sigma);
    truth_.fx = scene_.force.k[0][0] * mean_disp.x + scene_.force.k[0][1] * mean_disp.y;
    truth_.fy = scene_.force.k[1][0] * mean_disp.x + scene_.force.k[1][1] * mean_disp.y;
    if (scene_.force.noise_sigma > 0.0) {
        truth_.fx += noise(force_rng_);
        truth_.fy += noise(force_rng_);
    }
    ++tick_;
    return frame_;
}

SimResult simulate(const GelScene& scene, double duration_s)
{
    if (duration_s <= 0.0)
        throw InvalidInput("simulate: duration must be positive");
    SimResult res;
    GelSim sim(scene);
    res.lattice = sim.lattice();
    res.recording.width = scene.width;
    res.recording.height = scene.height;
    const std::int64_t ticks = static_cast<std::int64_t>(std::llround(duration_s * 1000.0));
    res.recording.frames.reserve(ticks);
    res.truth.ticks.reserve(ticks);
    for (std::int64_t i = 0; i < ticks; ++i) {
        res.recording.frames.push_back(sim.step());
        res.truth.ticks.push_back(sim.truth());
    }
    return res;
}

void simulate_stream(const GelScene& scene, double duration_s, const FrameSink& sink)
{
    if (duration_s <= 0.0)
        throw InvalidInput("simulate: duration must be positive");
    GelSim sim(scene);
    const std::int64_t ticks = static_cast<std::int64_t>(std::llround(duration_s * 1000.0));
    for (std::int64_t i = 0; i < ticks; ++i) {
        const EventFrame& f = sim.step();
        sink(f, sim.truth());
    }
}

} // namespace evetac
