#include "evetac/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "evetac/errors.hpp"

namespace evetac {

namespace {

constexpr double kWindowX0 = 540.0;

} // namespace

Rect default_window_region()
{
    return {kWindowX0, 0.0, static_cast<double>(kSensorWidth), static_cast<double>(kSensorHeight)};
}

Rect default_marker_region()
{
    return {0.0, 0.0, kWindowX0, static_cast<double>(kSensorHeight)};
}

GelScene vibration_scene(double freq_hz, std::uint64_t seed)
{
    GelScene s;
    s.name = "vibration-" + std::to_string(static_cast<int>(freq_hz));
    s.seed = seed;
    s.grid.rows = 3;
    s.grid.cols = 3;
    s.grid.spacing = 80.0;
    s.contrast_threshold = 0.2;
    s.noise_rate = 1e-5;
    s.vibration.freq_hz = freq_hz;
    // keep the average event rate roughly frequency independent
    s.vibration.amplitude_px = std::clamp(7.7 / freq_hz, 0.012, 0.6);
    s.vibration.duty = 0.3;
    s.vibration.direction = {0.0, 1.0};
    if (freq_hz >= 500.0)
        s.allow_super_nyquist = true;
    return s;
}

GelScene shear_scene(std::uint64_t seed, double force_noise_sigma, double duration_hint_s)
{
    GelScene s;
    s.name = "shear";
    s.seed = seed;
    s.grid.rows = 7;
    s.grid.cols = 9; // full gel, 63 dots
    s.contrast_threshold = 0.4;
    s.noise_rate = 1e-5;
    s.force.k[0][0] = 0.8;
    s.force.k[1][1] = 0.75;
    s.force.noise_sigma = force_noise_sigma;

    std::mt19937_64 rng(seed * 77 + 5);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
    std::uniform_real_distribution<double> mag(2.0, 12.0);
    std::uniform_real_distribution<double> dwell(0.10, 0.25);

    s.shear_x.add(0.0, 0.0);
    s.shear_y.add(0.0, 0.0);
    double t = 0.3;
    while (t < duration_hint_s + 1.0) {
        const double a = angle(rng);
        const double m = mag(rng);
        const double tx = m * std::cos(a);
        const double ty = m * std::sin(a);
        s.shear_x.add(t, tx);
        s.shear_y.add(t, ty);
        const double hold = dwell(rng);
        s.shear_x.add(t + hold, tx);
        s.shear_y.add(t + hold, ty);
        t += hold + 0.15; // 150 ms transition to the next waypoint
    }
    return s;
}

std::pair<double, double> grasp_slip_window()
{
    return {3.5, 4.0};
}

GelScene grasp_slip_scene(std::uint64_t seed)
{
    GelScene s;
    s.name = "grasp-slip";
    s.seed = seed;
    s.grid.rows = 7;
    s.grid.cols = 8; // cut gel
    s.window_region = default_window_region();
    s.contrast_threshold = 0.8;
    s.noise_rate = 1e-5;

    s.gain.mode = GainField::Mode::Gaussian;
    s.gain.center = {270.0, 240.0};
    s.gain.sigma = 220.0;
    s.gain.floor = 0.3;

    // grasp press
    s.shear_y.add(0.95, 0.0);
    s.shear_y.add(1.15, 3.0);
    // perturbation wiggles while held
    s.vibration.freq_hz = 40.0;
    s.vibration.amplitude_px = 0.12;
    s.vibration.duty = 0.3;
    s.vibration.envelope.add(2.15, 0.0);
    s.vibration.envelope.add(2.25, 1.0);
    s.vibration.envelope.add(2.7, 1.0);
    s.vibration.envelope.add(2.8, 0.0);
    // slip: object texture slides, gel relaxes most of the way
    const auto [slip_begin, slip_end] = grasp_slip_window();
    s.shear_y.add(slip_begin, 3.0);
    s.shear_y.add(slip_end, 0.6);
    s.shear_y.add(4.3, 0.0);
    s.slip_windows.emplace_back(slip_begin, slip_end);
    s.jitter.amplitude_px = 0.25;
    s.jitter.rate_hz = 35.0;
    s.jitter.envelope.add(slip_begin, 0.0);
    s.jitter.envelope.add(slip_begin + 0.02, 1.0);
    s.jitter.envelope.add(slip_end - 0.05, 1.0);
    s.jitter.envelope.add(slip_end, 0.0);

    s.texture.bars = 14;
    s.texture.bar_width = 7.0;
    s.texture.pitch = 36.0;
    s.texture.bar_length = 92.0;
    s.texture.anchor = {kWindowX0 + 4.0, -260.0};
    s.texture.clip = default_window_region();
    s.texture.pos_y.add(slip_begin, 0.0);
    s.texture.pos_y.add(slip_end, 56.0);
    return s;
}

double distractor_duration_s()
{
    return 2.6;
}

GelScene distractor_scene(std::uint64_t seed)
{
    GelScene s;
    s.name = "distractor";
    s.seed = seed;
    s.grid.rows = 7;
    s.grid.cols = 9;
    s.contrast_threshold = 0.4;
    s.noise_rate = 1e-5;

    std::mt19937_64 rng(seed * 131 + 17);
    std::uniform_real_distribution<double> mag(3.0, 6.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
    std::uniform_real_distribution<double> y_off(-40.0, 40.0);
    std::uniform_real_distribution<double> speed_jit(0.85, 1.15);

    // gentle shear that returns to rest at the end
    const double a0 = angle(rng);
    const double m0 = mag(rng);
    s.shear_x.add(0.30, 0.0);
    s.shear_x.add(0.55, m0 * std::cos(a0));
    s.shear_y.add(0.30, 0.0);
    s.shear_y.add(0.55, m0 * std::sin(a0));
    const double a1 = angle(rng);
    const double m1 = mag(rng);
    s.shear_x.add(1.30, m1 * std::cos(a1));
    s.shear_y.add(1.30, m1 * std::sin(a1));
    s.shear_x.add(2.30, 0.0);
    s.shear_y.add(2.30, 0.0);

    // two dark bars sweeping over the grid and back
    s.texture.bars = 2;
    s.texture.bar_width = 9.0;
    s.texture.pitch = 46.0;
    s.texture.bar_length = 400.0;
    s.texture.horizontal = false;
    s.texture.anchor = {0.0, 40.0 + y_off(rng)};
    const double sweep = speed_jit(rng);
    s.texture.pos_x.smooth = false;
    s.texture.pos_x.add(0.35, -120.0);
    s.texture.pos_x.add(0.35 + 1.0 / sweep, 700.0);
    s.texture.pos_x.add(1.45, 700.0);
    s.texture.pos_x.add(1.45 + 1.0 / sweep, -120.0);
    return s;
}

double slip_trajectory_duration_s()
{
    return 1.15;
}

GelScene slip_trajectory_scene(const SlipObjectParams& obj, std::uint64_t seed)
{
    GelScene s;
    s.name = "slip-obj" + std::to_string(obj.id);
    s.seed = seed;
    s.grid.rows = 7;
    s.grid.cols = 8;
    s.window_region = default_window_region();
    s.contrast_threshold = 0.35;
    s.noise_rate = 2e-5;

    s.gain.mode = GainField::Mode::Gaussian;
    s.gain.center = {270.0, 240.0};
    s.gain.sigma = obj.gain_sigma;
    s.gain.floor = 0.3;

    std::mt19937_64 rng(seed * 977 + static_cast<std::uint64_t>(obj.id) * 131 + 29);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const double press_end = 0.06 + 0.03 * u01(rng);
    const double level = obj.shear_level_px * (0.9 + 0.2 * u01(rng));
    s.shear_y.add(0.02, 0.0);
    s.shear_y.add(press_end, level);

    // accordance bursts: gel and object move together; mirrored on the
    // texture track so the relative flow stays zero
    const double acc_amp = obj.accordance_amp_px * (0.8 + 0.4 * u01(rng));
    double t = 0.18 + 0.05 * u01(rng);
    std::vector<std::pair<double, double>> acc_knots;
    for (int burst = 0; burst < 2; ++burst) {
        acc_knots.emplace_back(t, 0.0);
        acc_knots.emplace_back(t + 0.016, acc_amp);
        acc_knots.emplace_back(t + 0.032, -0.7 * acc_amp);
        acc_knots.emplace_back(t + 0.046, 0.0);
        t += 0.08 + 0.04 * u01(rng);
    }

    const double t_slip = 0.52 + 0.2 * u01(rng);
    const double slip_len = 0.30;

    // dots: shear plus accordance; during slip the shear partially relaxes
    for (const auto& [kt, kv] : acc_knots)
        s.shear_y.add(kt, level + kv);
    s.shear_y.add(t_slip, level);
    s.shear_y.add(t_slip + slip_len, level * (1.0 - obj.slip_relax_frac));

    s.jitter.amplitude_px = obj.jitter_amp_px;
    s.jitter.rate_hz = obj.jitter_rate_hz;
    s.jitter.envelope.add(t_slip, 0.0);
    s.jitter.envelope.add(t_slip + 0.012, 1.0);
    s.jitter.envelope.add(t_slip + slip_len - 0.03, 1.0);
    s.jitter.envelope.add(t_slip + slip_len, 0.0);

    s.texture.bars = obj.bars;
    s.texture.bar_width = obj.bar_width;
    s.texture.pitch = obj.bar_pitch;
    s.texture.bar_length = 92.0;
    s.texture.anchor = {kWindowX0 + 4.0, -280.0 - 40.0 * u01(rng)};
    s.texture.clip = default_window_region();
    // texture follows the accordance bursts (no relative motion) ...
    for (const auto& [kt, kv] : acc_knots)
        s.texture.pos_y.add(kt, kv);
    // ... then slides away fast once slip starts
    const double travel = obj.slip_speed_px_ms * 1000.0 * slip_len * 0.55;
    s.texture.pos_y.add(t_slip, 0.0);
    s.texture.pos_y.add(t_slip + 0.04, obj.slip_speed_px_ms * 18.0);
    s.texture.pos_y.add(t_slip + slip_len, travel);

    s.slip_windows.emplace_back(t_slip, t_slip + slip_len);
    return s;
}

std::vector<SlipObjectParams> slip_object_set(int count, bool held_out, std::uint64_t seed)
{
    std::mt19937_64 rng(seed * (held_out ? 1009 : 509) + 3);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<SlipObjectParams> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        SlipObjectParams p;
        p.id = (held_out ? 100 : 0) + i;
        p.shear_level_px = 4.0 + 6.0 * u01(rng);
        p.slip_speed_px_ms = 0.6 + 0.9 * u01(rng);
        p.slip_relax_frac = 0.35 + 0.4 * u01(rng);
        p.accordance_amp_px = 0.3 + 0.5 * u01(rng);
        p.jitter_amp_px = 0.25 + 0.25 * u01(rng);
        p.jitter_rate_hz = 35.0 + 25.0 * u01(rng);
        p.bars = 12 + static_cast<int>(u01(rng) * 6.0);
        p.bar_width = 5.0 + 4.0 * u01(rng);
        p.bar_pitch = 28.0 + 14.0 * u01(rng);
        p.gain_sigma = 150.0 + 120.0 * u01(rng);
        out.push_back(p);
    }
    return out;
}

std::map<std::string, GelScene> scene_library()
{
    std::map<std::string, GelScene> lib;
    for (double f : {100.0, 200.0, 300.0, 400.0, 498.0}) {
        GelScene s = vibration_scene(f);
        lib["A" + std::to_string(static_cast<int>(f))] = s;
    }
    lib["B"] = shear_scene();
    lib["C"] = grasp_slip_scene();
    lib["D"] = distractor_scene();
    lib["E"] = slip_trajectory_scene(slip_object_set(1, false)[0], 1);
    return lib;
}

namespace {

void put_track(std::ostringstream& out, const std::string& key, const Track& t)
{
    if (t.empty())
        return;
    out << key << " =";
    for (const auto& [kt, kv] : t.knots)
        out << ' ' << kt << ' ' << kv;
    out << '\n';
    if (!t.smooth)
        out << key << ".smooth = 0\n";
}

Track parse_track(const std::string& value)
{
    Track t;
    std::istringstream in(value);
    double a, b;
    while (in >> a >> b)
        t.add(a, b);
    return t;
}

} // namespace

std::string serialize_scene(const GelScene& s)
{
    std::ostringstream out;
    out.precision(12);
    out << "name = " << s.name << '\n';
    out << "width = " << s.width << '\n';
    out << "height = " << s.height << '\n';
    out << "seed = " << s.seed << '\n';
    out << "grid.rows = " << s.grid.rows << '\n';
    out << "grid.cols = " << s.grid.cols << '\n';
    out << "grid.radius = " << s.grid.radius << '\n';
    out << "grid.spacing = " << s.grid.spacing << '\n';
    if (!std::isnan(s.grid.origin_x))
        out << "grid.origin_x = " << s.grid.origin_x << '\n';
    if (!std::isnan(s.grid.origin_y))
        out << "grid.origin_y = " << s.grid.origin_y << '\n';
    out << "contrast = " << s.contrast_threshold << '\n';
    out << "noise_rate = " << s.noise_rate << '\n';
    if (s.allow_super_nyquist)
        out << "allow_super_nyquist = 1\n";
    if (s.window_region)
        out << "window = " << s.window_region->x0 << ' ' << s.window_region->y0 << ' '
            << s.window_region->x1 << ' ' << s.window_region->y1 << '\n';
    put_track(out, "shear.x", s.shear_x);
    put_track(out, "shear.y", s.shear_y);
    if (s.vibration.freq_hz > 0.0) {
        out << "vib.freq = " << s.vibration.freq_hz << '\n';
        out << "vib.amp = " << s.vibration.amplitude_px << '\n';
        out << "vib.duty = " << s.vibration.duty << '\n';
        out << "vib.dir = " << s.vibration.direction.x << ' ' << s.vibration.direction.y << '\n';
        put_track(out, "vib.envelope", s.vibration.envelope);
    }
    if (s.jitter.amplitude_px > 0.0) {
        out << "jitter.amp = " << s.jitter.amplitude_px << '\n';
        out << "jitter.rate = " << s.jitter.rate_hz << '\n';
        out << "jitter.decay = " << s.jitter.decay_hz << '\n';
        put_track(out, "jitter.envelope", s.jitter.envelope);
    }
    if (s.texture.bars > 0) {
        out << "texture.bars = " << s.texture.bars << '\n';
        out << "texture.bar_width = " << s.texture.bar_width << '\n';
        out << "texture.bar_length = " << s.texture.bar_length << '\n';
        out << "texture.pitch = " << s.texture.pitch << '\n';
        out << "texture.horizontal = " << (s.texture.horizontal ? 1 : 0) << '\n';
        out << "texture.anchor = " << s.texture.anchor.x << ' ' << s.texture.anchor.y << '\n';
        if (s.texture.clip)
            out << "texture.clip = " << s.texture.clip->x0 << ' ' << s.texture.clip->y0 << ' '
                << s.texture.clip->x1 << ' ' << s.texture.clip->y1 << '\n';
        put_track(out, "texture.pos_x", s.texture.pos_x);
        put_track(out, "texture.pos_y", s.texture.pos_y);
    }
    if (s.gain.mode == GainField::Mode::Gaussian) {
        out << "gain.mode = gauss\n";
        out << "gain.center = " << s.gain.center.x << ' ' << s.gain.center.y << '\n';
        out << "gain.sigma = " << s.gain.sigma << '\n';
        out << "gain.floor = " << s.gain.floor << '\n';
    }
    if (!s.slip_windows.empty()) {
        out << "slip.windows =";
        for (const auto& [b, e] : s.slip_windows)
            out << ' ' << b << ' ' << e;
        out << '\n';
    }
    out << "force.k = " << s.force.k[0][0] << ' ' << s.force.k[0][1] << ' ' << s.force.k[1][0]
        << ' ' << s.force.k[1][1] << '\n';
    out << "force.noise = " << s.force.noise_sigma << '\n';
    return out.str();
}

GelScene parse_scene(const std::string& text)
{
    GelScene s;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw InvalidInput("scene file line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& x) {
            const auto b = x.find_first_not_of(" \t\r");
            const auto e = x.find_last_not_of(" \t\r");
            x = b == std::string::npos ? std::string{} : x.substr(b, e - b + 1);
        };
        trim(key);
        trim(value);
        if (key.empty())
            throw InvalidInput("scene file line " + std::to_string(lineno) + ": empty key");

        std::istringstream v(value);
        auto num = [&]() {
            double d;
            if (!(v >> d))
                throw InvalidInput("scene file line " + std::to_string(lineno) + ": bad number");
            return d;
        };
        if (key == "name")
            s.name = value;
        else if (key == "width")
            s.width = static_cast<int>(num());
        else if (key == "height")
            s.height = static_cast<int>(num());
        else if (key == "seed")
            s.seed = static_cast<std::uint64_t>(num());
        else if (key == "grid.rows")
            s.grid.rows = static_cast<int>(num());
        else if (key == "grid.cols")
            s.grid.cols = static_cast<int>(num());
        else if (key == "grid.radius")
            s.grid.radius = num();
        else if (key == "grid.spacing")
            s.grid.spacing = num();
        else if (key == "grid.origin_x")
            s.grid.origin_x = num();
        else if (key == "grid.origin_y")
            s.grid.origin_y = num();
        else if (key == "contrast")
            s.contrast_threshold = num();
        else if (key == "noise_rate")
            s.noise_rate = num();
        else if (key == "allow_super_nyquist")
            s.allow_super_nyquist = num() != 0.0;
        else if (key == "window")
            s.window_region = Rect{num(), num(), num(), num()};
        else if (key == "shear.x")
            s.shear_x = parse_track(value);
        else if (key == "shear.x.smooth")
            s.shear_x.smooth = num() != 0.0;
        else if (key == "shear.y")
            s.shear_y = parse_track(value);
        else if (key == "shear.y.smooth")
            s.shear_y.smooth = num() != 0.0;
        else if (key == "vib.freq")
            s.vibration.freq_hz = num();
        else if (key == "vib.amp")
            s.vibration.amplitude_px = num();
        else if (key == "vib.duty")
            s.vibration.duty = num();
        else if (key == "vib.dir")
            s.vibration.direction = {num(), num()};
        else if (key == "vib.envelope")
            s.vibration.envelope = parse_track(value);
        else if (key == "vib.envelope.smooth")
            s.vibration.envelope.smooth = num() != 0.0;
        else if (key == "jitter.amp")
            s.jitter.amplitude_px = num();
        else if (key == "jitter.rate")
            s.jitter.rate_hz = num();
        else if (key == "jitter.decay")
            s.jitter.decay_hz = num();
        else if (key == "jitter.envelope")
            s.jitter.envelope = parse_track(value);
        else if (key == "jitter.envelope.smooth")
            s.jitter.envelope.smooth = num() != 0.0;
        else if (key == "texture.bars")
            s.texture.bars = static_cast<int>(num());
        else if (key == "texture.bar_width")
            s.texture.bar_width = num();
        else if (key == "texture.bar_length")
            s.texture.bar_length = num();
        else if (key == "texture.pitch")
            s.texture.pitch = num();
        else if (key == "texture.horizontal")
            s.texture.horizontal = num() != 0.0;
        else if (key == "texture.anchor")
            s.texture.anchor = {num(), num()};
        else if (key == "texture.clip")
            s.texture.clip = Rect{num(), num(), num(), num()};
        else if (key == "texture.pos_x")
            s.texture.pos_x = parse_track(value);
        else if (key == "texture.pos_x.smooth")
            s.texture.pos_x.smooth = num() != 0.0;
        else if (key == "texture.pos_y")
            s.texture.pos_y = parse_track(value);
        else if (key == "texture.pos_y.smooth")
            s.texture.pos_y.smooth = num() != 0.0;
        else if (key == "gain.mode")
            s.gain.mode = value == "gauss" ? GainField::Mode::Gaussian : GainField::Mode::Uniform;
        else if (key == "gain.center")
            s.gain.center = {num(), num()};
        else if (key == "gain.sigma")
            s.gain.sigma = num();
        else if (key == "gain.floor")
            s.gain.floor = num();
        else if (key == "slip.windows") {
            double a, b;
            while (v >> a >> b)
                s.slip_windows.emplace_back(a, b);
        } else if (key == "force.k") {
            s.force.k[0][0] = num();
            s.force.k[0][1] = num();
            s.force.k[1][0] = num();
            s.force.k[1][1] = num();
        } else if (key == "force.noise")
            s.force.noise_sigma = num();
        else
            throw InvalidInput("scene file line " + std::to_string(lineno) + ": unknown key " + key);
    }
    return s;
}

void save_scene(const std::string& path, const GelScene& scene)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out << serialize_scene(scene);
}

GelScene load_scene_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scene(buf.str());
}

} // namespace evetac
