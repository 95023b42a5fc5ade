#include "evetac/slip.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "evetac/errors.hpp"

namespace evetac {

// ------------------------------------------------------------------ labeling

SlipLabels label_slip(const Recording& rec, const std::optional<Rect>& window_region,
                      const Rect& marker_region, const SlipLabelConfig& cfg)
{
    if (!window_region)
        throw LabelingError("label_slip: scene has no window region");
    const Rect& win = *window_region;

    const int n = static_cast<int>(rec.frames.size());
    SlipLabels out;
    out.slip.assign(n, 0);

    // per-tick event counts inside each region, for the quiet-tick early out
    std::vector<int> win_count(n, 0), mark_count(n, 0);
    for (int i = 0; i < n; ++i) {
        for (const Event& e : rec.frames[i].events) {
            if (win.contains(e.x, e.y))
                ++win_count[i];
            else if (marker_region.contains(e.x, e.y))
                ++mark_count[i];
        }
    }

    const int w = cfg.render_window;
    const int dt = cfg.flow_dt_ticks;
    auto window_sum = [&](const std::vector<int>& counts, int last_tick) {
        int acc = 0;
        for (int k = std::max(0, last_tick - w + 1); k <= last_tick; ++k)
            acc += counts[k];
        return acc;
    };

    for (int t = 0; t + dt < n; ++t) {
        if (window_sum(win_count, t) < cfg.min_region_events &&
            window_sum(win_count, t + dt) < cfg.min_region_events)
            continue; // nothing moving behind the window: cannot be slip

        const int a_begin = std::max(0, t - w + 1);
        const int b_begin = std::max(0, t + dt - w + 1);
        const EventImage img_now = render_image(
            std::span<const EventFrame>(rec.frames.data() + a_begin, t - a_begin + 1), w,
            rec.width, rec.height);
        const EventImage img_ahead = render_image(
            std::span<const EventFrame>(rec.frames.data() + b_begin, t + dt - b_begin + 1), w,
            rec.width, rec.height);

        const FlowEstimate wf = block_flow(img_now, img_ahead, win, cfg.flow);
        const FlowEstimate mf = block_flow(img_now, img_ahead, marker_region, cfg.flow);
        if (wf.mean_magnitude - mf.mean_magnitude > cfg.flow_threshold) {
            out.slip[t] = 1;
            if (out.first_slip_tick < 0)
                out.first_slip_tick = t;
        }
    }
    return out;
}

void write_labels_csv(const std::string& path, const SlipLabels& labels)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out << "tick,slip,t_c_s0\n";
    for (std::size_t t = 0; t < labels.slip.size(); ++t)
        out << t << ',' << static_cast<int>(labels.slip[t]) << ',' << labels.first_slip_tick
            << '\n';
}

SlipLabels read_labels_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    SlipLabels out;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream row(line);
        std::string tick, slip, first;
        if (!std::getline(row, tick, ',') || !std::getline(row, slip, ',') ||
            !std::getline(row, first, ','))
            throw InvalidInput("labels csv: malformed row");
        out.slip.push_back(static_cast<std::uint8_t>(std::stoi(slip) != 0));
        out.first_slip_tick = std::stoll(first);
    }
    return out;
}

// ------------------------------------------------------------------ dataset

SlipSeries build_slip_series(const Recording& rec, const DotLattice& lattice,
                             const TrackerConfig& tracker_cfg, const SlipLabels& labels,
                             int object_id)
{
    if (labels.slip.size() != rec.frames.size())
        throw InvalidInput("build_slip_series: label/frame count mismatch");

    SlipSeries s;
    s.rows = lattice.rows;
    s.cols = lattice.cols;
    s.dots = lattice.count();
    s.object_id = object_id;
    s.slip = labels.slip;
    s.first_slip_tick = labels.first_slip_tick;
    const std::size_t n = rec.frames.size();
    s.disp.resize(n * s.dots);
    s.events.resize(n * s.dots);
    s.total_events.resize(n);

    DotTracker tracker(lattice, tracker_cfg);
    for (std::size_t t = 0; t < n; ++t) {
        tracker.process_frame(rec.frames[t]);
        const FeatureFrame f = extract(rec.frames[t], tracker.centers(), lattice);
        s.total_events[t] = f.total_events;
        std::copy(f.dot_displacement.begin(), f.dot_displacement.end(),
                  s.disp.begin() + t * s.dots);
        std::copy(f.dot_events.begin(), f.dot_events.end(), s.events.begin() + t * s.dots);
    }
    return s;
}

// ------------------------------------------------------------------- models

int SlipModelConfig::cut_after_ms() const
{
    const int h = history_ticks();
    if (h <= 10)
        return 15;
    if (h <= 20)
        return 20;
    return 50;
}

SlipModelConfig make_slip_config(SlipConfigKind kind, int pred_shift_ms)
{
    SlipModelConfig c;
    c.kind = kind;
    c.pred_shift_ms = pred_shift_ms;
    c.l_i = input_length(kind);
    switch (kind) {
    case SlipConfigKind::NoHist:
        c.l_fc1 = 10;
        c.l_fc2 = 4;
        break;
    case SlipConfigKind::Hist10:
        c.l_fc1 = 12;
        c.l_fc2 = 4;
        break;
    case SlipConfigKind::EventsOnlyHist10:
    case SlipConfigKind::DispOnlyHist10:
        c.l_fc1 = 8;
        c.l_fc2 = 4;
        break;
    case SlipConfigKind::Hist20:
        c.l_fc1 = 20;
        c.l_fc2 = 8;
        break;
    case SlipConfigKind::Hist50Down5:
        c.l_fc1 = 12;
        c.l_fc2 = 4;
        break;
    case SlipConfigKind::FastSlowHist50:
        c.l_fc1 = 15;
        c.l_fc2 = 8;
        break;
    case SlipConfigKind::BaselineImageHist10:
        c.l_fc1 = 0;
        c.l_fc2 = 0;
        break;
    }
    return c;
}

nn::Network build_slip_model(const SlipModelConfig& cfg)
{
    if (cfg.kind == SlipConfigKind::BaselineImageHist10)
        return build_baseline_image_model();

    // The shared-weight per-dot encoder is a pair of 1x1 convolutions over
    // the dot lattice. Conv head: the first conv runs with same-padding
    // (asymmetric for the even kernel width), the second valid; the flatten
    // feeds the l_fc3 layer. An alternative reading pads only the height of
    // the first conv (output 3x3), making conv2's output exactly 1x1x32 so
    // the flatten itself is 32-dimensional; sizes here follow the
    // same-padding resolution.
    nn::Network net;
    net.spec.input = {cfg.l_i, cfg.rows, cfg.cols};
    const int pt = (cfg.conv1_h - 1) / 2;
    const int pb = cfg.conv1_h - 1 - pt;
    const int pl = (cfg.conv1_w - 1) / 2;
    const int pr = cfg.conv1_w - 1 - pl;
    net.spec.layers = {
        nn::LayerSpec::conv2d(cfg.l_i, cfg.l_fc1, 1, 1),
        nn::LayerSpec::relu(),
        nn::LayerSpec::conv2d(cfg.l_fc1, cfg.l_fc2, 1, 1),
        nn::LayerSpec::relu(),
        nn::LayerSpec::conv2d(cfg.l_fc2, cfg.conv1_c, cfg.conv1_h, cfg.conv1_w, pt, pb, pl, pr),
        nn::LayerSpec::relu(),
        nn::LayerSpec::conv2d(cfg.conv1_c, cfg.conv2_c, cfg.conv2_h, cfg.conv2_w),
        nn::LayerSpec::relu(),
        nn::LayerSpec::flatten(),
    };
    net.spec.finalize();
    const int flat = static_cast<int>(net.spec.output_shape().size());
    net.spec.layers.push_back(nn::LayerSpec::dense(flat, cfg.l_fc3));
    net.spec.layers.push_back(nn::LayerSpec::relu());
    net.spec.layers.push_back(nn::LayerSpec::dense(cfg.l_fc3, cfg.l_fc4));
    net.spec.layers.push_back(nn::LayerSpec::relu());
    net.spec.layers.push_back(nn::LayerSpec::dense(cfg.l_fc4, 1));
    net.spec.layers.push_back(nn::LayerSpec::sigmoid());
    net.spec.finalize();
    return net;
}

nn::Network build_baseline_image_model(int height, int width)
{
    nn::Network net;
    net.spec.input = {1, height, width};
    net.spec.layers = {
        nn::LayerSpec::conv2d(1, 15, 5, 5),  nn::LayerSpec::relu(), nn::LayerSpec::max_pool(3, 3),
        nn::LayerSpec::conv2d(15, 20, 5, 5), nn::LayerSpec::relu(), nn::LayerSpec::max_pool(3, 3),
        nn::LayerSpec::conv2d(20, 25, 5, 5), nn::LayerSpec::relu(), nn::LayerSpec::max_pool(4, 4),
        nn::LayerSpec::conv2d(25, 32, 5, 5), nn::LayerSpec::relu(), nn::LayerSpec::max_pool(7, 9),
        nn::LayerSpec::flatten(),
    };
    net.spec.finalize();
    const int flat = static_cast<int>(net.spec.output_shape().size());
    net.spec.layers.push_back(nn::LayerSpec::dense(flat, 10));
    net.spec.layers.push_back(nn::LayerSpec::relu());
    net.spec.layers.push_back(nn::LayerSpec::dense(10, 1));
    net.spec.layers.push_back(nn::LayerSpec::sigmoid());
    net.spec.finalize();
    return net;
}

int rotated_source_cell(int k, int r, int c, int rows, int cols)
{
    k = ((k % 4) + 4) % 4;
    switch (k) {
    case 0:
        return r * cols + c;
    case 2:
        return (rows - 1 - r) * cols + (cols - 1 - c);
    case 1:
        // rot90: (cols x rows) result, rows cropped to `rows`, cols padded
        if (c >= rows)
            return -1;
        return c * cols + (cols - 1 - r);
    default:
        // rot270
        if (c >= rows)
            return -1;
        return (rows - 1 - c) * cols + r;
    }
}

// ----------------------------------------------------------------- training

namespace {

struct SampleRef {
    const SlipSeries* s = nullptr;
    int tick = 0;
    double label = 0.0;
};

int label_at(const SlipSeries& s, int tick, int shift)
{
    const int src = tick + shift;
    if (src >= s.length())
        return 0;
    return s.slip[src];
}

void build_pools(const SlipModelConfig& cfg, std::span<const SlipSeries> data, int above_events,
                 std::vector<SampleRef>& slip_pool, std::vector<SampleRef>& above_pool,
                 std::vector<SampleRef>& below_pool)
{
    const int hist = cfg.history_ticks();
    const int shift = cfg.pred_shift_ms;
    for (const SlipSeries& s : data) {
        int cut = s.length() - 1;
        if (s.first_slip_tick >= 0)
            cut = std::min<int>(cut, static_cast<int>(s.first_slip_tick) + cfg.cut_after_ms());
        for (int t = hist - 1; t <= cut; ++t) {
            const int y = label_at(s, t, shift);
            SampleRef ref{&s, t, static_cast<double>(y)};
            if (y)
                slip_pool.push_back(ref);
            else if (s.total_events[t] > static_cast<std::uint32_t>(above_events))
                above_pool.push_back(ref);
            else
                below_pool.push_back(ref);
        }
    }
}

class CyclicSampler {
public:
    CyclicSampler(std::vector<SampleRef>* pool, std::mt19937_64* rng) : pool_(pool), rng_(rng) {}

    const SampleRef& next()
    {
        if (pos_ >= pool_->size()) {
            std::shuffle(pool_->begin(), pool_->end(), *rng_);
            pos_ = 0;
        }
        return (*pool_)[pos_++];
    }

private:
    std::vector<SampleRef>* pool_;
    std::mt19937_64* rng_;
    std::size_t pos_ = 0;
};

} // namespace

SlipPools slip_pool_stats(const SlipModelConfig& cfg, std::span<const SlipSeries> train,
                          int above_events)
{
    std::vector<SampleRef> s, a, b;
    build_pools(cfg, train, above_events, s, a, b);
    SlipPools p;
    p.slip = s.size();
    p.above = a.size();
    p.below = b.size();
    p.batches_per_epoch = a.empty() ? 0 : (a.size() + 31) / 32;
    return p;
}

SlipTrainResult train_slip_model(const SlipModelConfig& cfg, std::span<const SlipSeries> train,
                                 const SlipTrainConfig& tc)
{
    if (cfg.kind == SlipConfigKind::BaselineImageHist10)
        throw InvalidInput("train_slip_model: the image baseline trains on recordings, "
                           "use train_baseline_image_model");

    std::vector<SampleRef> slip_pool, above_pool, below_pool;
    build_pools(cfg, train, tc.above_events, slip_pool, above_pool, below_pool);
    if (slip_pool.empty() || above_pool.empty() || below_pool.empty())
        throw TrainingError("train_slip_model: empty sample pool (slip=" +
                            std::to_string(slip_pool.size()) + " above=" +
                            std::to_string(above_pool.size()) + " below=" +
                            std::to_string(below_pool.size()) + ")");

    SlipTrainResult res;
    res.net = build_slip_model(cfg);
    res.net.init_params(tc.seed);
    nn::Workspace ws(res.net.spec);
    std::vector<double> input(res.net.spec.input.size());

    std::mt19937_64 rng(tc.seed * 40507 + 9);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> quarter(1, 3);
    CyclicSampler slip_s(&slip_pool, &rng);
    CyclicSampler below_s(&below_pool, &rng);

    const int batch = tc.batch_slip + tc.batch_above + tc.batch_below;
    const std::size_t batches = (above_pool.size() + tc.batch_above - 1) / tc.batch_above;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(above_pool.begin(), above_pool.end(), rng);
        std::size_t above_pos = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            ws.zero_grad();
            for (int k = 0; k < batch; ++k) {
                SampleRef ref;
                if (k < tc.batch_slip)
                    ref = slip_s.next();
                else if (k < tc.batch_slip + tc.batch_above)
                    ref = above_pool[(above_pos++) % above_pool.size()];
                else
                    ref = below_s.next();

                const int rot = u01(rng) < tc.rotate_prob ? quarter(rng) : 0;
                build_net_input(cfg, ref.s->at(ref.tick), rot, input);
                nn::forward(res.net, input, ws, true, &rng);
                const double target[1] = {ref.label};
                nn::backward(res.net, nn::Loss::BCE, target, ws);
            }
            const double inv = 1.0 / static_cast<double>(batch);
            for (double& g : ws.grad)
                g *= inv;
            nn::sgd_step(res.net, ws.grad, tc.lr);
        }
        if (epoch % tc.checkpoint_every == 0)
            res.checkpoints.push_back({epoch, res.net.params});
        if (tc.verbose)
            std::fprintf(stderr, "epoch %d/%d done (%zu batches)\n", epoch, tc.epochs, batches);
    }
    return res;
}

void baseline_image_input(const Recording& rec, int tick, int render_window,
                          const Rect& marker_region, int rot_k, std::span<double> out)
{
    const int begin = std::max(0, tick - render_window + 1);
    const EventImage img = render_image(
        std::span<const EventFrame>(rec.frames.data() + begin, tick - begin + 1), render_window,
        rec.width, rec.height);

    const int x0 = static_cast<int>(marker_region.x0);
    const int y0 = static_cast<int>(marker_region.y0);
    const int w = static_cast<int>(marker_region.width());
    const int h = static_cast<int>(marker_region.height());
    if (out.size() != static_cast<std::size_t>(w) * h)
        throw InvalidInput("baseline_image_input: output size mismatch");

    rot_k = ((rot_k % 4) + 4) % 4;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int sx = x, sy = y;
            bool pad = false;
            if (rot_k == 1 || rot_k == 3) {
                // rotated image is w x h; center-crop rows, center-pad columns
                const int row_off = (w - h) / 2;
                const int col_off = (w - h) / 2;
                const int rr = y + row_off;          // row in the rotated image
                const int rc = x - col_off;          // col in the rotated image
                if (rc < 0 || rc >= h) {
                    pad = true;
                } else if (rot_k == 1) {
                    sy = rc;
                    sx = w - 1 - rr;
                } else {
                    sy = h - 1 - rc;
                    sx = rr;
                }
            } else if (rot_k == 2) {
                sx = w - 1 - x;
                sy = h - 1 - y;
            }
            double v = 0.0;
            if (!pad)
                v = static_cast<double>(img.at(x0 + sx, y0 + sy));
            out[static_cast<std::size_t>(y) * w + x] = v;
        }
    }
}

SlipTrainResult train_baseline_image_model(std::span<const Recording> recordings,
                                           std::span<const SlipLabels> labels,
                                           const SlipTrainConfig& tc, const Rect& marker_region,
                                           int render_window)
{
    if (recordings.size() != labels.size())
        throw InvalidInput("train_baseline_image_model: recording/label count mismatch");

    constexpr int kHist = 10;  // "hist 10" image baseline
    constexpr int kCutMs = 15; // history class <= 10
    struct Ref {
        int rec = 0;
        int tick = 0;
        double label = 0.0;
    };
    std::vector<Ref> slip_pool, above_pool, below_pool;
    for (std::size_t r = 0; r < recordings.size(); ++r) {
        const Recording& rec = recordings[r];
        const SlipLabels& lab = labels[r];
        if (lab.slip.size() != rec.frames.size())
            throw InvalidInput("train_baseline_image_model: label/frame count mismatch");
        int cut = static_cast<int>(rec.frames.size()) - 1;
        if (lab.first_slip_tick >= 0)
            cut = std::min<int>(cut, static_cast<int>(lab.first_slip_tick) + kCutMs);
        for (int t = kHist - 1; t <= cut; ++t) {
            const Ref ref{static_cast<int>(r), t, static_cast<double>(lab.slip[t])};
            if (lab.slip[t])
                slip_pool.push_back(ref);
            else if (rec.frames[t].events.size() > static_cast<std::size_t>(tc.above_events))
                above_pool.push_back(ref);
            else
                below_pool.push_back(ref);
        }
    }
    if (slip_pool.empty() || above_pool.empty() || below_pool.empty())
        throw TrainingError("train_baseline_image_model: empty sample pool");

    const int w = static_cast<int>(marker_region.width());
    const int h = static_cast<int>(marker_region.height());
    SlipTrainResult res;
    res.net = build_baseline_image_model(h, w);
    res.net.init_params(tc.seed);
    nn::Workspace ws(res.net.spec);
    std::vector<double> input(res.net.spec.input.size());

    std::mt19937_64 rng(tc.seed * 40507 + 9);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> quarter(1, 3);
    std::size_t slip_pos = slip_pool.size(), below_pos = below_pool.size();
    auto cyclic = [&rng](std::vector<Ref>& pool, std::size_t& pos) -> const Ref& {
        if (pos >= pool.size()) {
            std::shuffle(pool.begin(), pool.end(), rng);
            pos = 0;
        }
        return pool[pos++];
    };

    const int batch = tc.batch_slip + tc.batch_above + tc.batch_below;
    const std::size_t batches = (above_pool.size() + tc.batch_above - 1) / tc.batch_above;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(above_pool.begin(), above_pool.end(), rng);
        std::size_t above_pos = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            ws.zero_grad();
            for (int k = 0; k < batch; ++k) {
                Ref ref;
                if (k < tc.batch_slip)
                    ref = cyclic(slip_pool, slip_pos);
                else if (k < tc.batch_slip + tc.batch_above)
                    ref = above_pool[(above_pos++) % above_pool.size()];
                else
                    ref = cyclic(below_pool, below_pos);
                const int rot = u01(rng) < tc.rotate_prob ? quarter(rng) : 0;
                baseline_image_input(recordings[ref.rec], ref.tick, render_window, marker_region,
                                     rot, input);
                nn::forward(res.net, input, ws, true, &rng);
                const double target[1] = {ref.label};
                nn::backward(res.net, nn::Loss::BCE, target, ws);
            }
            const double inv = 1.0 / static_cast<double>(batch);
            for (double& g : ws.grad)
                g *= inv;
            nn::sgd_step(res.net, ws.grad, tc.lr);
        }
        if (epoch % tc.checkpoint_every == 0)
            res.checkpoints.push_back({epoch, res.net.params});
    }
    return res;
}

// --------------------------------------------------------------- evaluation

double threshold_grid_value(int i)
{
    return 0.025 * i;
}

std::vector<double> slip_probabilities(const SlipModelConfig& cfg, const nn::Network& net,
                                       const SlipSeries& traj)
{
    std::vector<double> probs(traj.length(), 0.0);
    nn::Workspace ws(net.spec);
    std::vector<double> input(net.spec.input.size());
    const int hist = cfg.history_ticks();
    for (int t = hist - 1; t < traj.length(); ++t) {
        build_net_input(cfg, traj.at(t), 0, input);
        const auto out = nn::forward(net, input, ws, false);
        probs[t] = out[0];
    }
    return probs;
}

double precision_of(const ConfusionCounts& c)
{
    const double den = static_cast<double>(c.tp + c.fp);
    return den > 0.0 ? static_cast<double>(c.tp) / den : 0.0;
}

double recall_of(const ConfusionCounts& c)
{
    const double den = static_cast<double>(c.tp + c.fn);
    return den > 0.0 ? static_cast<double>(c.tp) / den : 0.0;
}

double f1_of(const ConfusionCounts& c)
{
    const double p = precision_of(c);
    const double r = recall_of(c);
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

SlipTrajEval evaluate_slip_trajectory(const SlipModelConfig& cfg, std::span<const double> probs,
                                      double threshold, const SlipSeries& traj)
{
    if (traj.length() == 0 || static_cast<int>(probs.size()) != traj.length())
        throw InvalidInput("evaluate_slip_trajectory: probability/label length mismatch");

    SlipTrajEval ev;
    ev.object_id = traj.object_id;
    ev.t_classifier_first = traj.first_slip_tick;

    const int hist = cfg.history_ticks();
    for (int t = hist - 1; t < traj.length(); ++t) {
        if (probs[t] > threshold) {
            ev.t_model_first = t;
            break;
        }
    }

    if (traj.first_slip_tick >= 0) {
        const std::int64_t lo = traj.first_slip_tick - 50;
        const std::int64_t hi = traj.first_slip_tick + 20;
        if (ev.t_model_first < 0)
            ev.timing = SlipTiming::TooLate;
        else if (ev.t_model_first < lo)
            ev.timing = SlipTiming::TooEarly;
        else if (ev.t_model_first > hi)
            ev.timing = SlipTiming::TooLate;
        else
            ev.timing = SlipTiming::Correct;
    } else {
        ev.timing = ev.t_model_first < 0 ? SlipTiming::Correct : SlipTiming::TooEarly;
    }

    // F1 over the trajectory cut 20 ms after the classifier onset, shifted
    // labels for prediction models
    int f1_end = traj.length() - 1;
    if (traj.first_slip_tick >= 0)
        f1_end = std::min<int>(f1_end, static_cast<int>(traj.first_slip_tick) + 20);
    ConfusionCounts c;
    for (int t = hist - 1; t <= f1_end; ++t) {
        const bool pred = probs[t] > threshold;
        const bool truth = label_at(traj, t, cfg.pred_shift_ms) != 0;
        if (pred && truth)
            ++c.tp;
        else if (pred && !truth)
            ++c.fp;
        else if (!pred && truth)
            ++c.fn;
        else
            ++c.tn;
    }
    ev.precision = precision_of(c);
    ev.recall = recall_of(c);
    ev.f1 = f1_of(c);
    return ev;
}

SlipEvalReport evaluate_slip(const SlipModelConfig& cfg, const nn::Network& net, double threshold,
                             std::span<const SlipSeries> trajectories)
{
    SlipEvalReport rep;
    for (const SlipSeries& traj : trajectories) {
        const std::vector<double> probs = slip_probabilities(cfg, net, traj);
        rep.trajectories.push_back(evaluate_slip_trajectory(cfg, probs, threshold, traj));
    }
    double f1_acc = 0.0;
    for (const SlipTrajEval& ev : rep.trajectories) {
        f1_acc += ev.f1;
        switch (ev.timing) {
        case SlipTiming::Correct: ++rep.correct; break;
        case SlipTiming::TooEarly: ++rep.early; break;
        case SlipTiming::TooLate: ++rep.late; break;
        }
    }
    if (!rep.trajectories.empty()) {
        rep.timing_correct_rate =
            static_cast<double>(rep.correct) / static_cast<double>(rep.trajectories.size());
        rep.mean_f1 = f1_acc / static_cast<double>(rep.trajectories.size());
    }
    return rep;
}

ThresholdSelection select_threshold(const SlipModelConfig& cfg, const SlipTrainResult& trained,
                                    std::span<const SlipSeries> test, int checkpoints_considered)
{
    if (trained.checkpoints.empty())
        throw InvalidInput("select_threshold: no checkpoints");

    const std::size_t first =
        trained.checkpoints.size() > static_cast<std::size_t>(checkpoints_considered)
            ? trained.checkpoints.size() - checkpoints_considered
            : 0;

    ThresholdSelection best;
    best.score = -1.0;
    nn::Network net = trained.net;

    for (std::size_t ci = first; ci < trained.checkpoints.size(); ++ci) {
        net.params = trained.checkpoints[ci].params;
        std::vector<std::vector<double>> probs;
        probs.reserve(test.size());
        for (const SlipSeries& traj : test)
            probs.push_back(slip_probabilities(cfg, net, traj));

        for (int gi = 0; gi < kThresholdGridSize; ++gi) {
            const double th = threshold_grid_value(gi);
            int correct = 0;
            double f1_acc = 0.0;
            for (std::size_t k = 0; k < test.size(); ++k) {
                const SlipTrajEval ev = evaluate_slip_trajectory(cfg, probs[k], th, test[k]);
                correct += ev.timing == SlipTiming::Correct;
                f1_acc += ev.f1;
            }
            const double n = static_cast<double>(test.size());
            const double score = n > 0.0 ? correct / n + f1_acc / n : 0.0;
            if (score > best.score) {
                best.score = score;
                best.threshold = th;
                best.checkpoint_epoch = trained.checkpoints[ci].epoch;
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------- streaming

SlipDetectorStream::SlipDetectorStream(const SlipModelConfig& cfg, const nn::Network& net)
    : cfg_(cfg),
      net_(net),
      hist_(cfg.rows * cfg.cols, std::max(cfg.history_ticks(), 1)),
      ws_(net_.spec),
      input_(net_.spec.input.size())
{
}

void SlipDetectorStream::reset()
{
    hist_.clear();
    counter_.store(0, std::memory_order_relaxed);
    ticks_ = 0;
}

bool SlipDetectorStream::push(std::span<const float> disp, std::span<const float> events)
{
    hist_.push(disp, events);
    ++ticks_;
    if (!hist_.ready(cfg_.kind))
        return false;
    build_net_input(cfg_, hist_, 0, input_);
    const auto out = nn::forward(net_, input_, ws_, false);
    const bool slip = out[0] > cfg_.threshold;
    if (slip)
        counter_.fetch_add(1, std::memory_order_relaxed);
    return slip;
}

bool SlipDetectorStream::push(const FeatureFrame& frame)
{
    return push(frame.dot_displacement, frame.dot_events);
}

TimingCdf timing_cdf(std::span<const double> offsets_ms, double bandwidth_ms, double lo, double hi)
{
    TimingCdf out;
    for (double t = lo; t <= hi; t += 1.0) {
        double acc = 0.0;
        for (double d : offsets_ms)
            acc += 0.5 * (1.0 + std::erf((t - d) / (bandwidth_ms * std::sqrt(2.0))));
        out.offset_ms.push_back(t);
        out.cdf.push_back(offsets_ms.empty() ? 0.0 : acc / static_cast<double>(offsets_ms.size()));
    }
    return out;
}

} // namespace evetac
