#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evetac/codec.hpp"
#include "evetac/dot_tracker.hpp"
#include "evetac/features.hpp"
#include "evetac/flow.hpp"
#include "evetac/nn.hpp"

namespace evetac {

// ------------------------------------------------------------------ labeling

struct SlipLabelConfig {
    double flow_threshold = 1.0; // px of relative flow per 4 ms pair
    int flow_dt_ticks = 4;
    int render_window = 5;
    BlockFlowConfig flow;
    int min_region_events = 12; // ticks quieter than this label non-slip directly
};

struct SlipLabels {
    std::vector<std::uint8_t> slip;
    std::int64_t first_slip_tick = -1; // classifier onset t_c_s0, -1 if never

    bool operator==(const SlipLabels&) const = default;
};

/*
 * Offline flow-based slip classifier: renders event images at t and
 * t + 4 ms, estimates block flow separately in the window and marker
 * regions, and labels slip when the window flow exceeds the marker flow
 * by more than the threshold. Needs a window region (throws otherwise).
 */
SlipLabels label_slip(const Recording& rec, const std::optional<Rect>& window_region,
                      const Rect& marker_region, const SlipLabelConfig& cfg = {});

void write_labels_csv(const std::string& path, const SlipLabels& labels);
SlipLabels read_labels_csv(const std::string& path);

// ------------------------------------------------------------------ dataset

/*
 * Compact per-trajectory series the per-dot models train on: tracked dot
 * displacements, per-dot event counts, total event counts and labels.
 */
struct SlipSeries {
    int rows = 7, cols = 8;
    int dots = 56;
    std::vector<float> disp;                 // [tick * dots + d]
    std::vector<float> events;               // [tick * dots + d]
    std::vector<std::uint32_t> total_events; // per tick
    std::vector<std::uint8_t> slip;          // labels
    std::int64_t first_slip_tick = -1;
    int object_id = 0;

    int length() const { return static_cast<int>(total_events.size()); }

    // provider interface for fill_history_vector, anchored at a base tick
    struct At {
        const SlipSeries* s;
        int tick;
        float disp_at(int lag, int dot) const
        {
            return s->disp[static_cast<std::size_t>(tick - lag) * s->dots + dot];
        }
        float events_at(int lag, int dot) const
        {
            return s->events[static_cast<std::size_t>(tick - lag) * s->dots + dot];
        }
    };
    At at(int tick) const { return {this, tick}; }
};

SlipSeries build_slip_series(const Recording& rec, const DotLattice& lattice,
                             const TrackerConfig& tracker_cfg, const SlipLabels& labels,
                             int object_id);

// ------------------------------------------------------------------- models

struct SlipModelConfig {
    SlipConfigKind kind = SlipConfigKind::FastSlowHist50;
    int rows = 7, cols = 8;
    int pred_shift_ms = 0;    // Delta T_pred
    double threshold = 0.5;   // decision threshold on the 0.025 grid

    int l_i = 30, l_fc1 = 15, l_fc2 = 8;
    int conv1_h = 7, conv1_w = 6, conv1_c = 16;
    int conv2_h = 3, conv2_w = 3, conv2_c = 32;
    int l_fc3 = 32, l_fc4 = 10;

    int history_ticks() const { return history_spec(kind).required_history; }
    int cut_after_ms() const; // 15 / 20 / 50 per history class
};

SlipModelConfig make_slip_config(SlipConfigKind kind, int pred_shift_ms = 0);

nn::Network build_slip_model(const SlipModelConfig& cfg);
nn::Network build_baseline_image_model(int height = 480, int width = 540);

// Rotation augmentation on the dot lattice: k quarter turns; 90/270 rotate,
// center-crop to rows x rows and zero-pad back to rows x cols. Returns the
// source cell index for a target cell, or -1 for padding.
int rotated_source_cell(int k, int r, int c, int rows, int cols);

// Builds the (l_i, rows, cols) network input at a base tick, optionally
// rotated by k quarter turns.
template <class Provider>
void build_net_input(const SlipModelConfig& cfg, const Provider& p, int rot_k,
                     std::span<double> out)
{
    const int cells = cfg.rows * cfg.cols;
    thread_local std::vector<double> tmp;
    tmp.resize(static_cast<std::size_t>(cfg.l_i) * cells);
    for (int d = 0; d < cells; ++d)
        fill_history_vector(cfg.kind, p, d,
                            std::span<double>(tmp.data() + static_cast<std::size_t>(d) * cfg.l_i,
                                              cfg.l_i));
    for (int r = 0; r < cfg.rows; ++r) {
        for (int c = 0; c < cfg.cols; ++c) {
            const int src = rotated_source_cell(rot_k, r, c, cfg.rows, cfg.cols);
            for (int f = 0; f < cfg.l_i; ++f) {
                const std::size_t o = (static_cast<std::size_t>(f) * cfg.rows + r) * cfg.cols + c;
                out[o] = src >= 0 ? tmp[static_cast<std::size_t>(src) * cfg.l_i + f] : 0.0;
            }
        }
    }
}

// ----------------------------------------------------------------- training

struct SlipTrainConfig {
    int epochs = 70;
    int checkpoint_every = 10;
    double lr = 0.001;
    int batch_slip = 32, batch_above = 32, batch_below = 8;
    int above_events = 25; // N_E pool split threshold
    double rotate_prob = 0.5;
    std::uint64_t seed = 1;
    bool verbose = false;
};

struct SlipCheckpoint {
    int epoch = 0;
    std::vector<double> params;
};

struct SlipTrainResult {
    nn::Network net; // parameters of the final epoch
    std::vector<SlipCheckpoint> checkpoints;
};

SlipTrainResult train_slip_model(const SlipModelConfig& cfg, std::span<const SlipSeries> train,
                                 const SlipTrainConfig& tc);

/*
 * Image-baseline variant of the same protocol. Samples are event images
 * rendered from the last `render_window` frames with the window region
 * removed; rotation augmentation center-crops and pads the image.
 */
SlipTrainResult train_baseline_image_model(std::span<const Recording> recordings,
                                           std::span<const SlipLabels> labels,
                                           const SlipTrainConfig& tc,
                                           const Rect& marker_region, int render_window = 10);

// the cropped marker-region image as network input (values -1/0/+1)
void baseline_image_input(const Recording& rec, int tick, int render_window,
                          const Rect& marker_region, int rot_k, std::span<double> out);

// pool sizes for a dataset, exposed for tests
struct SlipPools {
    std::size_t slip = 0, above = 0, below = 0;
    std::size_t batches_per_epoch = 0;
};
SlipPools slip_pool_stats(const SlipModelConfig& cfg, std::span<const SlipSeries> train,
                          int above_events = 25);

// --------------------------------------------------------------- evaluation

// per-tick probabilities; ticks before the warmup window read 0
std::vector<double> slip_probabilities(const SlipModelConfig& cfg, const nn::Network& net,
                                       const SlipSeries& traj);

enum class SlipTiming { Correct, TooEarly, TooLate };

struct SlipTrajEval {
    SlipTiming timing = SlipTiming::TooLate;
    double f1 = 0.0, precision = 0.0, recall = 0.0;
    std::int64_t t_model_first = -1;      // ticks, -1 = never
    std::int64_t t_classifier_first = -1; // t_c_s0
    int object_id = 0;
};

struct SlipEvalReport {
    std::vector<SlipTrajEval> trajectories;
    double timing_correct_rate = 0.0;
    double mean_f1 = 0.0;
    int correct = 0, early = 0, late = 0;
};

SlipTrajEval evaluate_slip_trajectory(const SlipModelConfig& cfg, std::span<const double> probs,
                                      double threshold, const SlipSeries& traj);
SlipEvalReport evaluate_slip(const SlipModelConfig& cfg, const nn::Network& net, double threshold,
                             std::span<const SlipSeries> trajectories);

struct ThresholdSelection {
    int checkpoint_epoch = 0;
    double threshold = 0.5;
    double score = 0.0; // timing-correct rate + mean F1
};

// grid search over {0, 0.025, ..., 1} and the last `checkpoints_considered`
// checkpoints; ties resolve to the earlier checkpoint and lower threshold
ThresholdSelection select_threshold(const SlipModelConfig& cfg, const SlipTrainResult& trained,
                                    std::span<const SlipSeries> test,
                                    int checkpoints_considered = 3);

inline constexpr int kThresholdGridSize = 41;
double threshold_grid_value(int i); // i in [0, 41)

// F1 helpers (shifted labels for prediction models, trajectory cut 20 ms
// after the classifier onset)
struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};
double precision_of(const ConfusionCounts& c);
double recall_of(const ConfusionCounts& c);
double f1_of(const ConfusionCounts& c);

// ---------------------------------------------------------------- streaming

/*
 * 1 kHz online inference: push one feature frame per tick, get the slip
 * flag back. Every positive tick increments the shared monotone counter
 * the grasp controller polls. Flags equal the offline evaluation exactly.
 */
class SlipDetectorStream {
public:
    SlipDetectorStream(const SlipModelConfig& cfg, const nn::Network& net);

    bool push(std::span<const float> disp, std::span<const float> events);
    bool push(const FeatureFrame& frame);
    void reset();

    const std::atomic<std::uint64_t>& counter() const { return counter_; }
    std::uint64_t ticks_seen() const { return ticks_; }

private:
    SlipModelConfig cfg_;
    nn::Network net_;
    FeatureHistory hist_;
    nn::Workspace ws_;
    std::vector<double> input_;
    std::atomic<std::uint64_t> counter_{0};
    std::uint64_t ticks_ = 0;
};

// timing CDF export: Gaussian-kernel density estimate over the detection
// offsets (ms), sampled on [lo, hi] with 1 ms steps
struct TimingCdf {
    std::vector<double> offset_ms;
    std::vector<double> cdf;
};
TimingCdf timing_cdf(std::span<const double> offsets_ms, double bandwidth_ms = 5.0,
                     double lo = -100.0, double hi = 60.0);

} // namespace evetac
