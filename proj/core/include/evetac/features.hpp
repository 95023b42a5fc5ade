#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evetac/event.hpp"
#include "evetac/gel_sim.hpp"
#include "evetac/geometry.hpp"

namespace evetac {

/*
 * Per-tick feature set: total event count, per-dot event counts within the
 * association radius of the current centers, current positions, and
 * displacement magnitudes from rest.
 */
struct FeatureFrame {
    std::int64_t t_end_us = 0;
    std::uint32_t total_events = 0;         // N_E
    std::vector<float> dot_events;          // E_C
    std::vector<Vec2> dot_positions;        // P_C
    std::vector<float> dot_displacement;    // D_C
    std::optional<EventImage> image;
};

inline constexpr double kDotAssociationRadius = 20.0; // px disc, distinct from the tracker ring

FeatureFrame extract(const EventFrame& frame, std::span<const Vec2> centers,
                     const DotLattice& lattice, double assoc_radius = kDotAssociationRadius);

// The model input configurations. Baseline operates on event images, all
// others on per-dot feature vectors.
enum class SlipConfigKind {
    NoHist,
    Hist10,
    EventsOnlyHist10,
    DispOnlyHist10,
    Hist20,
    Hist50Down5,
    FastSlowHist50,
    BaselineImageHist10,
};

struct HistorySpec {
    bool use_disp = true;
    bool use_events = true;
    int required_history = 1; // ticks including the current one
    int per_feature_len = 1;  // entries contributed by each enabled feature
};

HistorySpec history_spec(SlipConfigKind kind);
int input_length(SlipConfigKind kind); // l_i per dot
std::string to_string(SlipConfigKind kind);
SlipConfigKind slip_config_from_string(const std::string& name);

/*
 * Single implementation of the per-dot input layout, shared by the
 * streaming history buffer and the offline dataset path so the two agree
 * bit for bit. The provider supplies disp_at(lag, dot) and
 * events_at(lag, dot) with lag 0 = current tick.
 */
template <class Provider>
void fill_history_vector(SlipConfigKind kind, const Provider& p, int dot, std::span<double> out)
{
    const HistorySpec spec = history_spec(kind);
    std::size_t o = 0;
    auto emit = [&](bool use_events) {
        auto value = [&](int lag) {
            return use_events ? p.events_at(lag, dot) : p.disp_at(lag, dot);
        };
        switch (kind) {
        case SlipConfigKind::NoHist:
            out[o++] = value(0);
            break;
        case SlipConfigKind::Hist10:
        case SlipConfigKind::EventsOnlyHist10:
        case SlipConfigKind::DispOnlyHist10:
            for (int l = 0; l < 10; ++l)
                out[o++] = value(l);
            break;
        case SlipConfigKind::Hist20:
            for (int l = 0; l < 20; ++l)
                out[o++] = value(l);
            break;
        case SlipConfigKind::Hist50Down5:
            for (int b = 0; b < 10; ++b) {
                double acc = 0.0;
                for (int l = 0; l < 5; ++l)
                    acc += 0.2 * value(b * 5 + l);
                out[o++] = acc;
            }
            break;
        case SlipConfigKind::FastSlowHist50:
            for (int l = 0; l < 10; ++l)
                out[o++] = value(l);
            for (int b = 0; b < 5; ++b) {
                double acc = 0.0;
                for (int l = 0; l < 10; ++l)
                    acc += 0.1 * value(b * 10 + l);
                out[o++] = acc;
            }
            break;
        case SlipConfigKind::BaselineImageHist10:
            break; // no per-dot inputs
        }
    };
    if (spec.use_disp)
        emit(false);
    if (spec.use_events)
        emit(true);
}

/*
 * Ring buffer over per-dot displacement/event series; builds the per-dot
 * input vectors for every configuration, F_D first then F_E. Raw entries
 * are most-recent-first; downsampled blocks are uniformly weighted means.
 */
class FeatureHistory {
public:
    FeatureHistory(int dots, int capacity);

    void push(std::span<const float> disp, std::span<const float> events);
    void clear();
    int size() const { return filled_; }
    int dots() const { return dots_; }

    bool ready(SlipConfigKind kind) const;
    // writes l_i values for one dot; throws if the window is too short
    void fill_input(SlipConfigKind kind, int dot, std::span<double> out) const;

    float disp_at(int lag, int dot) const;   // lag 0 = current tick
    float events_at(int lag, int dot) const;

private:
    int dots_;
    int capacity_;
    int filled_ = 0;
    int head_ = 0; // slot of the most recent tick
    std::vector<float> disp_;
    std::vector<float> events_;
};

} // namespace evetac
