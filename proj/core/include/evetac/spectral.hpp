#pragma once

#include <array>
#include <span>
#include <vector>

namespace evetac {

struct Spectrum {
    std::vector<double> frequencies; // Hz, bins 0..N/2
    std::vector<double> amplitudes;  // normalized to [0,1]
    double sample_rate_hz = 0.0;
    double window_s = 0.0;
};

struct SpectralPeak {
    double freq_hz = 0.0;
    double amplitude = 0.0; // normalized
};

struct VibrationDetection {
    double detected_hz = 0.0;
    bool success = false;
    std::array<SpectralPeak, 3> top{}; // largest distinct components above cutoff
    Spectrum spectrum;
};

/*
 * Recovers the dominant vibration frequency from an event-count series:
 * plain DFT of the raw counts, bins below the cutoff zeroed, detection by
 * the maximum-amplitude bin (ties toward lower frequency). Succeeds when
 * the detected bin is within tol of the target.
 */
VibrationDetection detect_vibration(std::span<const double> series, double window_s,
                                    double cutoff_hz = 25.0, double target_hz = 0.0,
                                    double tol_hz = 1.0, double sample_rate_hz = 1000.0);

// Splits a recording into contiguous non-overlapping windows and runs the
// detector on each complete one.
std::vector<VibrationDetection> detect_vibration_segments(std::span<const double> series,
                                                          double window_s, double cutoff_hz,
                                                          double target_hz, double tol_hz,
                                                          double sample_rate_hz = 1000.0);

} // namespace evetac
