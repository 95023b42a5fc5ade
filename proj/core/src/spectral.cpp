#include "evetac/spectral.hpp"

#include <algorithm>
#include <cmath>

#include <fftw3.h>

#include "evetac/errors.hpp"

namespace evetac {

VibrationDetection detect_vibration(std::span<const double> series, double window_s,
                                    double cutoff_hz, double target_hz, double tol_hz,
                                    double sample_rate_hz)
{
    const std::size_t n = static_cast<std::size_t>(std::llround(window_s * sample_rate_hz));
    if (n < 2)
        throw InvalidInput("detect_vibration: window too small");
    if (series.size() < n)
        throw InvalidInput("detect_vibration: series shorter than the window");

    std::vector<double> in(series.begin(), series.begin() + n);
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                          FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    VibrationDetection det;
    Spectrum& spec = det.spectrum;
    spec.sample_rate_hz = sample_rate_hz;
    spec.window_s = window_s;
    const std::size_t bins = n / 2 + 1;
    const double bin_hz = sample_rate_hz / static_cast<double>(n);
    spec.frequencies.resize(bins);
    spec.amplitudes.resize(bins);
    double max_amp = 0.0;
    std::size_t argmax = 0;
    for (std::size_t k = 0; k < bins; ++k) {
        spec.frequencies[k] = bin_hz * static_cast<double>(k);
        double amp = std::hypot(out[k][0], out[k][1]);
        if (spec.frequencies[k] < cutoff_hz)
            amp = 0.0;
        spec.amplitudes[k] = amp;
        if (amp > max_amp) { // strict: ties resolve toward lower frequency
            max_amp = amp;
            argmax = k;
        }
    }
    if (max_amp <= 0.0)
        throw NoPeak("detect_vibration: no spectral component above the cutoff");

    for (double& a : spec.amplitudes)
        a /= max_amp;

    det.detected_hz = spec.frequencies[argmax];
    det.success = std::abs(det.detected_hz - target_hz) <= tol_hz;

    // three largest distinct components; neighboring bins of a chosen peak
    // do not count as separate components
    std::vector<char> taken(bins, 0);
    for (SpectralPeak& peak : det.top) {
        double best = 0.0;
        std::size_t best_k = bins;
        for (std::size_t k = 0; k < bins; ++k) {
            if (taken[k] || spec.amplitudes[k] <= 0.0)
                continue;
            if (spec.amplitudes[k] > best) {
                best = spec.amplitudes[k];
                best_k = k;
            }
        }
        if (best_k == bins)
            break;
        peak.freq_hz = spec.frequencies[best_k];
        peak.amplitude = spec.amplitudes[best_k];
        const std::size_t lo = best_k >= 2 ? best_k - 2 : 0;
        const std::size_t hi = std::min(bins - 1, best_k + 2);
        for (std::size_t k = lo; k <= hi; ++k)
            taken[k] = 1;
    }
    return det;
}

std::vector<VibrationDetection> detect_vibration_segments(std::span<const double> series,
                                                          double window_s, double cutoff_hz,
                                                          double target_hz, double tol_hz,
                                                          double sample_rate_hz)
{
    const std::size_t n = static_cast<std::size_t>(std::llround(window_s * sample_rate_hz));
    if (n < 2)
        throw InvalidInput("detect_vibration: window too small");
    std::vector<VibrationDetection> out;
    for (std::size_t begin = 0; begin + n <= series.size(); begin += n)
        out.push_back(detect_vibration(series.subspan(begin, n), window_s, cutoff_hz,
                                       target_hz, tol_hz, sample_rate_hz));
    return out;
}

} // namespace evetac
