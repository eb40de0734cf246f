// spectrum.hpp — periodogram of a measurement record and the
// Lorentzian-overlap phase criterion
//
// The power spectral density of a record is
//     S(omega_k) = (gamma T)^{-1} | sum_n e^{-i omega_k t_n} dI_n |^2
// on the grid omega_k = 2 pi k / T, k = -K..K, which coincides with DFT bins
// of the increment series, so the sums are evaluated with a real FFT.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "phasescope/trajectory.hpp"
#include "phasescope/util.hpp"

namespace phasescope {

enum class SpectrumNormalization { Raw, UnitL2, UnitSquare };

inline const char* to_string(SpectrumNormalization n) {
    switch (n) {
        case SpectrumNormalization::Raw: return "raw";
        case SpectrumNormalization::UnitL2: return "unit-l2";
        default: return "unit-square";
    }
}

struct Spectrum {
    std::vector<double> omega;  // uniform symmetric grid
    std::vector<double> values; // >= 0
    SpectrumNormalization normalization = SpectrumNormalization::Raw;
    bool mean_removed = false;
    std::uint64_t source_hash = 0;

    double grid_step() const {
        if (omega.size() < 2) throw std::invalid_argument("Spectrum: grid too small");
        return omega[1] - omega[0];
    }

    void validate() const {
        if (omega.size() != values.size() || omega.size() < 2)
            throw std::invalid_argument("Spectrum: grid/value size mismatch");
        const double h = grid_step();
        for (std::size_t i = 1; i < omega.size(); ++i)
            if (std::abs(omega[i] - omega[i - 1] - h) > 1e-9 * std::max(1.0, std::abs(h)))
                throw std::invalid_argument("Spectrum: grid is not uniform");
        for (double v : values)
            if (!(v >= 0.0)) throw std::invalid_argument("Spectrum: negative or NaN value");
        if (normalization != SpectrumNormalization::Raw) {
            const double norm = squared_integral();
            if (std::abs(norm - 1.0) > 1e-8)
                throw std::invalid_argument("Spectrum: declared normalization violated");
        }
    }

    double squared_integral() const {
        std::vector<double> sq(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) sq[i] = values[i] * values[i];
        return trapezoid(sq, grid_step());
    }
};

// Real-input FFT, returning bins k = 0..n/2 of sum_n x_n e^{-2 pi i k n / n}.
// FFTW plan creation is serialized; execution is concurrency-safe.
inline std::vector<std::complex<double>> real_fft_halfspectrum(std::span<const double> x) {
    static std::mutex plan_mutex;
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("real_fft_halfspectrum: need at least 2 samples");
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_plan plan;
    {
        std::scoped_lock lock(plan_mutex);
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                    reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    }
    fftw_execute(plan);
    {
        std::scoped_lock lock(plan_mutex);
        fftw_destroy_plan(plan);
    }
    return out;
}

inline std::uint64_t record_content_hash(const MeasurementRecord& record) {
    std::uint64_t h = fnv1a(record.operator_tag);
    h = fnv1a(&record.gamma, sizeof record.gamma, h);
    h = fnv1a(&record.dt, sizeof record.dt, h);
    h = fnv1a(&record.seed, sizeof record.seed, h);
    if (!record.increments.empty())
        h = fnv1a(record.increments.data(), record.increments.size() * sizeof(double), h);
    return h;
}

// Plain (unwindowed) periodogram of a record, optionally after subtracting
// the record's time average, truncated to |omega| <= omega_cap. Mean removal
// zeroes exactly the omega = 0 bin and leaves the others untouched.
inline Spectrum periodogram(const MeasurementRecord& record, bool remove_mean = true,
                            double omega_cap = 40.0) {
    if (record.increments.empty())
        throw std::invalid_argument("periodogram: empty record");
    if (record.gamma <= 0.0)
        throw std::invalid_argument(
            "periodogram: gamma = 0 record has no finite (gamma T)^{-1} normalization");
    if (!(omega_cap > 0.0)) throw std::invalid_argument("periodogram: omega_cap must be > 0");
    const std::size_t n = record.increments.size();
    const double total_time = record.dt * static_cast<double>(n);
    std::vector<double> x(record.increments);
    if (remove_mean) {
        const double m = mean(x);
        for (double& v : x) v -= m;
    }
    const auto bins = real_fft_halfspectrum(x);
    const double domega = 2.0 * std::numbers::pi / total_time;
    const std::size_t k_max =
        std::min(bins.size() - 1, static_cast<std::size_t>(omega_cap / domega));
    Spectrum s;
    s.normalization = SpectrumNormalization::Raw;
    s.mean_removed = remove_mean;
    s.source_hash = record_content_hash(record);
    s.omega.resize(2 * k_max + 1);
    s.values.resize(2 * k_max + 1);
    const double scale = 1.0 / (record.gamma * total_time);
    for (std::size_t k = 0; k <= k_max; ++k) {
        const double power = std::norm(bins[k]) * scale;
        s.omega[k_max + k] = domega * static_cast<double>(k);
        s.values[k_max + k] = power;
        s.omega[k_max - k] = -domega * static_cast<double>(k);
        s.values[k_max - k] = power; // real record: S(-omega) = S(omega)
    }
    s.validate();
    return s;
}

// Rescales so the trapezoidal integral of S^2 equals one.
inline Spectrum normalized(const Spectrum& input, SpectrumNormalization target) {
    if (target == SpectrumNormalization::Raw)
        throw std::invalid_argument("normalized: target must be a unit normalization");
    const double norm = input.squared_integral();
    if (norm <= 0.0)
        throw std::invalid_argument("normalized: spectrum is identically zero");
    Spectrum out = input;
    const double factor = 1.0 / std::sqrt(norm);
    for (double& v : out.values) v *= factor;
    out.normalization = target;
    out.validate();
    return out;
}

// Normalization constant of the Lorentzian filter L(omega) = C/(G^2+omega^2)
// with unit L2 norm over the real line: C = G^{3/2} sqrt(2/pi).
inline double lorentz_normalization(double width) {
    if (!(width > 0.0)) throw std::invalid_argument("lorentz_normalization: width must be > 0");
    return std::pow(width, 1.5) * std::sqrt(2.0 / std::numbers::pi);
}

namespace detail {

inline std::vector<double> lorentz_samples(std::span<const double> omega, double width) {
    const double c = lorentz_normalization(width);
    std::vector<double> filter(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i)
        filter[i] = c / (width * width + omega[i] * omega[i]);
    return filter;
}

} // namespace detail

// Overlap F(G) = integral of L_G S' with both factors unit-normalized on the
// evaluation grid, so F <= 1 holds exactly (Cauchy-Schwarz) with equality iff
// the normalized spectrum equals the sampled Lorentzian.
inline double lorentz_overlap(const Spectrum& spectrum, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("lorentz_overlap: width must be > 0");
    const Spectrum s = spectrum.normalization == SpectrumNormalization::Raw
                           ? normalized(spectrum, SpectrumNormalization::UnitL2)
                           : spectrum;
    const auto filter = detail::lorentz_samples(s.omega, width);
    const double h = s.grid_step();
    std::vector<double> prod(filter.size()), fsq(filter.size());
    for (std::size_t i = 0; i < filter.size(); ++i) {
        prod[i] = filter[i] * s.values[i];
        fsq[i] = filter[i] * filter[i];
    }
    const double filter_norm = std::sqrt(trapezoid(fsq, h));
    if (filter_norm <= 0.0) throw std::invalid_argument("lorentz_overlap: degenerate filter");
    return trapezoid(prod, h) / filter_norm;
}

struct LorentzFit {
    double gamma_max = 0.0; // width at the overlap maximum
    double overlap = 0.0;   // F(gamma_max), in [0, 1]
    bool boundary_flag = false;
    int iterations = 0;
    double bracket_low = 0.0;
    double bracket_high = 0.0;
};

// Locates the width maximizing F: coarse log-spaced scan from one grid bin up
// to the full frequency span, then golden-section refinement to 1e-4 relative
// width. A maximum pinned to either search edge raises the boundary flag.
inline LorentzFit maximize_overlap(const Spectrum& spectrum) {
    const Spectrum s = spectrum.normalization == SpectrumNormalization::Raw
                           ? normalized(spectrum, SpectrumNormalization::UnitL2)
                           : spectrum;
    const double width_low = s.grid_step();
    const double width_high = std::max(std::abs(s.omega.front()), std::abs(s.omega.back()));
    if (!(width_high > width_low))
        throw std::invalid_argument("maximize_overlap: frequency grid too small to search");

    constexpr int kScanPoints = 64;
    const double log_lo = std::log(width_low), log_hi = std::log(width_high);
    std::vector<double> widths(kScanPoints);
    int best = 0;
    double best_f = -1.0;
    for (int i = 0; i < kScanPoints; ++i) {
        widths[static_cast<std::size_t>(i)] =
            std::exp(log_lo + (log_hi - log_lo) * i / (kScanPoints - 1));
        const double f = lorentz_overlap(s, widths[static_cast<std::size_t>(i)]);
        if (f > best_f) {
            best_f = f;
            best = i;
        }
    }
    LorentzFit fit;
    fit.boundary_flag = (best == 0 || best == kScanPoints - 1);
    double lo = widths[static_cast<std::size_t>(std::max(0, best - 1))];
    double hi = widths[static_cast<std::size_t>(std::min(kScanPoints - 1, best + 1))];
    fit.bracket_low = lo;
    fit.bracket_high = hi;

    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - (b - a) * kInvPhi;
    double d = a + (b - a) * kInvPhi;
    double fc = lorentz_overlap(s, c), fd = lorentz_overlap(s, d);
    int iter = 0;
    while ((b - a) > 1e-4 * b && iter < 200) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * kInvPhi;
            fc = lorentz_overlap(s, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * kInvPhi;
            fd = lorentz_overlap(s, d);
        }
        ++iter;
    }
    fit.iterations = iter;
    fit.gamma_max = 0.5 * (a + b);
    fit.overlap = lorentz_overlap(s, fit.gamma_max);
    if (fit.gamma_max < width_low * 1.001 || fit.gamma_max > width_high * 0.999)
        fit.boundary_flag = true;
    return fit;
}

} // namespace phasescope
