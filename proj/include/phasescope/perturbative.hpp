// perturbative.hpp — weak-measurement power spectrum from exact spectral data
//
// With eigenstates |i> and a measured operator M, every ordered pair (i, j)
// contributes a Lorentzian centered at omega_ij = E_i - E_j of width
//     Gamma_ij = <i|M^2|i> + <j|M^2|j> - 2 <i|M|i><j|M|j>
// and strength |<j|M|i>|^2, all states weighted equally. The squared matrix
// element is the unique reading of the transition strength that keeps the
// spectrum real and nonnegative. Pairs whose width falls below a threshold
// are exact spectral lines and are bookkept as delta weight instead of being
// smeared, so commuting limits stay exact.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "phasescope/model.hpp"
#include "phasescope/spectrum.hpp"
#include "phasescope/util.hpp"

namespace phasescope {

inline constexpr double kDeltaWidthThreshold = 1e-9;

struct PsdComponent {
    int i = 0, j = 0;
    double omega = 0.0;  // E_i - E_j
    double width = 0.0;  // Gamma_ij
    double weight = 0.0; // |<j|M|i>|^2
};

struct PsdGrid {
    double omega_max = 25.0;
    int bins_per_side = 1000;

    void validate() const {
        if (!(omega_max > 0.0) || bins_per_side < 8)
            throw std::invalid_argument("PsdGrid: need omega_max > 0 and >= 8 bins per side");
    }
    double step() const { return omega_max / bins_per_side; }
};

struct PerturbativeSpectrum {
    Spectrum spectrum; // rendered on the grid, UnitSquare normalized, even
    std::vector<PsdComponent> lorentzians; // components rendered as Lorentzians
    std::vector<PsdComponent> deltas;      // components below the width threshold
    double delta_weight_fraction = 0.0;    // share of total integrated weight
    double total_weight = 0.0;             // sum over pairs of |<j|M|i>|^2
    bool grid_warning = false;             // narrowest rendered width under one bin
    int degenerate_pairs = 0;              // |omega_ij| < 1e-10 for i != j
};

// Renders the all-pairs Lorentzian sum on a symmetric grid. The pair sum is
// partitioned across worker threads; accumulation order does not affect the
// bookkeeping and perturbs the rendered values only at floating tolerance.
inline PerturbativeSpectrum perturbative_psd(const SpectralData& spectral,
                                             const HermitianOperator& measured,
                                             const PsdGrid& grid = {},
                                             unsigned workers = 0) {
    grid.validate();
    const Eigen::Index d = spectral.eigenvalues.size();
    if (measured.dimension() != static_cast<std::size_t>(d))
        throw std::invalid_argument("perturbative_psd: operator/spectral dimension mismatch");
    if (workers == 0) workers = default_worker_count();

    // M in the energy eigenbasis (real fast path; all shipped operators are real)
    const Eigen::MatrixXd v_re = spectral.eigenvectors.real();
    const bool complex_basis =
        spectral.eigenvectors.imag().cwiseAbs().maxCoeff() > 1e-13;
    Eigen::MatrixXd b;
    if (!complex_basis) {
        const Eigen::MatrixXd m_re = measured.dense().real();
        b = v_re.transpose() * m_re * v_re;
    } else {
        const Eigen::MatrixXcd bc =
            spectral.eigenvectors.adjoint() * measured.dense() * spectral.eigenvectors;
        if (bc.imag().cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("perturbative_psd: complex matrix elements unsupported");
        b = bc.real();
    }
    const Eigen::VectorXd diag_m = b.diagonal();
    const Eigen::VectorXd second_moment = b.array().square().matrix().rowwise().sum();

    PerturbativeSpectrum out;
    double max_weight = 0.0;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            max_weight = std::max(max_weight, b(j, i) * b(j, i));
    const double render_floor = 1e-14 * max_weight;

    double delta_weight = 0.0, total_weight = 0.0;
    double min_rendered_width = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double weight = b(j, i) * b(j, i);
            total_weight += weight;
            if (weight < render_floor) continue;
            PsdComponent c;
            c.i = static_cast<int>(i);
            c.j = static_cast<int>(j);
            c.omega = spectral.eigenvalues(i) - spectral.eigenvalues(j);
            c.width = second_moment(i) + second_moment(j) - 2.0 * diag_m(i) * diag_m(j);
            c.weight = weight;
            if (i != j && std::abs(c.omega) < 1e-10) ++out.degenerate_pairs;
            if (c.width < kDeltaWidthThreshold) {
                out.deltas.push_back(c);
                delta_weight += weight;
            } else {
                out.lorentzians.push_back(c);
                min_rendered_width = std::min(min_rendered_width, c.width);
            }
        }
    }
    out.total_weight = total_weight;
    out.delta_weight_fraction = total_weight > 0.0 ? delta_weight / total_weight : 0.0;

    const int n_bins = 2 * grid.bins_per_side + 1;
    const double h = grid.step();
    std::vector<double> omega(static_cast<std::size_t>(n_bins));
    for (int k = 0; k < n_bins; ++k)
        omega[static_cast<std::size_t>(k)] = (k - grid.bins_per_side) * h;
    out.grid_warning = !out.lorentzians.empty() && min_rendered_width < h;

    // parallel render with per-worker accumulators
    const std::size_t n_comp = out.lorentzians.size();
    const std::size_t chunk = std::max<std::size_t>(1, n_comp / (4 * workers) + 1);
    const std::size_t n_chunks = (n_comp + chunk - 1) / chunk;
    std::vector<std::vector<double>> partial(
        std::max<std::size_t>(1, n_chunks), std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
    parallel_for(n_chunks, workers, [&](std::size_t ci) {
        auto& acc = partial[ci];
        const std::size_t lo = ci * chunk, hi = std::min(n_comp, lo + chunk);
        for (std::size_t c = lo; c < hi; ++c) {
            const auto& comp = out.lorentzians[c];
            const double g2 = comp.width * comp.width;
            const double wg = comp.weight * comp.width;
            for (int k = 0; k < n_bins; ++k) {
                const double dw = omega[static_cast<std::size_t>(k)] - comp.omega;
                acc[static_cast<std::size_t>(k)] += wg / (dw * dw + g2);
            }
        }
    });
    std::vector<double> values(static_cast<std::size_t>(n_bins), 0.0);
    for (const auto& acc : partial)
        for (int k = 0; k < n_bins; ++k) values[static_cast<std::size_t>(k)] += acc[static_cast<std::size_t>(k)];
    // deltas enter the narrowest resolvable element: one grid bin
    for (const auto& comp : out.deltas) {
        const double pos = comp.omega / h + grid.bins_per_side;
        const auto bin = static_cast<std::size_t>(
            std::clamp<long>(std::lround(pos), 0, n_bins - 1));
        values[bin] += std::numbers::pi * comp.weight / h;
    }
    // enforce evenness (the component set is (i,j) <-> (j,i) symmetric)
    for (int k = 0; k < grid.bins_per_side; ++k) {
        const std::size_t a = static_cast<std::size_t>(k);
        const std::size_t bsym = static_cast<std::size_t>(n_bins - 1 - k);
        const double avg = 0.5 * (values[a] + values[bsym]);
        values[a] = avg;
        values[bsym] = avg;
    }

    Spectrum raw;
    raw.omega = std::move(omega);
    raw.values = std::move(values);
    raw.normalization = SpectrumNormalization::Raw;
    raw.mean_removed = false;
    out.spectrum = normalized(raw, SpectrumNormalization::UnitSquare);
    return out;
}

struct Fig1Point {
    double u_over_j = 0.0;
    MeasurementKind kind = MeasurementKind::Coherence;
    PerturbativeSpectrum psd;
    LorentzFit fit;
};

// Sweeps U/J for both measurement kinds and quantifies each perturbative PSD
// by its maximum Lorentzian overlap.
inline std::vector<Fig1Point> fig1_scan(const ModelSpec& base,
                                        std::span<const double> u_over_j_grid,
                                        std::span<const MeasurementKind> kinds,
                                        const PsdGrid& grid = {}, unsigned workers = 0) {
    if (u_over_j_grid.empty() || kinds.empty())
        throw std::invalid_argument("fig1_scan: empty grid");
    const FockBasis basis = FockBasis::build(base.num_sites, base.num_particles, base.dim_cap);
    std::vector<Fig1Point> points;
    for (double u : u_over_j_grid) {
        ModelSpec spec = base;
        spec.u_over_j = u;
        const Hamiltonian h = build_hamiltonian(spec, basis);
        const SpectralData spectral = diagonalize(h.op, h.rescale_factor);
        for (MeasurementKind kind : kinds) {
            spec.measurement_kind = kind;
            const Measurement m = build_measurement(spec, basis);
            Fig1Point p;
            p.u_over_j = u;
            p.kind = kind;
            p.psd = perturbative_psd(spectral, m.op, grid, workers);
            p.fit = maximize_overlap(p.psd.spectrum);
            points.push_back(std::move(p));
        }
    }
    return points;
}

} // namespace phasescope
