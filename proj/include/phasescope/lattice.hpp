// lattice.hpp — 1D optical-lattice bands, Wannier functions, overlap integrals
//
// Units: energies in recoil energies E_r, lengths in 1/k_l (so the lattice
// period is pi and the Brillouin zone is (-1, 1]). With hbar = 1, m = 1/2
// a plane wave e^{i k x} has kinetic energy k^2.

#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phasescope/errors.hpp"
#include "phasescope/model.hpp"
#include "phasescope/util.hpp"

namespace phasescope {

inline constexpr double kLatticePeriod = std::numbers::pi;

struct LatticeSpec {
    double depth = 5.0;              // V_0 in recoil energies
    double lattice_wavenumber = 1.0; // k_l; declares the length unit
    int num_sites = 6;
    int plane_wave_cutoff = 15;      // plane waves e^{i 2 n x}, n = -Q..Q
    int points_per_period = 128;     // real-space quadrature resolution
    int bloch_points = 64;           // quasi-momentum grid size

    void validate() const {
        if (!(depth > 0.0)) throw std::invalid_argument("LatticeSpec: depth must be > 0");
        if (!(lattice_wavenumber > 0.0))
            throw std::invalid_argument("LatticeSpec: lattice_wavenumber must be > 0");
        if (num_sites < 1) throw std::invalid_argument("LatticeSpec: num_sites must be >= 1");
        if (plane_wave_cutoff < 8)
            throw std::invalid_argument("LatticeSpec: plane_wave_cutoff must be >= 8");
        if (points_per_period < 16)
            throw std::invalid_argument("LatticeSpec: need >= 16 quadrature points per period");
        if (bloch_points < 8 || bloch_points % 2 != 0)
            throw std::invalid_argument("LatticeSpec: bloch_points must be even and >= 8");
    }
};

enum class ProbeMode { HalfPeriod, ShiftedSamePeriod };

inline const char* to_string(ProbeMode m) {
    return m == ProbeMode::HalfPeriod ? "half-period" : "shifted-same-period";
}

struct ProbeSpec {
    ProbeMode mode = ProbeMode::ShiftedSamePeriod;
    Sublattice probed_sublattice = Sublattice::Even; // HalfPeriod alignment
    double coupling_scale = 1.0; // g^2/Delta; normalized out of the matrix
};

// Lowest-band Bloch solution of the central equation on a quasi-momentum grid.
struct BlochData {
    LatticeSpec spec;
    std::vector<double> quasimomenta;  // in (-1, 1], units of k_l
    Eigen::MatrixXd band_energies;     // (2Q+1) bands x N_q, ascending per column
    Eigen::MatrixXd lowest_band_coeff; // (2Q+1) x N_q, phase-fixed real coefficients
};

// Diagonalizes V_0 sin^2(x) in the plane-wave basis at every grid momentum.
// The lowest-band eigenvector phase is fixed so the Bloch function is real
// and positive at the site center x = 0 (the 1D inversion-symmetric
// convention that makes Wannier functions real and symmetric).
inline BlochData solve_bands(const LatticeSpec& spec) {
    spec.validate();
    const int q_count = spec.bloch_points;
    const int n_pw = 2 * spec.plane_wave_cutoff + 1;
    BlochData bloch;
    bloch.spec = spec;
    bloch.quasimomenta.resize(static_cast<std::size_t>(q_count));
    bloch.band_energies.resize(n_pw, q_count);
    bloch.lowest_band_coeff.resize(n_pw, q_count);
    for (int m = 0; m < q_count; ++m) {
        const double q = -1.0 + 2.0 * m / q_count;
        bloch.quasimomenta[static_cast<std::size_t>(m)] = q;
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_pw, n_pw);
        for (int n = 0; n < n_pw; ++n) {
            const double k = q + 2.0 * (n - spec.plane_wave_cutoff);
            h(n, n) = k * k + 0.5 * spec.depth;
            if (n + 1 < n_pw) {
                h(n, n + 1) = -0.25 * spec.depth;
                h(n + 1, n) = -0.25 * spec.depth;
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("solve_bands: eigensolver failed at q = " +
                                     format_double(q));
        bloch.band_energies.col(m) = solver.eigenvalues();
        Eigen::VectorXd c = solver.eigenvectors().col(0);
        const double at_center = c.sum(); // Bloch function value at x = 0, up to 1/sqrt(a)
        if (std::abs(at_center) < 1e-10 * std::sqrt(static_cast<double>(n_pw)))
            throw degeneracy_error("solve_bands: phase fixing ambiguous at q = " +
                                   format_double(q));
        if (at_center < 0.0) c = -c;
        bloch.lowest_band_coeff.col(m) = c;
    }
    return bloch;
}

// Wannier function of the lowest band, sampled on a uniform grid covering
// +-support_periods lattice periods around its site center and truncated to
// zero outside. hw0 holds the lattice Hamiltonian applied to w0, evaluated
// spectrally (exact on the Bloch solution, no finite differences).
struct WannierData {
    LatticeSpec spec;
    int support_periods = 5;
    double dx = 0.0;     // grid spacing, = pi / points_per_period
    Eigen::VectorXd w0;  // samples at x_i = -support*pi + i*dx
    Eigen::VectorXd hw0;

    int points_per_site() const { return spec.points_per_period; }
    double left_edge() const { return -support_periods * kLatticePeriod; }
    std::size_t size() const { return static_cast<std::size_t>(w0.size()); }
};

inline WannierData build_wannier(const BlochData& bloch, int support_periods = 5) {
    const LatticeSpec& spec = bloch.spec;
    const int q_count = spec.bloch_points;
    const int n_pw = 2 * spec.plane_wave_cutoff + 1;
    WannierData wd;
    wd.spec = spec;
    wd.support_periods = support_periods;
    wd.dx = kLatticePeriod / spec.points_per_period;
    const int npts = 2 * support_periods * spec.points_per_period + 1;
    wd.w0.setZero(npts);
    wd.hw0.setZero(npts);
    const double cell_norm = 1.0 / std::sqrt(kLatticePeriod);
    for (int i = 0; i < npts; ++i) {
        const double x = wd.left_edge() + i * wd.dx;
        double w = 0.0, hw = 0.0;
        for (int m = 0; m < q_count; ++m) {
            const double q = bloch.quasimomenta[static_cast<std::size_t>(m)];
            const double energy = bloch.band_energies(0, m);
            double psi = 0.0;
            for (int n = 0; n < n_pw; ++n) {
                const double k = q + 2.0 * (n - spec.plane_wave_cutoff);
                psi += bloch.lowest_band_coeff(n, m) * std::cos(k * x);
            }
            w += psi;
            hw += energy * psi;
        }
        wd.w0(i) = w * cell_norm / q_count;
        wd.hw0(i) = hw * cell_norm / q_count;
    }
    return wd;
}

// Sampled w_j on the same grid convention, site center at j * pi.
struct SampledWannier {
    std::vector<double> x;
    std::vector<double> w;
};

inline SampledWannier wannier_function(const WannierData& wd, int site) {
    SampledWannier s;
    s.x.resize(wd.size());
    s.w.resize(wd.size());
    const double shift = site * kLatticePeriod;
    for (std::size_t i = 0; i < wd.size(); ++i) {
        s.x[i] = wd.left_edge() + static_cast<double>(i) * wd.dx + shift;
        s.w[i] = wd.w0(static_cast<Eigen::Index>(i));
    }
    return s;
}

namespace detail {

// Overlap integral sum_i f(x_i) w0(x_i) w0(x_i - shift*pi) dx on the common
// support, by exact index arithmetic. Trapezoid weights are immaterial here:
// integrands vanish at the truncated support edges.
template <typename ProbeFn>
double wannier_pair_integral(const WannierData& wd, const Eigen::VectorXd& left,
                             const Eigen::VectorXd& right, int shift_sites, int stride,
                             ProbeFn&& probe, double site_offset) {
    const int ppp = wd.points_per_site();
    const int offset = shift_sites * ppp;
    const int n = static_cast<int>(wd.size());
    double acc = 0.0;
    for (int i = std::max(0, offset); i < n && i - offset < n; i += stride) {
        const double x = wd.left_edge() + i * wd.dx + site_offset;
        acc += probe(x) * left(i) * right(i - offset);
    }
    return acc * wd.dx * stride;
}

} // namespace detail

struct HubbardParameters {
    double tunneling_j = 0.0; // in E_r
    double onsite_u = 0.0;    // g_s times the quartic Wannier integral
};

// J from the kinetic+lattice integral between neighboring Wannier functions,
// U from the on-site quartic integral. Both are re-evaluated on a coarsened
// grid; a relative change above 1e-6 raises quadrature_error.
inline HubbardParameters hubbard_parameters(const WannierData& wd, double g_s = 1.0) {
    const auto unity = [](double) { return 1.0; };
    const auto j_at = [&](int stride) {
        return -detail::wannier_pair_integral(wd, wd.w0, wd.hw0, 1, stride, unity, 0.0);
    };
    const auto u_at = [&](int stride) {
        const Eigen::VectorXd w2 = wd.w0.array().square();
        return g_s * detail::wannier_pair_integral(wd, w2, w2, 0, stride, unity, 0.0);
    };
    HubbardParameters hp;
    hp.tunneling_j = j_at(1);
    hp.onsite_u = u_at(1);
    const double j_coarse = j_at(2), u_coarse = u_at(2);
    if (std::abs(j_coarse - hp.tunneling_j) > 1e-6 * std::max(1e-300, std::abs(hp.tunneling_j)))
        throw quadrature_error("hubbard_parameters: J integral not converged on this grid");
    if (g_s != 0.0 && std::abs(u_coarse - hp.onsite_u) > 1e-6 * std::abs(hp.onsite_u))
        throw quadrature_error("hubbard_parameters: U integral not converged on this grid");
    return hp;
}

struct MeasurementMatrix {
    enum class Provenance { ComputedFromWannier, Idealized };
    Eigen::MatrixXd entries; // L x L symmetric; max diagonal scaled to 1
    Provenance provenance = Provenance::Idealized;
    ProbeMode mode = ProbeMode::ShiftedSamePeriod;

    void validate() const {
        const Eigen::Index L = entries.rows();
        if (entries.cols() != L || L < 1)
            throw std::invalid_argument("MeasurementMatrix: entries must be square");
        if ((entries - entries.transpose()).cwiseAbs().maxCoeff() >
            1e-12 * std::max(1.0, entries.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("MeasurementMatrix: entries must be symmetric");
        // off-diagonal bands must decay with distance beyond nearest neighbor
        double prev = -1.0;
        for (Eigen::Index d = 1; d < L; ++d) {
            double band_max = 0.0;
            for (Eigen::Index j = 0; j + d < L; ++j)
                band_max = std::max(band_max, std::abs(entries(j, j + d)));
            if (d >= 2 && band_max > prev * (1.0 + 1e-9))
                throw std::invalid_argument(
                    "MeasurementMatrix: off-diagonal bands do not decay with distance");
            prev = band_max;
        }
    }

    static MeasurementMatrix idealized_population(int num_sites, Sublattice sub) {
        MeasurementMatrix m;
        m.provenance = Provenance::Idealized;
        m.mode = ProbeMode::HalfPeriod;
        m.entries = Eigen::MatrixXd::Zero(num_sites, num_sites);
        const int first = sub == Sublattice::Even ? 2 : 1;
        for (int j = first; j <= num_sites; j += 2) m.entries(j - 1, j - 1) = 1.0;
        return m;
    }

    static MeasurementMatrix idealized_coherence(int num_sites) {
        MeasurementMatrix m;
        m.provenance = Provenance::Idealized;
        m.mode = ProbeMode::ShiftedSamePeriod;
        m.entries = Eigen::MatrixXd::Zero(num_sites, num_sites);
        for (int j = 0; j + 1 < num_sites; ++j) {
            m.entries(j, j + 1) = 1.0;
            m.entries(j + 1, j) = 1.0;
        }
        return m;
    }
};

// Probe intensity |f_a(x)|^2 for the two cavity configurations, arranged so
// site j of the chain sits at x = (j-1) pi.
//   HalfPeriod:        cos^2((x - phase)/2), probe period twice the lattice's;
//                      lights up every other site (the probed sublattice).
//   ShiftedSamePeriod: sin^2(x), lattice periodicity shifted by pi/2; uniform
//                      on site centers, maximal on bonds.
inline double probe_intensity(const ProbeSpec& probe, double x) {
    if (probe.mode == ProbeMode::HalfPeriod) {
        const double phase = probe.probed_sublattice == Sublattice::Even ? kLatticePeriod : 0.0;
        const double c = std::cos(0.5 * (x - phase));
        return c * c;
    }
    const double s = std::sin(x);
    return s * s;
}

// M_jk overlap matrix between the probe intensity and Wannier pairs, with the
// maximum diagonal entry scaled to 1 (the physical prefactor g^2/Delta is
// carried by the measurement strength downstream).
inline MeasurementMatrix measurement_matrix(const WannierData& wd, const ProbeSpec& probe) {
    const int L = wd.spec.num_sites;
    MeasurementMatrix m;
    m.provenance = MeasurementMatrix::Provenance::ComputedFromWannier;
    m.mode = probe.mode;
    m.entries.setZero(L, L);
    const auto intensity = [&](double x) { return probe_intensity(probe, x); };
    double coarse_max_delta = 0.0, scale_ref = 0.0;
    for (int j = 1; j <= L; ++j) {
        for (int k = j; k <= L; ++k) {
            // integrate in w_j's frame: x = y + (j-1) pi, w_k(x) = w0(y - (k-j) pi)
            const double offset = (j - 1) * kLatticePeriod;
            const double fine = detail::wannier_pair_integral(wd, wd.w0, wd.w0, k - j, 1,
                                                              intensity, offset);
            const double coarse = detail::wannier_pair_integral(wd, wd.w0, wd.w0, k - j, 2,
                                                                intensity, offset);
            m.entries(j - 1, k - 1) = fine;
            m.entries(k - 1, j - 1) = fine;
            coarse_max_delta = std::max(coarse_max_delta, std::abs(coarse - fine));
            scale_ref = std::max(scale_ref, std::abs(fine));
        }
    }
    if (coarse_max_delta > 1e-6 * scale_ref)
        throw quadrature_error("measurement_matrix: overlap integrals not converged");
    const double diag_max = m.entries.diagonal().cwiseAbs().maxCoeff();
    if (diag_max <= 0.0)
        throw std::runtime_error("measurement_matrix: vanishing diagonal");
    m.entries /= diag_max;
    m.validate();
    return m;
}

// Max pointwise deviation between sum_j |w_j(x)|^2 and the lowest-band
// density over the central cell; a completeness diagnostic for tests.
inline double completeness_error(const BlochData& bloch, const WannierData& wd) {
    const LatticeSpec& spec = bloch.spec;
    const int n_pw = 2 * spec.plane_wave_cutoff + 1;
    const int ppp = wd.points_per_site();
    double worst = 0.0;
    for (int i = 0; i <= ppp; ++i) {
        const double x = i * wd.dx; // one cell, [0, pi]
        double wannier_sum = 0.0;
        for (int j = -wd.support_periods; j <= wd.support_periods; ++j) {
            const int idx = i - j * ppp + wd.support_periods * ppp;
            if (idx >= 0 && idx < static_cast<int>(wd.size())) {
                const double w = wd.w0(idx);
                wannier_sum += w * w;
            }
        }
        double bloch_sum = 0.0;
        for (int m = 0; m < spec.bloch_points; ++m) {
            const double q = bloch.quasimomenta[static_cast<std::size_t>(m)];
            double re = 0.0, im = 0.0;
            for (int n = 0; n < n_pw; ++n) {
                const double k = q + 2.0 * (n - spec.plane_wave_cutoff);
                re += bloch.lowest_band_coeff(n, m) * std::cos(k * x);
                im += bloch.lowest_band_coeff(n, m) * std::sin(k * x);
            }
            bloch_sum += (re * re + im * im) / kLatticePeriod;
        }
        bloch_sum /= spec.bloch_points;
        worst = std::max(worst, std::abs(wannier_sum - bloch_sum));
    }
    return worst;
}

} // namespace phasescope
