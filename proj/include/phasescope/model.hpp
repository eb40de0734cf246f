// model.hpp — Bose-Hubbard Hamiltonian, measurement operators, exact spectra
//
// Couplings are parameterized by the dimensionless ratio U/J alone: J and U
// are placed on the unit circle (J^2 + U^2 = 1) and the spectrum is then
// rescaled to a fixed span, so different ratios share a frequency axis.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "phasescope/errors.hpp"
#include "phasescope/fock.hpp"

namespace phasescope {

enum class Boundary { Open, Periodic };
enum class MeasurementKind { Population, Coherence };
enum class Sublattice { Even, Odd };

inline const char* to_string(Boundary b) { return b == Boundary::Open ? "open" : "periodic"; }
inline const char* to_string(MeasurementKind k) {
    return k == MeasurementKind::Population ? "population" : "coherence";
}
inline const char* to_string(Sublattice s) { return s == Sublattice::Even ? "even" : "odd"; }

struct ModelSpec {
    int num_sites = 6;
    int num_particles = 6;
    double u_over_j = 1.0; // may be +inf for the J = 0 limit
    double rescale_span = 20.0;
    bool rescale = true;
    Boundary boundary = Boundary::Open;
    MeasurementKind measurement_kind = MeasurementKind::Coherence;
    Sublattice probed_sublattice = Sublattice::Even;
    // Optional L x L symmetric matrix of site-pair couplings replacing the
    // idealized operator (computed by the lattice module).
    std::optional<Eigen::MatrixXd> measurement_matrix;
    std::size_t dim_cap = kDefaultDimCap;

    void validate() const {
        if (num_sites < 1) throw std::invalid_argument("ModelSpec: num_sites must be >= 1");
        if (num_particles < 0) throw std::invalid_argument("ModelSpec: num_particles must be >= 0");
        if (u_over_j < 0.0 || std::isnan(u_over_j))
            throw std::invalid_argument("ModelSpec: u_over_j must be >= 0");
        if (rescale && !(rescale_span > 0.0))
            throw std::invalid_argument("ModelSpec: rescale_span must be > 0");
        if (measurement_matrix &&
            (measurement_matrix->rows() != num_sites || measurement_matrix->cols() != num_sites))
            throw std::invalid_argument("ModelSpec: measurement_matrix must be L x L");
    }

    double coupling_j() const {
        if (std::isinf(u_over_j)) return 0.0;
        return 1.0 / std::sqrt(1.0 + u_over_j * u_over_j);
    }
    double coupling_u() const {
        if (std::isinf(u_over_j)) return 1.0;
        return u_over_j / std::sqrt(1.0 + u_over_j * u_over_j);
    }

    std::uint64_t hash() const {
        std::string tag = std::to_string(num_sites) + "|" + std::to_string(num_particles) + "|" +
                          format_double(u_over_j) + "|" + format_double(rescale_span) + "|" +
                          std::to_string(rescale) + "|" + to_string(boundary) + "|" +
                          to_string(measurement_kind) + "|" + to_string(probed_sublattice);
        std::uint64_t h = fnv1a(tag);
        if (measurement_matrix)
            h = fnv1a(measurement_matrix->data(),
                      sizeof(double) * static_cast<std::size_t>(measurement_matrix->size()), h);
        return h;
    }
};

// Bare Bose-Hubbard Hamiltonian with explicit couplings, no rescaling:
//   H = -J sum_<j,k> (b†_j b_k + b†_k b_j) + (U/2) sum_j n_j (n_j - 1)
inline HermitianOperator build_bose_hubbard(const FockBasis& basis, double j_coupling,
                                            double u_coupling, Boundary boundary) {
    const int L = basis.num_sites();
    SparseOp acc(static_cast<Eigen::Index>(basis.dimension()),
                 static_cast<Eigen::Index>(basis.dimension()));
    for (int j = 1; j < L; ++j)
        acc += SparseOp(-j_coupling * hopping_operator(basis, j, j + 1).sparse());
    if (boundary == Boundary::Periodic && L >= 3)
        acc += SparseOp(-j_coupling * hopping_operator(basis, L, 1).sparse());
    acc += SparseOp(0.5 * u_coupling * interaction_operator(basis).sparse());
    return HermitianOperator::from_sparse(basis, std::move(acc));
}

struct Hamiltonian {
    HermitianOperator op;
    double rescale_factor = 1.0; // multiplies the bare operator
    double coupling_j = 0.0;
    double coupling_u = 0.0;
    double spectral_span = 0.0; // E_max - E_min after rescaling
};

namespace detail {

inline Eigen::VectorXd eigenvalues_only(const HermitianOperator& op) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(op.dense(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigenvalues_only: eigensolver failed");
    return solver.eigenvalues();
}

} // namespace detail

// Assembles the Hamiltonian for a spec and applies the spectral rescaling
// H -> c H with c = span / (E_max - E_min). A shift is never applied; only
// eigenvalue differences matter downstream.
inline Hamiltonian build_hamiltonian(const ModelSpec& spec, const FockBasis& basis) {
    spec.validate();
    if (basis.num_sites() != spec.num_sites || basis.num_particles() != spec.num_particles)
        throw std::invalid_argument("build_hamiltonian: basis does not match spec");
    Hamiltonian h;
    h.coupling_j = spec.coupling_j();
    h.coupling_u = spec.coupling_u();
    h.op = build_bose_hubbard(basis, h.coupling_j, h.coupling_u, spec.boundary);
    const Eigen::VectorXd evals = detail::eigenvalues_only(h.op);
    const double bare_span = evals(evals.size() - 1) - evals(0);
    if (spec.rescale) {
        if (bare_span < 1e-12)
            throw std::invalid_argument(
                "build_hamiltonian: flat spectrum cannot be rescaled to a fixed span");
        h.rescale_factor = spec.rescale_span / bare_span;
        h.op = h.op.scaled(h.rescale_factor);
        h.spectral_span = spec.rescale_span;
    } else {
        h.spectral_span = bare_span;
    }
    return h;
}

struct Measurement {
    HermitianOperator op; // scaled to unit operator norm
    double norm_factor = 1.0; // divisor applied to the bare operator
    MeasurementKind kind = MeasurementKind::Coherence;
    bool idealized = true;
};

// Measured operator for a spec, scaled to unit operator norm so the
// measurement strength gamma carries all of the physical scale.
//
// Idealized forms: Population sums n_j over the probed sublattice; Coherence
// sums nearest-neighbor b†_j b_{j+1} + h.c. With a measurement matrix the
// full sum over site pairs is built instead; a Coherence-kind matrix first
// has the uniform part of its diagonal removed, since a conserved total
// population only offsets the record.
inline Measurement build_measurement(const ModelSpec& spec, const FockBasis& basis) {
    spec.validate();
    if (basis.num_sites() != spec.num_sites || basis.num_particles() != spec.num_particles)
        throw std::invalid_argument("build_measurement: basis does not match spec");
    const int L = basis.num_sites();
    SparseOp acc(static_cast<Eigen::Index>(basis.dimension()),
                 static_cast<Eigen::Index>(basis.dimension()));
    Measurement m;
    m.kind = spec.measurement_kind;
    if (spec.measurement_matrix) {
        m.idealized = false;
        Eigen::MatrixXd mat = *spec.measurement_matrix;
        if ((mat - mat.transpose()).cwiseAbs().maxCoeff() > 1e-12 * mat.cwiseAbs().maxCoeff())
            throw std::invalid_argument("build_measurement: measurement_matrix must be symmetric");
        if (spec.measurement_kind == MeasurementKind::Coherence)
            mat.diagonal().array() -= mat.diagonal().mean();
        for (int j = 1; j <= L; ++j) {
            if (mat(j - 1, j - 1) != 0.0)
                acc += SparseOp(mat(j - 1, j - 1) * hopping_operator(basis, j, j).sparse());
            for (int k = j + 1; k <= L; ++k)
                if (mat(j - 1, k - 1) != 0.0)
                    acc += SparseOp(mat(j - 1, k - 1) * hopping_operator(basis, j, k).sparse());
        }
    } else if (spec.measurement_kind == MeasurementKind::Population) {
        const int first = spec.probed_sublattice == Sublattice::Even ? 2 : 1;
        for (int j = first; j <= L; j += 2)
            acc += hopping_operator(basis, j, j).sparse();
    } else {
        for (int j = 1; j < L; ++j)
            acc += hopping_operator(basis, j, j + 1).sparse();
        if (spec.boundary == Boundary::Periodic && L >= 3)
            acc += hopping_operator(basis, L, 1).sparse();
    }
    HermitianOperator bare = HermitianOperator::from_sparse(basis, std::move(acc));
    const double norm = bare.operator_norm();
    if (norm <= 0.0)
        throw std::invalid_argument("build_measurement: operator vanishes for this spec");
    m.norm_factor = norm;
    m.op = bare.scaled(1.0 / norm);
    if (m.idealized) {
        // Structural commutation contract of the two idealized operators.
        const HermitianOperator part =
            spec.measurement_kind == MeasurementKind::Population
                ? interaction_operator(basis)
                : build_bose_hubbard(basis, 1.0, 0.0, spec.boundary);
        if (commutator_max_abs(m.op, part) > 1e-12)
            throw std::runtime_error("build_measurement: commutation contract violated");
    }
    return m;
}

struct SpectralData {
    Eigen::VectorXd eigenvalues;  // ascending
    Eigen::MatrixXcd eigenvectors; // orthonormal columns
    double rescale_factor = 1.0;   // factor already applied to the operator
};

// Dense diagonalization with residual and orthonormality verification.
inline SpectralData diagonalize(const HermitianOperator& op, double rescale_factor = 1.0,
                                std::size_t dense_cap = 5000) {
    if (op.dimension() > dense_cap)
        throw capacity_error("diagonalize: dimension " + std::to_string(op.dimension()) +
                             " exceeds dense-solver cap " + std::to_string(dense_cap));
    const Eigen::MatrixXcd dense = op.dense();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(dense);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("diagonalize: eigensolver failed");
    SpectralData data;
    data.eigenvalues = solver.eigenvalues();
    data.eigenvectors = solver.eigenvectors();
    data.rescale_factor = rescale_factor;
    const double h_norm = dense.cwiseAbs().maxCoeff();
    const double residual =
        (dense * data.eigenvectors - data.eigenvectors * data.eigenvalues.asDiagonal())
            .cwiseAbs()
            .maxCoeff();
    if (residual > 1e-9 * std::max(1.0, h_norm))
        throw std::runtime_error("diagonalize: residual check failed");
    const double ortho = (data.eigenvectors.adjoint() * data.eigenvectors -
                          Eigen::MatrixXcd::Identity(dense.rows(), dense.cols()))
                             .cwiseAbs()
                             .maxCoeff();
    if (ortho > 1e-10)
        throw std::runtime_error("diagonalize: eigenvectors not orthonormal");
    return data;
}

// Lowest eigenvector with a fixed global phase (largest component real
// positive). A ground-state degeneracy within 1e-10 is an error so runs
// stay reproducible.
inline Eigen::VectorXcd ground_state(const SpectralData& spectral) {
    if (spectral.eigenvalues.size() == 0)
        throw std::invalid_argument("ground_state: empty spectrum");
    if (spectral.eigenvalues.size() > 1 &&
        spectral.eigenvalues(1) - spectral.eigenvalues(0) < 1e-10)
        throw degeneracy_error("ground_state: degenerate lowest eigenvalue");
    Eigen::VectorXcd gs = spectral.eigenvectors.col(0);
    Eigen::Index imax = 0;
    gs.cwiseAbs().maxCoeff(&imax);
    const Complex phase = gs(imax) / std::abs(gs(imax));
    gs /= phase;
    gs.normalize();
    return gs;
}

// Real expectation value of a Hermitian operator.
inline double expectation(const HermitianOperator& op, const Eigen::VectorXcd& state) {
    return std::real(state.dot(op.apply(state)));
}

} // namespace phasescope
