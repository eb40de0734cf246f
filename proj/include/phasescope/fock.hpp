// fock.hpp — bosonic Fock space enumeration and second-quantized operators
//
// The basis enumerates all occupation vectors (n_1,...,n_L) with sum N in
// descending lexicographic order, so serialized artifacts and eigenvector
// sign conventions are stable across runs.

#pragma once

#include <complex>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "phasescope/errors.hpp"
#include "phasescope/util.hpp"

namespace phasescope {

using Complex = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<Complex>;

inline constexpr std::size_t kDefaultDimCap = 200000;

// binomial(n, k); throws capacity_error when the value exceeds 64 bits.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        result = result * (n - k + i) / i; // exact: result holds C(n-k+i, i) after each step
        if (result > static_cast<unsigned __int128>(UINT64_MAX))
            throw capacity_error("binomial: basis dimension overflows 64 bits");
    }
    return static_cast<std::uint64_t>(result);
}

class FockBasis {
public:
    // Enumerates N bosons on L sites. Throws capacity_error when the
    // dimension binomial(N+L-1, L-1) exceeds dim_cap.
    static FockBasis build(int num_sites, int num_particles,
                           std::size_t dim_cap = kDefaultDimCap) {
        if (num_sites < 1) throw std::invalid_argument("FockBasis: num_sites must be >= 1");
        if (num_particles < 0) throw std::invalid_argument("FockBasis: num_particles must be >= 0");
        const std::uint64_t dim = binomial(
            static_cast<std::uint64_t>(num_particles) + num_sites - 1,
            static_cast<std::uint64_t>(num_sites) - 1);
        if (dim > dim_cap)
            throw capacity_error("FockBasis: dimension " + std::to_string(dim) +
                                 " exceeds cap " + std::to_string(dim_cap));
        FockBasis basis;
        basis.num_sites_ = num_sites;
        basis.num_particles_ = num_particles;
        basis.states_.reserve(dim);
        std::vector<int> occ(static_cast<std::size_t>(num_sites), 0);
        basis.enumerate(occ, 0, num_particles);
        basis.index_.reserve(basis.states_.size());
        for (std::size_t i = 0; i < basis.states_.size(); ++i)
            basis.index_.emplace(pack(basis.states_[i]), i);
        return basis;
    }

    int num_sites() const { return num_sites_; }
    int num_particles() const { return num_particles_; }
    std::size_t dimension() const { return states_.size(); }
    const std::vector<std::vector<int>>& states() const { return states_; }
    const std::vector<int>& state(std::size_t i) const { return states_[i]; }

    // Exact inverse of states(); throws for occupation vectors outside the basis.
    std::size_t index_of(std::span<const int> occupation) const {
        const auto it = index_.find(pack(occupation));
        if (it == index_.end())
            throw std::invalid_argument("FockBasis: occupation vector not in basis");
        return it->second;
    }

    bool contains(std::span<const int> occupation) const {
        return index_.find(pack(occupation)) != index_.end();
    }

    // Identifies compatible bases without holding references across modules.
    std::uint64_t signature() const {
        std::uint64_t h = fnv1a("fock/lex-desc");
        h = fnv1a(&num_sites_, sizeof num_sites_, h);
        h = fnv1a(&num_particles_, sizeof num_particles_, h);
        return h;
    }

private:
    void enumerate(std::vector<int>& occ, int site, int remaining) {
        if (site == num_sites_ - 1) {
            occ[static_cast<std::size_t>(site)] = remaining;
            states_.push_back(occ);
            return;
        }
        for (int n = remaining; n >= 0; --n) {
            occ[static_cast<std::size_t>(site)] = n;
            enumerate(occ, site + 1, remaining - n);
        }
    }

    static std::string pack(std::span<const int> occ) {
        std::string key(occ.size() * sizeof(int), '\0');
        std::memcpy(key.data(), occ.data(), key.size());
        return key;
    }

    int num_sites_ = 0;
    int num_particles_ = 0;
    std::vector<std::vector<int>> states_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Sparse operator in a FockBasis, validated Hermitian at construction.
class HermitianOperator {
public:
    HermitianOperator() = default;

    // Triplet constructor; rejects non-Hermitian data beyond 1e-12 relative.
    static HermitianOperator from_triplets(const FockBasis& basis,
                                           const std::vector<Eigen::Triplet<Complex>>& entries) {
        SparseOp mat(static_cast<Eigen::Index>(basis.dimension()),
                     static_cast<Eigen::Index>(basis.dimension()));
        mat.setFromTriplets(entries.begin(), entries.end());
        return from_sparse(basis, std::move(mat));
    }

    static HermitianOperator from_sparse(const FockBasis& basis, SparseOp mat) {
        if (mat.rows() != static_cast<Eigen::Index>(basis.dimension()) ||
            mat.cols() != static_cast<Eigen::Index>(basis.dimension()))
            throw std::invalid_argument("HermitianOperator: matrix does not match basis dimension");
        mat.makeCompressed();
        HermitianOperator op;
        op.dim_ = basis.dimension();
        op.basis_signature_ = basis.signature();
        op.mat_ = std::move(mat);
        op.check_hermitian();
        return op;
    }

    std::size_t dimension() const { return dim_; }
    std::uint64_t basis_signature() const { return basis_signature_; }
    const SparseOp& sparse() const { return mat_; }
    Eigen::MatrixXcd dense() const { return Eigen::MatrixXcd(mat_); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
        if (x.size() != static_cast<Eigen::Index>(dim_))
            throw std::invalid_argument("HermitianOperator: vector dimension mismatch");
        return mat_ * x;
    }

    // Largest |eigenvalue|; dense computation, intended for desk-scale dims.
    double operator_norm() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(dense(),
                                                               Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("operator_norm: eigensolver failed");
        return std::max(std::abs(solver.eigenvalues()(0)),
                        std::abs(solver.eigenvalues()(solver.eigenvalues().size() - 1)));
    }

    HermitianOperator scaled(double factor) const {
        HermitianOperator op(*this);
        op.mat_ *= factor;
        return op;
    }

    friend HermitianOperator operator+(const HermitianOperator& a, const HermitianOperator& b) {
        if (a.dim_ != b.dim_ || a.basis_signature_ != b.basis_signature_)
            throw std::invalid_argument("HermitianOperator: basis mismatch in sum");
        HermitianOperator op(a);
        op.mat_ = a.mat_ + b.mat_;
        op.mat_.makeCompressed();
        return op;
    }

private:
    void check_hermitian() const {
        const SparseOp diff = SparseOp(mat_.adjoint()) - mat_;
        double max_diff = 0.0, max_abs = 0.0;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (SparseOp::InnerIterator it(diff, k); it; ++it)
                max_diff = std::max(max_diff, std::abs(it.value()));
        for (int k = 0; k < mat_.outerSize(); ++k)
            for (SparseOp::InnerIterator it(mat_, k); it; ++it)
                max_abs = std::max(max_abs, std::abs(it.value()));
        if (max_diff > 1e-12 * std::max(1.0, max_abs))
            throw std::invalid_argument("HermitianOperator: matrix is not Hermitian");
    }

    std::size_t dim_ = 0;
    std::uint64_t basis_signature_ = 0;
    SparseOp mat_;
};

// b†_j b_k + b†_k b_j for j != k; the number operator n_j for j == k.
// Sites are 1-based.
inline HermitianOperator hopping_operator(const FockBasis& basis, int site_j, int site_k) {
    const int L = basis.num_sites();
    if (site_j < 1 || site_j > L || site_k < 1 || site_k > L)
        throw std::invalid_argument("hopping_operator: site index out of range");
    std::vector<Eigen::Triplet<Complex>> entries;
    const std::size_t j = static_cast<std::size_t>(site_j - 1);
    const std::size_t k = static_cast<std::size_t>(site_k - 1);
    if (site_j == site_k) {
        for (std::size_t i = 0; i < basis.dimension(); ++i)
            entries.emplace_back(static_cast<int>(i), static_cast<int>(i),
                                 Complex(basis.state(i)[j], 0.0));
        return HermitianOperator::from_triplets(basis, entries);
    }
    std::vector<int> target;
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
        const auto& occ = basis.state(i);
        if (occ[k] == 0) continue; // annihilation on empty site contributes nothing
        target = occ;
        target[k] -= 1;
        target[j] += 1;
        const std::size_t row = basis.index_of(target);
        const double amp = std::sqrt(static_cast<double>(occ[j] + 1) *
                                     static_cast<double>(occ[k]));
        entries.emplace_back(static_cast<int>(row), static_cast<int>(i), Complex(amp, 0.0));
        entries.emplace_back(static_cast<int>(i), static_cast<int>(row), Complex(amp, 0.0));
    }
    return HermitianOperator::from_triplets(basis, entries);
}

// Diagonal interaction sum_j n_j (n_j - 1).
inline HermitianOperator interaction_operator(const FockBasis& basis) {
    std::vector<Eigen::Triplet<Complex>> entries;
    entries.reserve(basis.dimension());
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
        double v = 0.0;
        for (int n : basis.state(i)) v += static_cast<double>(n) * (n - 1);
        entries.emplace_back(static_cast<int>(i), static_cast<int>(i), Complex(v, 0.0));
    }
    return HermitianOperator::from_triplets(basis, entries);
}

// Total particle number (diagonal, constant N within a fixed-N basis).
inline HermitianOperator total_number_operator(const FockBasis& basis) {
    std::vector<Eigen::Triplet<Complex>> entries;
    entries.reserve(basis.dimension());
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
        double v = 0.0;
        for (int n : basis.state(i)) v += n;
        entries.emplace_back(static_cast<int>(i), static_cast<int>(i), Complex(v, 0.0));
    }
    return HermitianOperator::from_triplets(basis, entries);
}

// Max-magnitude entry of AB - BA; exact zero means the operators commute.
inline double commutator_max_abs(const HermitianOperator& a, const HermitianOperator& b) {
    const SparseOp comm = a.sparse() * b.sparse() - b.sparse() * a.sparse();
    double m = 0.0;
    for (int k = 0; k < comm.outerSize(); ++k)
        for (SparseOp::InnerIterator it(comm, k); it; ++it)
            m = std::max(m, std::abs(it.value()));
    return m;
}

} // namespace phasescope
