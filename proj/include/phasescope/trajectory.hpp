// trajectory.hpp — diffusive stochastic Schrödinger evolution of a single
// measured realization
//
// Record and state form a closed pair: the increment is
//     dI = gamma <M> dt + sqrt(gamma) dW,
// and the (unnormalized) state is advanced with the measurement Kraus factor
//     exp((M/2) dI - (gamma/4) M^2 dt)
// between unitary half steps, then renormalized. These coefficients are the
// unique ones for which the Kraus family integrates to the identity over the
// record distribution, so a QND measurement leaves eigenstate populations
// martingales (Born rule) while the record mean stays gamma <M> dt. The
// ensemble average obeys drho = -i[H,rho]dt + (gamma/4) D[M] rho dt.
//
// Only real-symmetric operators are supported; every operator this library
// builds is real in the Fock basis, and the engine exploits that by evolving
// (Re, Im) column pairs with real matrix products.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phasescope/errors.hpp"
#include "phasescope/fock.hpp"
#include "phasescope/rng.hpp"
#include "phasescope/util.hpp"

namespace phasescope {

enum class Scheme { EulerMaruyama, SplitStepExponential };

inline const char* to_string(Scheme s) {
    return s == Scheme::EulerMaruyama ? "euler-maruyama" : "split-step-exponential";
}

struct TrajectoryConfig {
    double dt = 5e-4;      // default satisfies span * dt <= 0.01 at span 20
    double total_time = 2000.0;
    double gamma = 0.1;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::SplitStepExponential;
    int log_stride = 10;
    bool convergence_check = true; // short dt-halving probe before the run
    // Test hook: pre-generated Wiener increments (one per step) replacing the
    // counter-based stream; used for coupled-noise convergence studies.
    const std::vector<double>* injected_noise = nullptr;

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("TrajectoryConfig: dt must be > 0");
        if (!(total_time >= dt))
            throw std::invalid_argument("TrajectoryConfig: total_time must be >= dt");
        if (gamma < 0.0) throw std::invalid_argument("TrajectoryConfig: gamma must be >= 0");
        if (log_stride < 1) throw std::invalid_argument("TrajectoryConfig: log_stride must be >= 1");
    }

    std::size_t step_count() const {
        return static_cast<std::size_t>(std::llround(total_time / dt));
    }
};

struct MeasurementRecord {
    double gamma = 0.0;
    double dt = 0.0;
    double total_time = 0.0;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::SplitStepExponential;
    std::string operator_tag;
    std::uint64_t model_hash = 0;
    std::vector<double> increments;
};

struct TrajectoryLog {
    std::vector<double> times;
    std::vector<std::string> names;            // observable names, "m_meas" first
    std::vector<std::vector<double>> values;   // values[obs][tick]
    Eigen::VectorXcd final_state;              // Fock basis
    double max_norm_drift = 0.0;               // max |1 - norm before renormalization|
    double convergence_check_delta = 0.0;      // <M> deviation between dt and dt/2 probes
};

struct TrajectoryResult {
    MeasurementRecord record;
    TrajectoryLog log;
};

// Named observables evaluated at logged times: full operators and rank-one
// projections |<v|psi>|^2 (used for ground-state population).
struct ObservableSet {
    std::vector<std::pair<std::string, HermitianOperator>> operators;
    std::vector<std::pair<std::string, Eigen::VectorXcd>> projections;
};

namespace detail {

inline Eigen::MatrixXd require_real_dense(const Eigen::MatrixXcd& m, const char* what) {
    if (m.size() > 0 && m.imag().cwiseAbs().maxCoeff() >
                            1e-13 * std::max(1.0, m.real().cwiseAbs().maxCoeff()))
        throw std::invalid_argument(std::string(what) +
                                    ": only real-symmetric operators are supported");
    return m.real();
}

// Splits a complex vector into adjacent (Re, Im) columns.
inline void load_state(Eigen::MatrixXd& x, const Eigen::VectorXcd& psi, int pair) {
    x.col(2 * pair) = psi.real();
    x.col(2 * pair + 1) = psi.imag();
}

inline Eigen::VectorXcd read_state(const Eigen::MatrixXd& x, int pair) {
    Eigen::VectorXcd psi(x.rows());
    psi.real() = x.col(2 * pair);
    psi.imag() = x.col(2 * pair + 1);
    return psi;
}

} // namespace detail

class Propagator {
public:
    Propagator(const HermitianOperator& hamiltonian, const HermitianOperator& measured,
               ObservableSet observables = {})
        : dim_(hamiltonian.dimension()), observables_(std::move(observables)) {
        if (measured.dimension() != dim_ ||
            measured.basis_signature() != hamiltonian.basis_signature())
            throw std::invalid_argument("Propagator: operators do not share a basis");
        h_dense_ = detail::require_real_dense(hamiltonian.dense(), "Propagator[H]");
        m_dense_ = detail::require_real_dense(measured.dense(), "Propagator[M]");
        h_sparse_re_ = hamiltonian.sparse().real();
        m_sparse_re_ = measured.sparse().real();

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hs(h_dense_);
        if (hs.info() != Eigen::Success)
            throw std::runtime_error("Propagator: Hamiltonian eigensolver failed");
        h_evals_ = hs.eigenvalues();
        h_evecs_ = hs.eigenvectors();

        if (is_diagonal(m_sparse_re_)) {
            m_evals_ = m_dense_.diagonal();
            rotation_ = h_evecs_; // M eigenbasis is the Fock basis itself
        } else {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ms(m_dense_);
            if (ms.info() != Eigen::Success)
                throw std::runtime_error("Propagator: measurement eigensolver failed");
            m_evals_ = ms.eigenvalues();
            rotation_ = ms.eigenvectors().transpose() * h_evecs_;
        }

        for (const auto& [name, op] : observables_.operators) {
            if (op.dimension() != dim_)
                throw std::invalid_argument("Propagator: observable dimension mismatch");
            const Eigen::MatrixXd dense =
                detail::require_real_dense(op.dense(), "Propagator[observable]");
            obs_h_basis_.push_back(h_evecs_.transpose() * dense * h_evecs_);
        }
        for (const auto& [name, v] : observables_.projections) {
            if (v.size() != static_cast<Eigen::Index>(dim_))
                throw std::invalid_argument("Propagator: projection dimension mismatch");
            proj_re_.push_back(h_evecs_.transpose() * v.real());
            proj_im_.push_back(h_evecs_.transpose() * v.imag());
        }
    }

    double spectral_span() const { return h_evals_(h_evals_.size() - 1) - h_evals_(0); }

    void set_record_metadata(std::string operator_tag, std::uint64_t model_hash) {
        operator_tag_ = std::move(operator_tag);
        model_hash_ = model_hash;
    }

    TrajectoryResult run(const Eigen::VectorXcd& initial, const TrajectoryConfig& config) const {
        const std::uint64_t seed = config.seed;
        return run_batch(initial, config, std::span<const std::uint64_t>(&seed, 1)).front();
    }

    std::vector<TrajectoryResult> run_batch(const Eigen::VectorXcd& initial,
                                            const TrajectoryConfig& config,
                                            std::span<const std::uint64_t> seeds) const {
        config.validate();
        if (initial.size() != static_cast<Eigen::Index>(dim_))
            throw std::invalid_argument("run_batch: initial state dimension mismatch");
        if (std::abs(initial.norm() - 1.0) > 1e-10)
            throw std::invalid_argument("run_batch: initial state must be normalized");
        if (seeds.empty()) throw std::invalid_argument("run_batch: need at least one seed");
        if (config.injected_noise) {
            if (seeds.size() != 1)
                throw std::invalid_argument("run_batch: injected noise supports a single seed");
            if (config.injected_noise->size() < config.step_count())
                throw std::invalid_argument("run_batch: injected noise shorter than the run");
        }

        double check_delta = 0.0;
        if (config.convergence_check && config.gamma > 0.0 && !config.injected_noise)
            check_delta = convergence_probe(initial, config, seeds[0]);

        std::vector<TrajectoryResult> results =
            config.scheme == Scheme::SplitStepExponential
                ? run_split_step(initial, config, seeds)
                : run_euler(initial, config, seeds);
        for (auto& r : results) r.log.convergence_check_delta = check_delta;
        return results;
    }

private:
    static bool is_diagonal(const Eigen::SparseMatrix<double>& m) {
        for (int k = 0; k < m.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
                if (it.row() != it.col() && it.value() != 0.0) return false;
        return true;
    }

    MeasurementRecord make_record(const TrajectoryConfig& config, std::uint64_t seed) const {
        MeasurementRecord rec;
        rec.gamma = config.gamma;
        rec.dt = config.dt;
        rec.total_time = config.total_time;
        rec.seed = seed;
        rec.scheme = config.scheme;
        rec.operator_tag = operator_tag_;
        rec.model_hash = model_hash_;
        rec.increments.reserve(config.step_count());
        return rec;
    }

    TrajectoryLog make_log() const {
        TrajectoryLog log;
        log.names.push_back("m_meas");
        for (const auto& [name, op] : observables_.operators) log.names.push_back(name);
        for (const auto& [name, v] : observables_.projections) log.names.push_back(name);
        log.values.resize(log.names.size());
        return log;
    }

    // Observables are evaluated on the H-eigenbasis state (Re, Im) pair.
    void log_tick(TrajectoryLog& log, double time, const Eigen::VectorXd& re,
                  const Eigen::VectorXd& im) const {
        log.times.push_back(time);
        std::size_t col = 0;
        const Eigen::VectorXd m_re = rotation_ * re;
        const Eigen::VectorXd m_im = rotation_ * im;
        log.values[col++].push_back(
            (m_evals_.array() * (m_re.array().square() + m_im.array().square())).sum());
        for (const auto& a : obs_h_basis_)
            log.values[col++].push_back(re.dot(a * re) + im.dot(a * im));
        for (std::size_t p = 0; p < proj_re_.size(); ++p) {
            const double c_re = proj_re_[p].dot(re) + proj_im_[p].dot(im);
            const double c_im = proj_re_[p].dot(im) - proj_im_[p].dot(re);
            log.values[col++].push_back(c_re * c_re + c_im * c_im);
        }
    }

    // Strang splitting: exact unitary half steps in the H eigenbasis around an
    // exact stochastic measurement step in the M eigenbasis.
    std::vector<TrajectoryResult> run_split_step(const Eigen::VectorXcd& initial,
                                                 const TrajectoryConfig& config,
                                                 std::span<const std::uint64_t> seeds) const {
        const int n_seeds = static_cast<int>(seeds.size());
        const Eigen::Index d = static_cast<Eigen::Index>(dim_);
        const std::size_t steps = config.step_count();
        const double dt = config.dt, gamma = config.gamma;
        const double sqrt_gamma_dt = std::sqrt(gamma * dt);

        const Eigen::ArrayXd cos_half = (h_evals_.array() * (-0.5 * dt)).cos();
        const Eigen::ArrayXd sin_half = (h_evals_.array() * (-0.5 * dt)).sin();
        const Eigen::ArrayXd m_vals = m_evals_.array();
        const Eigen::ArrayXd damping = 0.25 * gamma * dt * m_vals.square();

        Eigen::MatrixXd x_h(d, 2 * n_seeds), x_m(d, 2 * n_seeds);
        Eigen::VectorXcd psi0_h = h_evecs_.transpose() * initial;
        psi0_h.normalize();
        for (int k = 0; k < n_seeds; ++k) detail::load_state(x_h, psi0_h, k);

        std::vector<TrajectoryResult> out;
        out.reserve(seeds.size());
        std::vector<PhiloxRng> rngs;
        for (std::uint64_t s : seeds) {
            rngs.emplace_back(s);
            TrajectoryResult r;
            r.record = make_record(config, s);
            r.log = make_log();
            out.push_back(std::move(r));
        }
        for (int k = 0; k < n_seeds; ++k)
            log_tick(out[static_cast<std::size_t>(k)].log, 0.0, x_h.col(2 * k),
                     x_h.col(2 * k + 1));

        Eigen::ArrayXd scale(d);
        for (std::size_t step = 0; step < steps; ++step) {
            // unitary half step (diagonal in the H eigenbasis)
            for (int k = 0; k < 2 * n_seeds; k += 2) {
                Eigen::ArrayXd re = x_h.col(k).array() * cos_half + x_h.col(k + 1).array() * sin_half;
                x_h.col(k + 1) = (x_h.col(k + 1).array() * cos_half - x_h.col(k).array() * sin_half).matrix();
                x_h.col(k) = re.matrix();
            }
            x_m.noalias() = rotation_ * x_h;
            for (int k = 0; k < n_seeds; ++k) {
                auto re = x_m.col(2 * k).array();
                auto im = x_m.col(2 * k + 1).array();
                const double norm2 = (re.square() + im.square()).sum();
                const double exp_m = (m_vals * (re.square() + im.square())).sum() / norm2;
                const double dw = config.injected_noise
                                      ? (*config.injected_noise)[step]
                                      : rngs[static_cast<std::size_t>(k)].next_normal() *
                                            std::sqrt(dt);
                const double di = gamma * exp_m * dt + std::sqrt(gamma) * dw;
                auto& result = out[static_cast<std::size_t>(k)];
                result.record.increments.push_back(di);
                if (gamma > 0.0) {
                    scale = (0.5 * di * m_vals - damping).exp();
                    re *= scale;
                    im *= scale;
                }
                const double norm = std::sqrt((re.square() + im.square()).sum());
                if (!std::isfinite(norm))
                    throw step_size_error("trajectory: non-finite state norm");
                if (norm < 1e-12)
                    throw step_size_error("trajectory: norm collapse, reduce the time step");
                if (gamma > 0.0)
                    result.log.max_norm_drift =
                        std::max(result.log.max_norm_drift, std::abs(norm - 1.0));
                re /= norm;
                im /= norm;
            }
            x_h.noalias() = rotation_.transpose() * x_m;
            for (int k = 0; k < 2 * n_seeds; k += 2) {
                Eigen::ArrayXd re = x_h.col(k).array() * cos_half + x_h.col(k + 1).array() * sin_half;
                x_h.col(k + 1) = (x_h.col(k + 1).array() * cos_half - x_h.col(k).array() * sin_half).matrix();
                x_h.col(k) = re.matrix();
            }
            if ((step + 1) % static_cast<std::size_t>(config.log_stride) == 0 ||
                step + 1 == steps)
                for (int k = 0; k < n_seeds; ++k)
                    log_tick(out[static_cast<std::size_t>(k)].log,
                             static_cast<double>(step + 1) * dt, x_h.col(2 * k),
                             x_h.col(2 * k + 1));
        }
        for (int k = 0; k < n_seeds; ++k) {
            const Eigen::VectorXcd psi_h = detail::read_state(x_h, k);
            out[static_cast<std::size_t>(k)].log.final_state = h_evecs_ * psi_h;
        }
        return out;
    }

    // Euler-Maruyama on the linear record-driven form, renormalized each step.
    // Runs in the Fock basis with sparse operators; simpler and slower, used
    // as the convergence reference for the exponential scheme.
    std::vector<TrajectoryResult> run_euler(const Eigen::VectorXcd& initial,
                                            const TrajectoryConfig& config,
                                            std::span<const std::uint64_t> seeds) const {
        std::vector<TrajectoryResult> out;
        for (std::uint64_t seed : seeds) {
            TrajectoryConfig single = config;
            single.seed = seed;
            out.push_back(run_euler_single(initial, single));
        }
        return out;
    }

    TrajectoryResult run_euler_single(const Eigen::VectorXcd& initial,
                                      const TrajectoryConfig& config) const {
        const std::size_t steps = config.step_count();
        const double dt = config.dt, gamma = config.gamma;
        PhiloxRng rng(config.seed);
        TrajectoryResult result;
        result.record = make_record(config, config.seed);
        result.log = make_log();

        Eigen::VectorXd re = initial.real(), im = initial.imag();
        const auto log_fock = [&](double time) {
            // reuse the H-eigenbasis observable path by rotating the state
            const Eigen::VectorXd re_h = h_evecs_.transpose() * re;
            const Eigen::VectorXd im_h = h_evecs_.transpose() * im;
            log_tick(result.log, time, re_h, im_h);
        };
        log_fock(0.0);
        Eigen::VectorXd h_re(re.size()), h_im(re.size()), m_re(re.size()), m_im(re.size());
        for (std::size_t step = 0; step < steps; ++step) {
            h_re.noalias() = h_sparse_re_ * re;
            h_im.noalias() = h_sparse_re_ * im;
            m_re.noalias() = m_sparse_re_ * re;
            m_im.noalias() = m_sparse_re_ * im;
            const double exp_m = re.dot(m_re) + im.dot(m_im);
            const double dw = config.injected_noise ? (*config.injected_noise)[step]
                                                    : rng.next_normal() * std::sqrt(dt);
            const double di = gamma * exp_m * dt + std::sqrt(gamma) * dw;
            result.record.increments.push_back(di);
            // psi' = psi + (-iH - (gamma/8) M^2) psi dt + (M/2) psi dI
            Eigen::VectorXd new_re = re + dt * h_im + 0.5 * di * m_re;
            Eigen::VectorXd new_im = im - dt * h_re + 0.5 * di * m_im;
            if (gamma > 0.0) {
                new_re.noalias() -= (gamma / 8.0 * dt) * (m_sparse_re_ * m_re);
                new_im.noalias() -= (gamma / 8.0 * dt) * (m_sparse_re_ * m_im);
            }
            const double norm = std::sqrt(new_re.squaredNorm() + new_im.squaredNorm());
            if (!std::isfinite(norm))
                throw step_size_error("trajectory: non-finite state norm");
            if (norm < 1e-12)
                throw step_size_error("trajectory: norm collapse, reduce the time step");
            result.log.max_norm_drift =
                std::max(result.log.max_norm_drift, std::abs(norm - 1.0));
            re = new_re / norm;
            im = new_im / norm;
            if ((step + 1) % static_cast<std::size_t>(config.log_stride) == 0 ||
                step + 1 == steps)
                log_fock(static_cast<double>(step + 1) * dt);
        }
        result.log.final_state.resize(re.size());
        result.log.final_state.real() = re;
        result.log.final_state.imag() = im;
        return result;
    }

    // Short coupled-noise probe comparing <M> after a window integrated at dt
    // and at dt/2; the deviation is reported in the log for step-size audits.
    double convergence_probe(const Eigen::VectorXcd& initial, const TrajectoryConfig& config,
                             std::uint64_t seed) const {
        const std::size_t coarse_steps = std::min<std::size_t>(128, config.step_count());
        PhiloxRng rng(mix64(seed ^ 0x636f6e76ULL));
        std::vector<double> fine(2 * coarse_steps);
        for (double& w : fine) w = rng.next_normal() * std::sqrt(0.5 * config.dt);
        std::vector<double> coarse(coarse_steps);
        for (std::size_t i = 0; i < coarse_steps; ++i)
            coarse[i] = fine[2 * i] + fine[2 * i + 1];

        TrajectoryConfig probe = config;
        probe.convergence_check = false;
        probe.log_stride = 1;
        probe.total_time = static_cast<double>(coarse_steps) * config.dt;
        probe.injected_noise = &coarse;
        const std::uint64_t one_seed = seed;
        const auto at_dt =
            run_batch(initial, probe, std::span<const std::uint64_t>(&one_seed, 1)).front();
        probe.dt = 0.5 * config.dt;
        probe.injected_noise = &fine;
        const auto at_half =
            run_batch(initial, probe, std::span<const std::uint64_t>(&one_seed, 1)).front();
        return std::abs(at_dt.log.values[0].back() - at_half.log.values[0].back());
    }

    std::size_t dim_;
    ObservableSet observables_;
    Eigen::MatrixXd h_dense_, m_dense_;
    Eigen::SparseMatrix<double> h_sparse_re_, m_sparse_re_;
    Eigen::VectorXd h_evals_, m_evals_;
    Eigen::MatrixXd h_evecs_;
    Eigen::MatrixXd rotation_; // H eigenbasis -> M eigenbasis
    std::vector<Eigen::MatrixXd> obs_h_basis_;
    std::vector<Eigen::VectorXd> proj_re_, proj_im_;
    std::string operator_tag_;
    std::uint64_t model_hash_ = 0;
};

// Single-trajectory convenience wrapper.
inline TrajectoryResult run_trajectory(const HermitianOperator& hamiltonian,
                                       const HermitianOperator& measured,
                                       const Eigen::VectorXcd& initial,
                                       const TrajectoryConfig& config,
                                       ObservableSet observables = {}) {
    Propagator prop(hamiltonian, measured, std::move(observables));
    return prop.run(initial, config);
}

// Arithmetic mean of a logged observable after discarding an initial fraction.
inline double time_average_expectation(const TrajectoryLog& log, const std::string& name,
                                       double discard_fraction = 0.0) {
    if (discard_fraction < 0.0 || discard_fraction >= 1.0)
        throw std::invalid_argument("time_average_expectation: discard fraction in [0,1)");
    for (std::size_t i = 0; i < log.names.size(); ++i) {
        if (log.names[i] != name) continue;
        const auto& series = log.values[i];
        const std::size_t skip =
            static_cast<std::size_t>(discard_fraction * static_cast<double>(series.size()));
        if (skip >= series.size())
            throw std::invalid_argument("time_average_expectation: empty averaging window");
        return mean(std::span<const double>(series).subspan(skip));
    }
    throw std::invalid_argument("time_average_expectation: observable '" + name +
                                "' was not logged");
}

// Time-averaged ground-state population; requires the "gs_overlap" projection
// to have been registered before the run.
inline double ground_state_residence(const TrajectoryLog& log, double discard_fraction = 0.0) {
    return time_average_expectation(log, "gs_overlap", discard_fraction);
}

} // namespace phasescope
