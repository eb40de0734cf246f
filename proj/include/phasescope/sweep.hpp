// sweep.hpp — (U/J, gamma) parameter sweeps, phase diagrams, reports
//
// Every cell of a sweep is a pure function of the plan: derived seeds mix the
// base seed with the cell's grid indices, workers share only read-only model
// data, and completed cells are checkpointed to content-addressed files so a
// resumed sweep reproduces the diagram byte for byte.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phasescope/model.hpp"
#include "phasescope/perturbative.hpp"
#include "phasescope/spectrum.hpp"
#include "phasescope/trajectory.hpp"
#include "phasescope/util.hpp"
#include "phasescope/version.hpp"

namespace phasescope {

struct SweepPlan {
    ModelSpec model; // template; measurement_kind is overridden per cell
    std::vector<double> u_over_j_grid;
    std::vector<double> gamma_grid;
    std::vector<MeasurementKind> kinds = {MeasurementKind::Population,
                                          MeasurementKind::Coherence};
    int seeds_per_point = 4;
    std::uint64_t base_seed = 1;
    TrajectoryConfig trajectory; // per-cell template; seed/gamma filled per cell
    bool remove_mean = true;
    double omega_cap = 40.0;
    double discard_fraction = 0.0; // initial fraction dropped from time averages
    std::string output_dir;       // empty: no checkpoints, in-memory only
    bool write_cell_records = false;
    unsigned workers = 0; // 0: PHASESCOPE_WORKERS env or hardware concurrency

    void validate() const {
        model.validate();
        if (u_over_j_grid.empty() || gamma_grid.empty() || kinds.empty())
            throw std::invalid_argument("SweepPlan: grids must be nonempty");
        if (!std::is_sorted(u_over_j_grid.begin(), u_over_j_grid.end()) ||
            !std::is_sorted(gamma_grid.begin(), gamma_grid.end()))
            throw std::invalid_argument("SweepPlan: grids must be sorted ascending");
        if (seeds_per_point < 1)
            throw std::invalid_argument("SweepPlan: seeds_per_point must be >= 1");
        for (double g : gamma_grid)
            if (!(g > 0.0)) throw std::invalid_argument("SweepPlan: gamma grid must be > 0");
        trajectory.validate();
        if (discard_fraction < 0.0 || discard_fraction >= 1.0)
            throw std::invalid_argument("SweepPlan: discard_fraction in [0,1)");
    }

    // Derived seed: base seed mixed with the cell's grid indices.
    std::uint64_t derived_seed(std::size_t iu, std::size_t ig, std::size_t ikind,
                               std::size_t iseed) const {
        const std::uint64_t packed = (static_cast<std::uint64_t>(iu) << 48) ^
                                     (static_cast<std::uint64_t>(ig) << 32) ^
                                     (static_cast<std::uint64_t>(ikind) << 16) ^
                                     static_cast<std::uint64_t>(iseed);
        return mix64(base_seed ^ mix64(packed));
    }

    nlohmann::json to_json() const;
    static SweepPlan from_json(const nlohmann::json& j);
    std::uint64_t hash() const { return fnv1a(to_json().dump()); }
};

struct CellResult {
    std::size_t iu = 0, ig = 0, ikind = 0;
    int seed_index = 0;
    double u_over_j = 0.0;
    double gamma = 0.0;
    MeasurementKind kind = MeasurementKind::Population;
    std::uint64_t seed = 0;
    double overlap = 0.0;
    double gamma_max = 0.0;
    bool boundary_flag = false;
    double coh_before = 0.0; // ground-state <M_coh> (unit-norm operator)
    double coh_after = 0.0;  // time-averaged <M_coh> along the trajectory
    double residence = 0.0;  // time-averaged ground-state population
    double mean_record = 0.0; // time average of dI/dt
    bool failed = false;
    std::string error;
};

struct PhaseDiagram {
    SweepPlan plan;
    std::string version = kVersion;
    std::uint64_t plan_hash = 0;
    std::vector<CellResult> cells; // sorted by (ikind, iu, ig, seed_index)
    int failed_cells = 0;
};

// ------------------------------ JSON layer -----------------------------------

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const char* where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
    }
}

inline MeasurementKind measurement_kind_from_string(const std::string& s) {
    if (s == "population") return MeasurementKind::Population;
    if (s == "coherence") return MeasurementKind::Coherence;
    throw std::invalid_argument("unknown measurement kind '" + s + "'");
}

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "euler-maruyama") return Scheme::EulerMaruyama;
    if (s == "split-step-exponential") return Scheme::SplitStepExponential;
    throw std::invalid_argument("unknown scheme '" + s + "'");
}

inline nlohmann::json model_spec_to_json(const ModelSpec& m) {
    nlohmann::json j{{"num_sites", m.num_sites},
                     {"num_particles", m.num_particles},
                     {"u_over_j", m.u_over_j},
                     {"rescale_span", m.rescale_span},
                     {"rescale", m.rescale},
                     {"boundary", to_string(m.boundary)},
                     {"measurement_kind", to_string(m.measurement_kind)},
                     {"probed_sublattice", to_string(m.probed_sublattice)}};
    if (m.measurement_matrix) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < m.measurement_matrix->rows(); ++r) {
            std::vector<double> row;
            for (Eigen::Index c = 0; c < m.measurement_matrix->cols(); ++c)
                row.push_back((*m.measurement_matrix)(r, c));
            rows.push_back(std::move(row));
        }
        j["measurement_matrix"] = rows;
    }
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"num_sites", "num_particles", "u_over_j", "rescale_span", "rescale",
                         "boundary", "measurement_kind", "probed_sublattice",
                         "measurement_matrix"},
                        "model");
    ModelSpec m;
    m.num_sites = j.value("num_sites", m.num_sites);
    m.num_particles = j.value("num_particles", m.num_particles);
    if (j.contains("u_over_j")) {
        if (j["u_over_j"].is_string() && j["u_over_j"] == "inf")
            m.u_over_j = std::numeric_limits<double>::infinity();
        else
            m.u_over_j = j["u_over_j"].get<double>();
    }
    m.rescale_span = j.value("rescale_span", m.rescale_span);
    m.rescale = j.value("rescale", m.rescale);
    if (j.contains("boundary"))
        m.boundary = j["boundary"] == "periodic" ? Boundary::Periodic : Boundary::Open;
    if (j.contains("measurement_kind"))
        m.measurement_kind = measurement_kind_from_string(j["measurement_kind"]);
    if (j.contains("probed_sublattice"))
        m.probed_sublattice = j["probed_sublattice"] == "odd" ? Sublattice::Odd : Sublattice::Even;
    if (j.contains("measurement_matrix")) {
        const auto rows = j["measurement_matrix"].get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd mat(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows.size())
                throw std::invalid_argument("model: measurement_matrix must be square");
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                mat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        m.measurement_matrix = mat;
    }
    m.validate();
    return m;
}

inline nlohmann::json trajectory_config_to_json(const TrajectoryConfig& c) {
    return {{"dt", c.dt},
            {"total_time", c.total_time},
            {"scheme", to_string(c.scheme)},
            {"log_stride", c.log_stride},
            {"convergence_check", c.convergence_check}};
}

inline TrajectoryConfig trajectory_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"dt", "total_time", "scheme", "log_stride", "convergence_check"},
                        "trajectory");
    TrajectoryConfig c;
    c.dt = j.value("dt", c.dt);
    c.total_time = j.value("total_time", c.total_time);
    if (j.contains("scheme")) c.scheme = scheme_from_string(j["scheme"]);
    c.log_stride = j.value("log_stride", c.log_stride);
    c.convergence_check = j.value("convergence_check", c.convergence_check);
    return c;
}

inline nlohmann::json SweepPlan::to_json() const {
    nlohmann::json kinds_json = nlohmann::json::array();
    for (MeasurementKind k : kinds) kinds_json.push_back(to_string(k));
    return {{"model", model_spec_to_json(model)},
            {"u_over_j_grid", u_over_j_grid},
            {"gamma_grid", gamma_grid},
            {"kinds", kinds_json},
            {"seeds_per_point", seeds_per_point},
            {"base_seed", base_seed},
            {"trajectory", trajectory_config_to_json(trajectory)},
            {"remove_mean", remove_mean},
            {"omega_cap", omega_cap},
            {"discard_fraction", discard_fraction},
            {"write_cell_records", write_cell_records}};
}

inline SweepPlan SweepPlan::from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"model", "u_over_j_grid", "gamma_grid", "kinds", "seeds_per_point",
                         "base_seed", "trajectory", "remove_mean", "omega_cap",
                         "discard_fraction", "write_cell_records", "output_dir", "workers"},
                        "plan");
    SweepPlan p;
    if (j.contains("model")) p.model = model_spec_from_json(j["model"]);
    if (j.contains("u_over_j_grid")) p.u_over_j_grid = j["u_over_j_grid"].get<std::vector<double>>();
    if (j.contains("gamma_grid")) p.gamma_grid = j["gamma_grid"].get<std::vector<double>>();
    if (j.contains("kinds")) {
        p.kinds.clear();
        for (const auto& k : j["kinds"]) p.kinds.push_back(measurement_kind_from_string(k));
    }
    p.seeds_per_point = j.value("seeds_per_point", p.seeds_per_point);
    p.base_seed = j.value("base_seed", p.base_seed);
    if (j.contains("trajectory")) p.trajectory = trajectory_config_from_json(j["trajectory"]);
    p.remove_mean = j.value("remove_mean", p.remove_mean);
    p.omega_cap = j.value("omega_cap", p.omega_cap);
    p.discard_fraction = j.value("discard_fraction", p.discard_fraction);
    p.output_dir = j.value("output_dir", p.output_dir);
    p.write_cell_records = j.value("write_cell_records", p.write_cell_records);
    p.workers = j.value("workers", p.workers);
    p.validate();
    return p;
}

inline nlohmann::json cell_to_json(const CellResult& c) {
    return {{"iu", c.iu},
            {"ig", c.ig},
            {"ikind", c.ikind},
            {"seed_index", c.seed_index},
            {"u_over_j", c.u_over_j},
            {"gamma", c.gamma},
            {"kind", to_string(c.kind)},
            {"seed", c.seed},
            {"overlap", c.overlap},
            {"gamma_max", c.gamma_max},
            {"boundary_flag", c.boundary_flag},
            {"coh_before", c.coh_before},
            {"coh_after", c.coh_after},
            {"residence", c.residence},
            {"mean_record", c.mean_record},
            {"failed", c.failed},
            {"error", c.error}};
}

inline CellResult cell_from_json(const nlohmann::json& j) {
    CellResult c;
    c.iu = j.at("iu").get<std::size_t>();
    c.ig = j.at("ig").get<std::size_t>();
    c.ikind = j.at("ikind").get<std::size_t>();
    c.seed_index = j.at("seed_index").get<int>();
    c.u_over_j = j.at("u_over_j").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.kind = measurement_kind_from_string(j.at("kind").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.overlap = j.at("overlap").get<double>();
    c.gamma_max = j.at("gamma_max").get<double>();
    c.boundary_flag = j.at("boundary_flag").get<bool>();
    c.coh_before = j.at("coh_before").get<double>();
    c.coh_after = j.at("coh_after").get<double>();
    c.residence = j.at("residence").get<double>();
    c.mean_record = j.at("mean_record").get<double>();
    c.failed = j.at("failed").get<bool>();
    c.error = j.at("error").get<std::string>();
    return c;
}

// ------------------------------ execution ------------------------------------

namespace detail {

// Read-only per-(u, kind) bundle shared by all gamma cells.
struct CellEngine {
    Propagator propagator;
    Eigen::VectorXcd ground;
    double coh_before = 0.0;
    std::uint64_t model_hash = 0;
};

inline std::string cell_file_name(std::uint64_t plan_hash, std::size_t ikind, std::size_t iu,
                                  std::size_t ig) {
    return "cell_" + hex64(plan_hash) + "_" + std::to_string(ikind) + "_" +
           std::to_string(iu) + "_" + std::to_string(ig) + ".json";
}

inline void write_record_csv(const std::filesystem::path& path, const MeasurementRecord& rec) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    nlohmann::json header{{"gamma", rec.gamma},        {"dt", rec.dt},
                          {"total_time", rec.total_time}, {"seed", rec.seed},
                          {"scheme", to_string(rec.scheme)}, {"operator", rec.operator_tag},
                          {"model_hash", hex64(rec.model_hash)}, {"version", kVersion}};
    out << "# " << header.dump() << "\n";
    out << "increment\n";
    for (double v : rec.increments) out << format_double(v) << "\n";
}

} // namespace detail

// Runs every (kind, U/J, gamma) cell of the plan: ground state, seeded
// trajectories, periodogram, Lorentzian fit, auxiliary time averages. Cell
// failures are recorded and skipped; completed cells found in the output
// directory are loaded instead of recomputed.
inline PhaseDiagram run_sweep(const SweepPlan& plan) {
    plan.validate();
    PhaseDiagram diagram;
    diagram.plan = plan;
    diagram.plan_hash = plan.hash();

    const std::optional<std::filesystem::path> out_dir =
        plan.output_dir.empty() ? std::nullopt
                                : std::optional<std::filesystem::path>(plan.output_dir);
    if (out_dir) std::filesystem::create_directories(*out_dir / "cells");

    const FockBasis basis =
        FockBasis::build(plan.model.num_sites, plan.model.num_particles, plan.model.dim_cap);

    // Coherence operator logged in every cell (phase-coherence reporting).
    ModelSpec coh_spec = plan.model;
    coh_spec.measurement_kind = MeasurementKind::Coherence;
    coh_spec.measurement_matrix.reset();
    const Measurement m_coh = build_measurement(coh_spec, basis);

    // Shared engines per (u, kind).
    std::vector<std::vector<std::unique_ptr<detail::CellEngine>>> engines(
        plan.u_over_j_grid.size());
    for (std::size_t iu = 0; iu < plan.u_over_j_grid.size(); ++iu) {
        ModelSpec spec = plan.model;
        spec.u_over_j = plan.u_over_j_grid[iu];
        const Hamiltonian h = build_hamiltonian(spec, basis);
        const SpectralData spectral = diagonalize(h.op, h.rescale_factor);
        const Eigen::VectorXcd gs = ground_state(spectral);
        engines[iu].resize(plan.kinds.size());
        for (std::size_t ik = 0; ik < plan.kinds.size(); ++ik) {
            ModelSpec mspec = spec;
            mspec.measurement_kind = plan.kinds[ik];
            const Measurement m = build_measurement(mspec, basis);
            ObservableSet obs;
            obs.operators.emplace_back("m_coh", m_coh.op);
            obs.projections.emplace_back("gs_overlap", gs);
            auto engine = std::make_unique<detail::CellEngine>(detail::CellEngine{
                Propagator(h.op, m.op, std::move(obs)), gs, expectation(m_coh.op, gs),
                mspec.hash()});
            engine->propagator.set_record_metadata(to_string(plan.kinds[ik]), mspec.hash());
            engines[iu][ik] = std::move(engine);
        }
    }

    struct CellJob {
        std::size_t iu, ig, ik;
    };
    std::vector<CellJob> jobs;
    for (std::size_t ik = 0; ik < plan.kinds.size(); ++ik)
        for (std::size_t iu = 0; iu < plan.u_over_j_grid.size(); ++iu)
            for (std::size_t ig = 0; ig < plan.gamma_grid.size(); ++ig)
                jobs.push_back({iu, ig, ik});

    std::vector<std::vector<CellResult>> cell_results(jobs.size());
    const unsigned workers = plan.workers ? plan.workers : default_worker_count();
    parallel_for(jobs.size(), workers, [&](std::size_t job_index) {
        const CellJob job = jobs[job_index];
        const double u = plan.u_over_j_grid[job.iu];
        const double gamma = plan.gamma_grid[job.ig];
        const MeasurementKind kind = plan.kinds[job.ik];

        if (out_dir) {
            const auto path =
                *out_dir / "cells" /
                detail::cell_file_name(diagram.plan_hash, job.ik, job.iu, job.ig);
            if (std::filesystem::exists(path)) {
                std::ifstream in(path);
                nlohmann::json j;
                in >> j;
                std::vector<CellResult> loaded;
                for (const auto& cj : j.at("seeds")) loaded.push_back(cell_from_json(cj));
                cell_results[job_index] = std::move(loaded);
                return;
            }
        }

        std::vector<CellResult> results;
        try {
            const detail::CellEngine& engine = *engines[job.iu][job.ik];
            std::vector<std::uint64_t> seeds;
            for (int k = 0; k < plan.seeds_per_point; ++k)
                seeds.push_back(plan.derived_seed(job.iu, job.ig, job.ik,
                                                  static_cast<std::size_t>(k)));
            TrajectoryConfig config = plan.trajectory;
            config.gamma = gamma;
            auto runs = engine.propagator.run_batch(engine.ground, config, seeds);
            for (std::size_t k = 0; k < runs.size(); ++k) {
                CellResult cell;
                cell.iu = job.iu;
                cell.ig = job.ig;
                cell.ikind = job.ik;
                cell.seed_index = static_cast<int>(k);
                cell.u_over_j = u;
                cell.gamma = gamma;
                cell.kind = kind;
                cell.seed = seeds[k];
                const Spectrum spec =
                    periodogram(runs[k].record, plan.remove_mean, plan.omega_cap);
                const LorentzFit fit = maximize_overlap(spec);
                cell.overlap = fit.overlap;
                cell.gamma_max = fit.gamma_max;
                cell.boundary_flag = fit.boundary_flag;
                cell.coh_before = engine.coh_before;
                cell.coh_after =
                    time_average_expectation(runs[k].log, "m_coh", plan.discard_fraction);
                cell.residence = ground_state_residence(runs[k].log, plan.discard_fraction);
                double sum = 0.0;
                for (double v : runs[k].record.increments) sum += v;
                cell.mean_record = sum / (config.dt * static_cast<double>(
                                                         runs[k].record.increments.size()));
                results.push_back(std::move(cell));
                if (out_dir && plan.write_cell_records)
                    detail::write_record_csv(
                        *out_dir / ("record_" + std::to_string(job.ik) + "_" +
                                    std::to_string(job.iu) + "_" + std::to_string(job.ig) +
                                    "_s" + std::to_string(k) + ".csv"),
                        runs[k].record);
            }
        } catch (const std::exception& e) {
            results.clear();
            for (int k = 0; k < plan.seeds_per_point; ++k) {
                CellResult cell;
                cell.iu = job.iu;
                cell.ig = job.ig;
                cell.ikind = job.ik;
                cell.seed_index = k;
                cell.u_over_j = u;
                cell.gamma = gamma;
                cell.kind = kind;
                cell.seed = plan.derived_seed(job.iu, job.ig, job.ik, static_cast<std::size_t>(k));
                cell.failed = true;
                cell.error = e.what();
                results.push_back(std::move(cell));
            }
        }

        if (out_dir) {
            nlohmann::json j;
            j["plan_hash"] = hex64(diagram.plan_hash);
            j["seeds"] = nlohmann::json::array();
            for (const auto& c : results) j["seeds"].push_back(cell_to_json(c));
            const auto path =
                *out_dir / "cells" /
                detail::cell_file_name(diagram.plan_hash, job.ik, job.iu, job.ig);
            std::ofstream out(path);
            out << j.dump(2) << "\n";
        }
        cell_results[job_index] = std::move(results);
    });

    for (auto& group : cell_results)
        for (auto& cell : group) {
            if (cell.failed) ++diagram.failed_cells;
            diagram.cells.push_back(std::move(cell));
        }
    std::sort(diagram.cells.begin(), diagram.cells.end(), [](const CellResult& a,
                                                             const CellResult& b) {
        return std::tie(a.ikind, a.iu, a.ig, a.seed_index) <
               std::tie(b.ikind, b.iu, b.ig, b.seed_index);
    });
    return diagram;
}

// ------------------------------- reports -------------------------------------

struct TransitionReport {
    MeasurementKind kind = MeasurementKind::Population;
    double gamma = 0.0;
    std::vector<double> u_values;
    std::vector<double> mean_overlap;
    std::vector<double> std_overlap;
    int jump_index = -1; // jump between u_values[i] and u_values[i+1]
    double jump_size = 0.0;
    double pooled_sigma = 0.0;
    double significance = 0.0; // jump in units of pooled within-phase sigma
    bool significant = false;  // significance >= 5
    double boundary_u = 0.0;   // geometric mean of the bracketing pair
};

// Locates the largest consecutive overlap jump along U/J in a fixed-gamma
// slice and scores it against the standard deviation pooled across seeds and
// same-side cells. Requires at least 4 grid points on each side.
inline TransitionReport transition_report(const PhaseDiagram& diagram, MeasurementKind kind,
                                          double gamma, int min_side_points = 4) {
    std::map<std::size_t, std::vector<double>> by_u;
    std::map<std::size_t, double> u_of;
    for (const auto& c : diagram.cells) {
        if (c.kind != kind || c.failed) continue;
        if (std::abs(c.gamma - gamma) > 1e-12 * std::max(1.0, std::abs(gamma))) continue;
        by_u[c.iu].push_back(c.overlap);
        u_of[c.iu] = c.u_over_j;
    }
    const int n = static_cast<int>(by_u.size());
    if (n < 2 * min_side_points)
        throw std::invalid_argument("transition_report: insufficient points in slice");

    TransitionReport rep;
    rep.kind = kind;
    rep.gamma = gamma;
    std::vector<std::vector<double>> samples;
    for (const auto& [iu, values] : by_u) {
        rep.u_values.push_back(u_of[iu]);
        rep.mean_overlap.push_back(mean(values));
        rep.std_overlap.push_back(values.size() > 1 ? std::sqrt(sample_variance(values)) : 0.0);
        samples.push_back(values);
    }
    int best = -1;
    double best_jump = -1.0;
    for (int i = min_side_points - 1; i + min_side_points < n; ++i) {
        const double jump = std::abs(rep.mean_overlap[static_cast<std::size_t>(i + 1)] -
                                     rep.mean_overlap[static_cast<std::size_t>(i)]);
        if (jump > best_jump) {
            best_jump = jump;
            best = i;
        }
    }
    rep.jump_index = best;
    rep.jump_size = best_jump;
    const auto side_stats = [&](int lo, int hi) { // [lo, hi)
        std::vector<double> pool;
        for (int i = lo; i < hi; ++i)
            for (double v : samples[static_cast<std::size_t>(i)]) pool.push_back(v);
        const double m = mean(pool);
        double ss = 0.0;
        for (double v : pool) ss += (v - m) * (v - m);
        return std::pair<double, int>(ss, static_cast<int>(pool.size()));
    };
    const auto [ss_left, n_left] = side_stats(0, best + 1);
    const auto [ss_right, n_right] = side_stats(best + 1, n);
    if (n_left + n_right > 2)
        rep.pooled_sigma = std::sqrt((ss_left + ss_right) / (n_left + n_right - 2));
    rep.significance = rep.jump_size == 0.0
                           ? 0.0
                           : (rep.pooled_sigma > 0.0
                                  ? rep.jump_size / rep.pooled_sigma
                                  : std::numeric_limits<double>::infinity());
    rep.significant = rep.significance >= 5.0;
    rep.boundary_u = std::sqrt(rep.u_values[static_cast<std::size_t>(best)] *
                               rep.u_values[static_cast<std::size_t>(best + 1)]);
    return rep;
}

struct CoherenceRow {
    double u_over_j = 0.0;
    double before = 0.0; // ground-state coherence / superfluid reference
    double after = 0.0;  // post-measurement time average / same reference
};

// Ground-state <M_coh> in the U/J -> 0 limit; the normalization reference for
// phase-coherence tables.
inline double superfluid_coherence_reference(const ModelSpec& base) {
    ModelSpec spec = base;
    spec.u_over_j = 0.0;
    spec.measurement_kind = MeasurementKind::Coherence;
    spec.measurement_matrix.reset();
    const FockBasis basis = FockBasis::build(spec.num_sites, spec.num_particles, spec.dim_cap);
    const Hamiltonian h = build_hamiltonian(spec, basis);
    const Measurement m = build_measurement(spec, basis);
    return expectation(m.op, ground_state(diagonalize(h.op, h.rescale_factor)));
}

// Phase coherence before/after measurement of the coherence operator at one
// gamma, normalized to the superfluid-limit ground state value.
inline std::vector<CoherenceRow> coherence_report(const PhaseDiagram& diagram, double gamma,
                                                  double reference) {
    if (reference == 0.0)
        throw std::invalid_argument("coherence_report: zero normalization reference");
    std::map<std::size_t, CoherenceRow> rows;
    std::map<std::size_t, std::vector<double>> after;
    for (const auto& c : diagram.cells) {
        if (c.kind != MeasurementKind::Coherence || c.failed) continue;
        if (std::abs(c.gamma - gamma) > 1e-12 * std::max(1.0, std::abs(gamma))) continue;
        rows[c.iu] = CoherenceRow{c.u_over_j, c.coh_before / reference, 0.0};
        after[c.iu].push_back(c.coh_after / reference);
    }
    if (rows.empty())
        throw std::invalid_argument("coherence_report: no coherence cells at this gamma");
    std::vector<CoherenceRow> out;
    for (auto& [iu, row] : rows) {
        row.after = mean(after[iu]);
        out.push_back(row);
    }
    return out;
}

// ------------------------------ persistence ----------------------------------

inline void write_diagram_csv(const std::filesystem::path& path, const PhaseDiagram& diagram) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    nlohmann::json header{{"version", diagram.version},
                          {"plan_hash", hex64(diagram.plan_hash)},
                          {"plan", diagram.plan.to_json()}};
    out << "# " << header.dump() << "\n";
    out << "u_over_j,gamma,kind,seed_index,seed,overlap,gamma_max,boundary_flag,"
           "coh_before,coh_after,residence,mean_record,failed\n";
    for (const auto& c : diagram.cells) {
        out << format_double(c.u_over_j) << ',' << format_double(c.gamma) << ','
            << to_string(c.kind) << ',' << c.seed_index << ',' << c.seed << ','
            << format_double(c.overlap) << ',' << format_double(c.gamma_max) << ','
            << (c.boundary_flag ? 1 : 0) << ',' << format_double(c.coh_before) << ','
            << format_double(c.coh_after) << ',' << format_double(c.residence) << ','
            << format_double(c.mean_record) << ',' << (c.failed ? 1 : 0) << "\n";
    }
}

inline void write_diagram_json(const std::filesystem::path& path, const PhaseDiagram& diagram) {
    nlohmann::json j{{"version", diagram.version},
                     {"plan_hash", hex64(diagram.plan_hash)},
                     {"plan", diagram.plan.to_json()},
                     {"failed_cells", diagram.failed_cells}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline std::string render_report_markdown(const PhaseDiagram& diagram,
                                          const std::vector<TransitionReport>& transitions,
                                          const std::vector<CoherenceRow>& coherence,
                                          double coherence_gamma) {
    std::ostringstream md;
    md << "# Sweep report\n\n";
    md << "- version: " << diagram.version << "\n";
    md << "- plan hash: " << hex64(diagram.plan_hash) << "\n";
    md << "- cells: " << diagram.cells.size() << " (" << diagram.failed_cells
       << " failed)\n\n";
    for (const auto& t : transitions) {
        md << "## Transition scan: " << to_string(t.kind) << ", gamma = "
           << format_double(t.gamma) << "\n\n";
        md << "| U/J | mean overlap | std |\n|---|---|---|\n";
        for (std::size_t i = 0; i < t.u_values.size(); ++i)
            md << "| " << format_double(t.u_values[i]) << " | "
               << format_double(t.mean_overlap[i]) << " | " << format_double(t.std_overlap[i])
               << " |\n";
        md << "\nLargest jump " << format_double(t.jump_size) << " between U/J = "
           << format_double(t.u_values[static_cast<std::size_t>(t.jump_index)]) << " and "
           << format_double(t.u_values[static_cast<std::size_t>(t.jump_index + 1)])
           << "; pooled within-phase sigma (seeds and same-side cells) = "
           << format_double(t.pooled_sigma) << "; significance = "
           << format_double(t.significance) << " sigma ("
           << (t.significant ? "significant" : "not significant")
           << " at the 5-sigma threshold); boundary estimate U/J ~ "
           << format_double(t.boundary_u) << ".\n\n";
    }
    if (!coherence.empty()) {
        md << "## Phase coherence before/after measurement (gamma = "
           << format_double(coherence_gamma) << ", superfluid-normalized)\n\n";
        md << "| U/J | before | after |\n|---|---|---|\n";
        for (const auto& row : coherence)
            md << "| " << format_double(row.u_over_j) << " | " << format_double(row.before)
               << " | " << format_double(row.after) << " |\n";
        md << "\n";
    }
    return md.str();
}

} // namespace phasescope
