#pragma once

// Experiment orchestration: JSON configuration, deterministic parallel
// N-sweeps coupling exact and mean-field runs, alpha/norm time series,
// rate fitting, baseline comparators, persistence and SVG plots.

#include <chrono>
#include <filesystem>
#include <future>
#include <iomanip>

#include "mflab/diagnostics.hpp"

namespace mflab {

struct WeightSpec {
    enum class Kind { n, m };
    Kind kind = Kind::n;
    double gamma = 0.5;

    WeightFunction build(int particles) const {
        return kind == Kind::n ? weight_n(particles) : weight_m(particles, gamma);
    }
};

struct InitialSpec {
    enum class Type { ground, packets, perturbed };
    Type type = Type::ground;
    double epsilon = 0.1;  // perturbed
    int slot = 0;
    std::vector<double> centers, momenta;  // packets
    double width = 1.0;
};

/// Either a fixed M or the matched-size rule M = M_per_N * N; the box is
/// given by length or by spacing (L = spacing * M).
struct GridRule {
    int M = 0;
    int M_per_N = 0;
    double length = 0.0;
    double spacing = 0.0;
    Boundary boundary = Boundary::periodic;

    Grid build(int n) const {
        const int m = M_per_N > 0 ? M_per_N * n : M;
        if (m < 2) throw InvalidArgument("grid: need M or M_per_N giving M >= 2");
        const double l = spacing > 0.0 ? spacing * m : length;
        if (!(l > 0.0)) throw InvalidArgument("grid: need length or spacing");
        return make_grid(m, l, boundary);
    }
};

struct ExperimentConfig {
    GridRule grid;
    std::vector<int> particles;
    RegimePreset::Name regime_name = RegimePreset::Name::unscaled;
    double dilute_beta = 2.0 / 3.0;
    InteractionSpec interaction;
    std::vector<double> external_field;  // resolved table; empty = none
    double harmonic_k = 0.0;             // if > 0, w(x) = k (x - L/2)^2
    InitialSpec initial;
    double horizon = 1.0;
    std::vector<double> sample_times;  // resolved, ascending, within [0, horizon]
    ExactPropagatorConfig exact;
    MeanFieldConfig mf;
    std::vector<WeightSpec> weights;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::uint64_t basis_cap = 200000;
    double kinetic_bound_A = 0.0;  // 0 disables the flag
    double lt_exponent = 3.0;
    double omega_radius = 1.0;
    double gamma_check = 0.5;
    nlohmann::json echo;

    std::vector<double> field_for(const Grid& g) const {
        if (!external_field.empty()) {
            if (int(external_field.size()) != g.points)
                throw InvalidArgument("external_field table does not match grid size");
            return external_field;
        }
        if (harmonic_k > 0.0) {
            std::vector<double> w(g.points);
            for (int i = 0; i < g.points; ++i) {
                const double x = g.coord(i) - g.length / 2.0;
                w[i] = harmonic_k * x * x;
            }
            return w;
        }
        return {};
    }
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw InvalidArgument("config: unknown key '" + it.key() + "' in " + where);
    }
}

inline InteractionSpec parse_interaction(const nlohmann::json& j, const std::string& cfg_dir) {
    require_keys(j, "interaction",
                 {"kind", "s", "sign", "delta", "cutoff_height", "a", "strength", "sigma",
                  "table_csv", "beta"});
    InteractionSpec s;
    const std::string kind = j.value("kind", "gaussian");
    using K = InteractionSpec::Kind;
    if (kind == "power_law") s.kind = K::power_law;
    else if (kind == "cutoff_power_law") s.kind = K::cutoff_power_law;
    else if (kind == "soft_coulomb") s.kind = K::soft_coulomb;
    else if (kind == "gaussian") s.kind = K::gaussian;
    else if (kind == "tabulated") s.kind = K::tabulated;
    else if (kind == "zero") s.kind = K::zero;
    else throw InvalidArgument("config: unknown interaction kind '" + kind + "'");
    s.s = j.value("s", 1.0);
    s.sign = j.value("sign", 1);
    s.delta = j.value("delta", 0.0);
    s.cutoff_height = j.value("cutoff_height", 1.0);
    s.a = j.value("a", 1.0);
    s.strength = j.value("strength", 1.0);
    s.sigma = j.value("sigma", 1.0);
    s.beta = j.value("beta", 0.0);
    if (j.contains("table_csv"))
        s.table = load_table_csv(cfg_dir + "/" + j["table_csv"].get<std::string>());
    if (s.kind == K::power_law || s.kind == K::cutoff_power_law) {
        if (!(s.s > 0.0) || !(s.s < 2.0))
            throw InvalidArgument("config: power-law exponent s must be in (0,2)");
        if (s.sign != 1 && s.sign != -1) throw InvalidArgument("config: sign must be +-1");
    }
    return s;
}

}  // namespace detail

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("load_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("load_config: parse error: ") + e.what());
    }
    const std::string cfg_dir = std::filesystem::path(path).parent_path().string().empty()
                                    ? "."
                                    : std::filesystem::path(path).parent_path().string();
    detail::require_keys(j, "top level",
                         {"grid", "particles", "regime", "interaction", "external_field",
                          "initial", "horizon", "sample_times", "exact", "mf", "weights", "seed",
                          "out_dir", "basis_cap", "kinetic_bound_A", "lt_exponent",
                          "omega_radius", "gamma"});
    ExperimentConfig c;
    c.echo = j;

    if (!j.contains("grid")) throw InvalidArgument("config: missing 'grid'");
    const auto& gj = j["grid"];
    detail::require_keys(gj, "grid", {"M", "M_per_N", "L", "spacing", "boundary"});
    c.grid.M = gj.value("M", 0);
    c.grid.M_per_N = gj.value("M_per_N", 0);
    c.grid.length = gj.value("L", 0.0);
    c.grid.spacing = gj.value("spacing", 0.0);
    const std::string b = gj.value("boundary", "periodic");
    if (b == "periodic") c.grid.boundary = Boundary::periodic;
    else if (b == "dirichlet") c.grid.boundary = Boundary::dirichlet;
    else throw InvalidArgument("config: unknown boundary '" + b + "'");

    if (!j.contains("particles")) throw InvalidArgument("config: missing 'particles'");
    c.particles = j["particles"].get<std::vector<int>>();
    if (c.particles.empty()) throw InvalidArgument("config: 'particles' is empty");

    if (j.contains("regime")) {
        const auto& rj = j["regime"];
        detail::require_keys(rj, "regime", {"name", "beta"});
        const std::string name = rj.value("name", "unscaled");
        if (name == "dilute") c.regime_name = RegimePreset::Name::dilute;
        else if (name == "semiclassical") c.regime_name = RegimePreset::Name::semiclassical;
        else if (name == "unscaled") c.regime_name = RegimePreset::Name::unscaled;
        else throw InvalidArgument("config: unknown regime '" + name + "'");
        c.dilute_beta = rj.value("beta", 2.0 / 3.0);
    }

    if (!j.contains("interaction")) throw InvalidArgument("config: missing 'interaction'");
    c.interaction = detail::parse_interaction(j["interaction"], cfg_dir);

    if (j.contains("external_field") && !j["external_field"].is_null()) {
        const auto& fj = j["external_field"];
        detail::require_keys(fj, "external_field", {"csv", "harmonic"});
        if (fj.contains("csv"))
            c.external_field = load_table_csv(cfg_dir + "/" + fj["csv"].get<std::string>());
        c.harmonic_k = fj.value("harmonic", 0.0);
    }

    if (j.contains("initial")) {
        const auto& ij = j["initial"];
        detail::require_keys(ij, "initial",
                             {"type", "epsilon", "slot", "centers", "momenta", "width"});
        const std::string t = ij.value("type", "ground");
        if (t == "ground") c.initial.type = InitialSpec::Type::ground;
        else if (t == "packets") c.initial.type = InitialSpec::Type::packets;
        else if (t == "perturbed") c.initial.type = InitialSpec::Type::perturbed;
        else throw InvalidArgument("config: unknown initial type '" + t + "'");
        c.initial.epsilon = ij.value("epsilon", 0.1);
        c.initial.slot = ij.value("slot", 0);
        if (ij.contains("centers")) c.initial.centers = ij["centers"].get<std::vector<double>>();
        if (ij.contains("momenta")) c.initial.momenta = ij["momenta"].get<std::vector<double>>();
        c.initial.width = ij.value("width", 1.0);
    }

    c.horizon = j.value("horizon", 1.0);
    if (!(c.horizon >= 0.0)) throw InvalidArgument("config: horizon must be >= 0");
    if (j.contains("sample_times")) {
        const auto& sj = j["sample_times"];
        if (sj.is_array()) {
            c.sample_times = sj.get<std::vector<double>>();
        } else {
            detail::require_keys(sj, "sample_times", {"count"});
            const int count = sj.value("count", 5);
            if (count < 1) throw InvalidArgument("config: sample count must be >= 1");
            for (int i = 0; i < count; ++i)
                c.sample_times.push_back(c.horizon * double(i) / std::max(count - 1, 1));
        }
    } else {
        c.sample_times = {0.0, c.horizon};
    }
    double prev = -1.0;
    for (double t : c.sample_times) {
        if (t < 0.0 || t > c.horizon + 1e-12)
            throw InvalidArgument("config: sample_times must lie in [0, horizon]");
        if (t < prev) throw InvalidArgument("config: sample_times must ascend");
        prev = t;
    }

    if (j.contains("exact")) {
        const auto& ej = j["exact"];
        detail::require_keys(ej, "exact", {"dt", "krylov_dim", "tol", "max_substeps"});
        c.exact.dt = ej.value("dt", c.exact.dt);
        c.exact.krylov_dim = ej.value("krylov_dim", c.exact.krylov_dim);
        c.exact.tol = ej.value("tol", c.exact.tol);
        c.exact.max_substeps = ej.value("max_substeps", c.exact.max_substeps);
    }
    if (j.contains("mf")) {
        const auto& mj = j["mf"];
        detail::require_keys(mj, "mf", {"dt", "scheme", "exchange", "gram_tol"});
        c.mf.dt = mj.value("dt", c.mf.dt);
        const std::string s = mj.value("scheme", "rk4");
        if (s == "rk4") c.mf.scheme = MeanFieldConfig::Scheme::rk4;
        else if (s == "strang") c.mf.scheme = MeanFieldConfig::Scheme::strang_split;
        else throw InvalidArgument("config: unknown mf scheme '" + s + "'");
        c.mf.exchange = mj.value("exchange", false);
        c.mf.gram_tol = mj.value("gram_tol", c.mf.gram_tol);
    }
    if (j.contains("weights")) {
        for (const auto& wj : j["weights"]) {
            detail::require_keys(wj, "weights[]", {"kind", "gamma"});
            WeightSpec w;
            const std::string k = wj.value("kind", "n");
            if (k == "n") w.kind = WeightSpec::Kind::n;
            else if (k == "m") w.kind = WeightSpec::Kind::m;
            else throw InvalidArgument("config: unknown weight kind '" + k + "'");
            w.gamma = wj.value("gamma", 0.5);
            c.weights.push_back(w);
        }
    }
    if (c.weights.empty())
        c.weights = {{WeightSpec::Kind::n, 1.0}, {WeightSpec::Kind::m, 0.5}};
    c.seed = j.value("seed", std::uint64_t(1));
    c.out_dir = j.value("out_dir", std::string("out"));
    c.basis_cap = j.value("basis_cap", std::uint64_t(200000));
    c.kinetic_bound_A = j.value("kinetic_bound_A", 0.0);
    c.lt_exponent = j.value("lt_exponent", 3.0);
    c.omega_radius = j.value("omega_radius", 1.0);
    c.gamma_check = j.value("gamma", 0.5);

    // every sweep point must fit the basis cap
    for (int n : c.particles) {
        const Grid g = c.grid.build(n);
        const std::uint64_t dim = binomial(g.points, n);
        if (dim > c.basis_cap)
            throw InvalidArgument("config: N=" + std::to_string(n) + " needs basis " +
                                  std::to_string(dim) + " > cap " +
                                  std::to_string(c.basis_cap));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Single runs

struct SampleRow {
    double t = 0.0;
    double alpha_n = 0.0;
    double alpha_m = 0.0;
    double tr_norm = 0.0;
    double hs_norm = 0.0;
    double op_norm = 0.0;
    double energy_exact = 0.0;
    double energy_mf = 0.0;
    double kinetic_sum = 0.0;
};

struct RunResult {
    int N = 0;
    std::vector<SampleRow> rows;
    std::vector<CheckReport> reports;
    bool kinetic_flagged = false;  // sum ||grad phi||^2 / N exceeded configured A
    double wall_seconds = 0.0;
};

namespace detail {

struct PreparedRun {
    Grid grid;
    std::vector<double> w;
    RegimePreset regime;
    OrbitalSet orbitals;
    FockVector psi0;
    HamiltonianSpec hamiltonian;
    MeanFieldSystem system;
};

inline PreparedRun prepare_run(const ExperimentConfig& cfg, int n) {
    PreparedRun p;
    p.grid = cfg.grid.build(n);
    p.w = cfg.field_for(p.grid);
    p.regime = make_regime(cfg.regime_name, n, cfg.dilute_beta);
    auto basis = build_basis(p.grid.points, n, cfg.basis_cap);
    switch (cfg.initial.type) {
        case InitialSpec::Type::ground:
            p.orbitals = ground_orbitals(p.grid, p.w, n);
            p.psi0 = slater(p.orbitals, basis);
            break;
        case InitialSpec::Type::packets:
            p.orbitals = packet_orbitals(p.grid, cfg.initial.centers, cfg.initial.width,
                                         cfg.initial.momenta, n);
            p.psi0 = slater(p.orbitals, basis);
            break;
        case InitialSpec::Type::perturbed: {
            OrbitalSet wide = ground_orbitals(p.grid, p.w, n + 1);
            p.orbitals = OrbitalSet{wide.vectors.leftCols(n)};
            p.psi0 = mix_excitation(p.orbitals, wide.vectors.col(n), cfg.initial.slot,
                                    cfg.initial.epsilon, basis);
            break;
        }
    }
    p.hamiltonian = build_hamiltonian(p.grid, p.w, cfg.interaction, p.regime, n);
    p.system = make_mf_system(p.grid, p.w, cfg.interaction, p.regime, n);
    return p;
}

inline WeightSpec first_m_weight(const ExperimentConfig& cfg) {
    for (const auto& w : cfg.weights)
        if (w.kind == WeightSpec::Kind::m) return w;
    return {WeightSpec::Kind::m, 1.0};  // degenerate: m^(1) = n
}

}  // namespace detail

/// Co-evolves exact and mean-field dynamics and samples the closeness
/// functionals, density-matrix distances, energies and diagnostics.
inline RunResult run_single(const ExperimentConfig& cfg, int n) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::PreparedRun p = detail::prepare_run(cfg, n);
    const WeightFunction fn = weight_n(n);
    const WeightFunction fm = detail::first_m_weight(cfg).build(n);

    std::vector<MfState> mf_traj = mf_evolve(p.orbitals, p.system, cfg.sample_times, cfg.mf);
    RunResult r;
    r.N = n;
    FockVector psi = p.psi0;
    double t = 0.0;
    for (size_t i = 0; i < cfg.sample_times.size(); ++i) {
        const double target = cfg.sample_times[i];
        if (target > t) {
            psi = exact_evolve(p.hamiltonian, psi, target - t, cfg.exact);
            t = target;
        }
        FockVector norm_psi = psi;
        norm_psi.coeffs /= norm_psi.coeffs.norm();
        const OrbitalSet& orbs = mf_traj[i].orbitals;
        SampleRow row;
        row.t = target;
        const Mat gpsi = rdm1(norm_psi);
        row.alpha_n = alpha_f(norm_psi, orbs, fn);
        row.alpha_m = alpha_f(norm_psi, orbs, fm);
        const MatrixNorms d = matrix_norms(orbs.projector() / double(n) - gpsi);
        row.tr_norm = d.trace_norm;
        row.hs_norm = d.hs_norm;
        row.op_norm = d.op_norm;
        row.energy_exact = energy_many(p.hamiltonian, norm_psi);
        const MfEnergy e = energy_mf(orbs, p.system, p.grid, cfg.mf.exchange);
        row.energy_mf = e.total;
        row.kinetic_sum = e.kinetic_sum;
        if (cfg.kinetic_bound_A > 0.0 && e.kinetic_sum / n > cfg.kinetic_bound_A)
            r.kinetic_flagged = true;
        r.rows.push_back(row);

        if (i == 0 || i + 1 == cfg.sample_times.size()) {
            const Density rho = density_from(orbs, p.grid);
            InteractionSpec scaled = cfg.interaction;
            scaled.beta = p.regime.beta;
            scaled.particle_count = n;
            r.reports.push_back(density_lemma_check(norm_psi, orbs));
            r.reports.push_back(alpha_m_vs_n_check(norm_psi, orbs, cfg.gamma_check));
            r.reports.push_back(qrootf_check(norm_psi, orbs, cfg.gamma_check));
            r.reports.push_back(meanfield_sup_check(scaled, rho, p.grid));
            r.reports.push_back(
                assumption_check(scaled, rho, p.grid, cfg.omega_radius, cfg.gamma_check));
            r.reports.push_back(lt_ratio(orbs, p.grid, cfg.lt_exponent));
            if (p.grid.boundary == Boundary::periodic)
                r.reports.push_back(sc_condition_check(orbs, p.grid));
        }
    }
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// Baseline comparators: measure the SAME exact state against freely
// evolved or frozen orbitals, next to the Hartree measurement.

enum class Baseline { free_orbitals, static_orbitals };

struct BaselineResult {
    std::vector<double> times;
    std::vector<double> hartree_alpha, baseline_alpha;
    std::vector<double> hartree_tr, baseline_tr;
    double final_gap = 0.0;  // hartree closeness minus baseline closeness
};

inline BaselineResult compare_baseline(const ExperimentConfig& cfg, int n, Baseline kind) {
    detail::PreparedRun p = detail::prepare_run(cfg, n);
    const WeightFunction fn = weight_n(n);
    std::vector<MfState> hartree = mf_evolve(p.orbitals, p.system, cfg.sample_times, cfg.mf);
    std::vector<MfState> base;
    if (kind == Baseline::free_orbitals) {
        MeanFieldSystem free_sys = p.system;
        std::fill(free_sys.vtab.begin(), free_sys.vtab.end(), 0.0);
        base = mf_evolve(p.orbitals, free_sys, cfg.sample_times, cfg.mf);
    }
    BaselineResult r;
    FockVector psi = p.psi0;
    double t = 0.0;
    for (size_t i = 0; i < cfg.sample_times.size(); ++i) {
        const double target = cfg.sample_times[i];
        if (target > t) {
            psi = exact_evolve(p.hamiltonian, psi, target - t, cfg.exact);
            t = target;
        }
        FockVector norm_psi = psi;
        norm_psi.coeffs /= norm_psi.coeffs.norm();
        const OrbitalSet& horbs = hartree[i].orbitals;
        const OrbitalSet& borbs = (kind == Baseline::free_orbitals) ? base[i].orbitals
                                                                    : p.orbitals;
        const Mat gpsi = rdm1(norm_psi);
        r.times.push_back(target);
        r.hartree_alpha.push_back(alpha_f(norm_psi, horbs, fn));
        r.baseline_alpha.push_back(alpha_f(norm_psi, borbs, fn));
        r.hartree_tr.push_back(
            matrix_norms(horbs.projector() / double(n) - gpsi).trace_norm);
        r.baseline_tr.push_back(
            matrix_norms(borbs.projector() / double(n) - gpsi).trace_norm);
    }
    r.final_gap = r.hartree_tr.back() - r.baseline_tr.back();
    return r;
}

// ---------------------------------------------------------------------------
// Rate fitting

struct RateFit {
    double exponent = 0.0;   // delta in alpha ~ N^{-delta}
    double intercept = 0.0;  // log prefactor
    double residual = 0.0;   // rms of log residuals
    int points_used = 0;
    bool valid = false;
    std::string note;
};

inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
    RateFit f;
    if (points.size() < 3) {
        f.note = "need at least 3 points";
        return f;
    }
    for (const auto& [n, a] : points)
        if (!(a > 0.0)) {
            f.note = "no signal: nonpositive alpha";
            return f;
        }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [n, a] : points) {
        const double x = std::log(n), y = std::log(a);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = double(points.size());
    const double denom = m * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) {
        f.note = "degenerate abscissae";
        return f;
    }
    const double slope = (m * sxy - sx * sy) / denom;
    f.exponent = -slope;
    f.intercept = (sy - slope * sx) / m;
    double ss = 0.0;
    for (const auto& [n, a] : points) {
        const double res = std::log(a) - (f.intercept + slope * std::log(n));
        ss += res * res;
    }
    f.residual = std::sqrt(ss / m);
    f.points_used = int(points.size());
    f.valid = true;
    return f;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepResult {
    std::vector<RunResult> runs;  // merged in N order
    RateFit fit_n, fit_m;
    std::vector<CheckReport> trend_reports;
};

namespace detail {

/// Cross-N stability window on an informational quantity: max/min <= factor.
inline CheckReport window_report(const std::string& id, const std::vector<double>& values,
                                 double factor) {
    CheckReport r;
    r.check_id = id;
    InputDigest d;
    d.feed(values);
    r.digest = d.hex();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        r.quantities["v" + std::to_string(i)] = values[i];
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    r.quantities["ratio"] = (lo > 0.0) ? hi / lo : 0.0;
    r.slack = (lo > 0.0) ? factor - hi / lo : factor;
    r.verdict = r.slack >= 0.0 ? Verdict::pass : Verdict::fail;
    return r;
}

inline double report_quantity(const RunResult& run, const std::string& id,
                              const std::string& key, bool last) {
    const CheckReport* found = nullptr;
    for (const auto& rep : run.reports)
        if (rep.check_id == id) {
            found = &rep;
            if (!last) break;
        }
    if (!found) throw InternalConsistency("missing report " + id);
    return found->quantities.at(key);
}

}  // namespace detail

inline SweepResult run_sweep(const ExperimentConfig& cfg, int workers = 1) {
    SweepResult s;
    s.runs.resize(cfg.particles.size());
    if (workers <= 1) {
        for (size_t i = 0; i < cfg.particles.size(); ++i)
            s.runs[i] = run_single(cfg, cfg.particles[i]);
    } else {
        std::vector<std::future<RunResult>> futs(cfg.particles.size());
        size_t next = 0;
        while (next < futs.size()) {
            const size_t batch = std::min<size_t>(workers, futs.size() - next);
            for (size_t i = 0; i < batch; ++i) {
                const int n = cfg.particles[next + i];
                futs[next + i] =
                    std::async(std::launch::async, [&cfg, n] { return run_single(cfg, n); });
            }
            for (size_t i = 0; i < batch; ++i) s.runs[next + i] = futs[next + i].get();
            next += batch;
        }
    }
    // results arrive indexed by the config's particle order; sort by N
    std::sort(s.runs.begin(), s.runs.end(),
              [](const RunResult& a, const RunResult& b) { return a.N < b.N; });

    std::vector<std::pair<double, double>> pts_n, pts_m;
    std::vector<double> sups, exp_ratios, grad_ratios;
    std::vector<double> finals;
    for (const auto& run : s.runs) {
        const SampleRow& last = run.rows.back();
        pts_n.push_back({double(run.N), last.alpha_n});
        pts_m.push_back({double(run.N), last.alpha_m});
        finals.push_back(last.alpha_n);
        sups.push_back(detail::report_quantity(run, "meanfield_sup", "sup", true));
        if (cfg.regime_name == RegimePreset::Name::semiclassical) {
            for (const auto& rep : run.reports)
                if (rep.check_id == "sc_condition") {
                    exp_ratios.push_back(rep.quantities.at("comm_exp_sup") /
                                         std::pow(double(run.N), 2.0 / 3.0));
                    grad_ratios.push_back(rep.quantities.at("comm_grad") / double(run.N));
                    break;
                }
        }
    }
    s.fit_n = fit_rate(pts_n);
    s.fit_m = fit_rate(pts_m);

    {
        CheckReport r;
        r.check_id = "trend_alpha_decreasing";
        InputDigest d;
        d.feed(finals);
        r.digest = d.hex();
        double worst = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < finals.size(); ++i) {
            r.quantities["alpha_N" + std::to_string(s.runs[i].N)] = finals[i];
            if (i > 0) worst = std::min(worst, finals[i - 1] - finals[i]);
        }
        const bool signal = *std::max_element(finals.begin(), finals.end()) > 1e-8;
        if (!signal) {
            r.verdict = Verdict::informational;  // no correlations generated
            r.quantities["no_signal"] = 1.0;
        } else if (finals.size() < 2) {
            r.verdict = Verdict::informational;  // a single N carries no trend
            r.quantities["single_point"] = 1.0;
        } else {
            r.slack = worst;
            r.verdict = r.slack > 0.0 ? Verdict::pass : Verdict::fail;
        }
        s.trend_reports.push_back(r);
    }
    s.trend_reports.push_back(detail::window_report("trend_meanfield_sup_window", sups, 2.0));
    if (!exp_ratios.empty()) {
        s.trend_reports.push_back(
            detail::window_report("trend_sc_exp_window", exp_ratios, 2.0));
        s.trend_reports.push_back(
            detail::window_report("trend_sc_grad_window", grad_ratios, 2.0));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

inline const std::string kCsvHeader =
    "N,t,alpha_n,alpha_m,tr_norm,hs_norm,op_norm,energy_exact,energy_mf,kinetic_sum";

inline std::string results_csv(const std::vector<RunResult>& runs) {
    std::string out = kCsvHeader + "\n";
    for (const auto& run : runs)
        for (const auto& row : run.rows) {
            out += std::to_string(run.N);
            for (double x : {row.t, row.alpha_n, row.alpha_m, row.tr_norm, row.hs_norm,
                             row.op_norm, row.energy_exact, row.energy_mf, row.kinetic_sum})
                out += "," + detail::fmt_double(x);
            out += "\n";
        }
    return out;
}

struct CsvRow {
    int N;
    SampleRow row;
};

inline std::vector<CsvRow> parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw InvalidArgument("parse_results_csv: bad header");
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 10) throw InvalidArgument("parse_results_csv: bad row");
        CsvRow r;
        r.N = std::stoi(cells[0]);
        double* fields[] = {&r.row.t,       &r.row.alpha_n,      &r.row.alpha_m,
                            &r.row.tr_norm, &r.row.hs_norm,      &r.row.op_norm,
                            &r.row.energy_exact, &r.row.energy_mf, &r.row.kinetic_sum};
        for (int i = 0; i < 9; ++i) *fields[i] = std::stod(cells[i + 1]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// SVG plots (self-contained, no plotting dependency)

namespace detail {

struct SvgPlot {
    double xmin, xmax, ymin, ymax;
    static constexpr int w = 640, h = 420, pad = 50;
    std::string body;

    double px(double x) const { return pad + (x - xmin) / (xmax - xmin + 1e-300) * (w - 2 * pad); }
    double py(double y) const {
        return h - pad - (y - ymin) / (ymax - ymin + 1e-300) * (h - 2 * pad);
    }
    void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color) {
        body += "<polyline fill=\"none\" stroke=\"" + color + "\" points=\"";
        for (size_t i = 0; i < xs.size(); ++i)
            body += fmt_double(px(xs[i])) + "," + fmt_double(py(ys[i])) + " ";
        body += "\"/>\n";
    }
    void label(const std::string& text) {
        body += "<text x=\"" + std::to_string(pad) + "\" y=\"20\" font-size=\"14\">" + text +
                "</text>\n";
    }
    std::string render() const {
        return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
               "\" height=\"" + std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" "
               "fill=\"white\"/>\n" +
               body + "</svg>\n";
    }
};

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b"};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace detail

inline void emit_plots(const std::vector<CsvRow>& rows, const RateFit& fit,
                       const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::map<int, std::vector<std::pair<double, double>>> by_n;
    for (const auto& r : rows) by_n[r.N].push_back({r.row.t, r.row.alpha_n});
    if (by_n.empty()) return;
    detail::SvgPlot p1{0, 0, 0, 0};
    p1.xmin = 1e300;
    p1.xmax = -1e300;
    p1.ymin = 0.0;
    p1.ymax = 1e-300;
    for (const auto& [n, pts] : by_n)
        for (const auto& [t, a] : pts) {
            p1.xmin = std::min(p1.xmin, t);
            p1.xmax = std::max(p1.xmax, t);
            p1.ymax = std::max(p1.ymax, a);
        }
    int ci = 0;
    for (const auto& [n, pts] : by_n) {
        std::vector<double> xs, ys;
        for (const auto& [t, a] : pts) {
            xs.push_back(t);
            ys.push_back(a);
        }
        p1.polyline(xs, ys, detail::kPalette[ci++ % 6]);
    }
    p1.label("alpha_n vs t (one curve per N)");
    detail::write_file(dir + "/alpha_vs_t.svg", p1.render());

    // log alpha(T) vs log N with the fitted line
    std::vector<double> lx, ly;
    for (const auto& [n, pts] : by_n) {
        const double a = pts.back().second;
        if (a > 0.0) {
            lx.push_back(std::log(double(n)));
            ly.push_back(std::log(a));
        }
    }
    if (lx.size() >= 2) {
        detail::SvgPlot p2{*std::min_element(lx.begin(), lx.end()),
                           *std::max_element(lx.begin(), lx.end()),
                           *std::min_element(ly.begin(), ly.end()),
                           *std::max_element(ly.begin(), ly.end())};
        p2.polyline(lx, ly, detail::kPalette[0]);
        if (fit.valid) {
            std::vector<double> fx = {p2.xmin, p2.xmax};
            std::vector<double> fy = {fit.intercept - fit.exponent * p2.xmin,
                                      fit.intercept - fit.exponent * p2.xmax};
            p2.polyline(fx, fy, detail::kPalette[1]);
        }
        p2.label("log alpha_n(T) vs log N with fit");
        detail::write_file(dir + "/rate_fit.svg", p2.render());
    }
}

/// Writes results.csv, manifest.json, reports.jsonl and plots/*.svg.
/// Everything is buffered before the first write.
inline void emit_outputs(const ExperimentConfig& cfg, const SweepResult& sweep,
                         const std::string& dir) {
    const std::string csv = results_csv(sweep.runs);
    nlohmann::json manifest;
    manifest["config"] = cfg.echo;
    manifest["format_version"] = 1;
    {
        InputDigest d;
        d.feed(csv);
        manifest["results_digest"] = d.hex();
    }
    auto fit_json = [](const RateFit& f) {
        nlohmann::json j;
        j["exponent"] = f.exponent;
        j["intercept"] = f.intercept;
        j["residual"] = f.residual;
        j["points_used"] = f.points_used;
        j["valid"] = f.valid;
        j["note"] = f.note;
        return j;
    };
    manifest["fit_alpha_n"] = fit_json(sweep.fit_n);
    manifest["fit_alpha_m"] = fit_json(sweep.fit_m);
    manifest["trend_verdicts"] = nlohmann::json::object();
    for (const auto& r : sweep.trend_reports)
        manifest["trend_verdicts"][r.check_id] =
            r.verdict == Verdict::pass ? "pass"
            : r.verdict == Verdict::fail ? "fail"
                                         : "informational";
    nlohmann::json walls = nlohmann::json::object();
    for (const auto& run : sweep.runs) {
        walls["N" + std::to_string(run.N)] = run.wall_seconds;
        if (run.kinetic_flagged) manifest["kinetic_bound_flagged"] = true;
    }
    manifest["wall_seconds"] = walls;
    manifest["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();

    std::vector<CheckReport> all_reports;
    for (const auto& run : sweep.runs)
        for (const auto& rep : run.reports) all_reports.push_back(rep);
    for (const auto& rep : sweep.trend_reports) all_reports.push_back(rep);

    std::filesystem::create_directories(dir);
    detail::write_file(dir + "/results.csv", csv);
    detail::write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    write_jsonl(all_reports, dir + "/reports.jsonl");
    emit_plots(parse_results_csv(csv), sweep.fit_n, dir + "/plots");
}

// ---------------------------------------------------------------------------
// Seeded check suites backing the `check` CLI subcommand

inline std::vector<CheckReport> run_check_suite(const std::string& suite, std::uint64_t seed) {
    const bool all = suite == "all";
    if (!all && suite != "algebra" && suite != "lemmas" && suite != "dynamics")
        throw InvalidArgument("run_check_suite: unknown suite '" + suite + "'");
    std::vector<CheckReport> out;
    std::mt19937_64 rng(seed);
    const Grid grid = make_grid(10, 10.0, Boundary::periodic);
    auto basis = build_basis(10, 3);
    const OrbitalSet orbs = ground_orbitals(grid, {}, 3);

    if (all || suite == "algebra") {
        for (int rep = 0; rep < 20; ++rep) {
            FockVector psi = random_state(basis, rng);
            const ProjectedDistribution dist = pnk_distribution(psi, orbs);
            double sum = 0.0;
            for (double p : dist.probs) sum += p;
            CheckReport r;
            r.check_id = "pnk_resolution";
            r.digest = detail::digest_state(psi, orbs);
            r.quantities = {{"sum", sum}};
            r.slack = 1e-10 - std::abs(sum - 1.0);
            r.verdict = r.slack >= 0.0 ? Verdict::pass : Verdict::fail;
            out.push_back(r);
            out.push_back(density_lemma_check(psi, orbs));
        }
    }
    if (all || suite == "lemmas") {
        InteractionSpec gspec;
        gspec.kind = InteractionSpec::Kind::gaussian;
        gspec.sigma = 1.0;
        const std::vector<double> vtab = kernel_table(gspec, grid);
        for (int rep = 0; rep < 10; ++rep) {
            FockVector psi = random_state(basis, rng);
            for (double g : {0.3, 0.5, 1.0}) {
                out.push_back(alpha_m_vs_n_check(psi, orbs, g));
                out.push_back(qrootf_check(psi, orbs, g));
            }
            out.push_back(sandwich_bound_check(psi, orbs, vtab));
            std::uniform_int_distribution<int> site(0, grid.points - 1);
            out.push_back(variance_check(vtab, orbs, site(rng)));
        }
    }
    if (all || suite == "dynamics") {
        DerivativeScenario sc;
        sc.grid = make_grid(12, 12.0, Boundary::periodic);
        sc.interaction.kind = InteractionSpec::Kind::gaussian;
        sc.interaction.sigma = 1.5;
        sc.interaction.strength = 0.5;
        sc.regime = make_regime(RegimePreset::Name::unscaled, 2);
        sc.orbitals = ground_orbitals(sc.grid, {}, 2);
        auto b2 = build_basis(12, 2);
        std::mt19937_64 rng2(seed + 17);
        FockVector noise = random_state(b2, rng2);
        sc.psi = slater(sc.orbitals, b2);
        sc.psi.coeffs = 0.9 * sc.psi.coeffs + 0.45 * noise.coeffs;
        sc.psi.coeffs /= sc.psi.coeffs.norm();
        sc.f = weight_n(2);
        out.push_back(derivative_identity_check(sc));
        sc.f = weight_m(2, 0.5);
        out.push_back(derivative_identity_check(sc));
    }
    return out;
}

}  // namespace mflab
