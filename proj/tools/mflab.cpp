// Command-line front end: simulate / sweep / check / orbitals / plot.
// Exit codes: 0 success, 1 check failure, 2 config error, 3 runtime failure.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "mflab/harness.hpp"

namespace {

std::string resolve_out_dir(const std::string& configured) {
    if (const char* env = std::getenv("MFLAB_OUT"); env && *env) return env;
    return configured;
}

int cmd_simulate(const std::string& config_path, int only_n, int workers) {
    mflab::ExperimentConfig cfg = mflab::load_config(config_path);
    if (only_n > 0) {
        bool found = false;
        for (int n : cfg.particles) found |= (n == only_n);
        if (!found) cfg.echo["particles"] = std::vector<int>{only_n};
        cfg.particles = {only_n};
    }
    mflab::SweepResult sweep = mflab::run_sweep(cfg, workers);
    const std::string dir = resolve_out_dir(cfg.out_dir);
    mflab::emit_outputs(cfg, sweep, dir);
    std::cout << "wrote " << dir << "/results.csv (" << sweep.runs.size() << " run(s))\n";
    for (const auto& r : sweep.trend_reports)
        std::cout << r.check_id << ": "
                  << (r.verdict == mflab::Verdict::pass          ? "pass"
                      : r.verdict == mflab::Verdict::fail        ? "fail"
                                                                 : "informational")
                  << "\n";
    for (const auto& r : sweep.trend_reports)
        if (r.failed()) return 1;
    return 0;
}

int cmd_check(const std::string& suite, std::uint64_t seed) {
    std::vector<mflab::CheckReport> reports = mflab::run_check_suite(suite, seed);
    int failures = 0;
    for (const auto& r : reports) {
        const char* v = r.verdict == mflab::Verdict::pass          ? "pass"
                        : r.verdict == mflab::Verdict::fail        ? "FAIL"
                                                                   : "info";
        std::cout << v << "  " << r.check_id << "  slack=" << r.slack << "\n";
        failures += r.failed() ? 1 : 0;
    }
    if (const char* env = std::getenv("MFLAB_OUT"); env && *env) {
        std::filesystem::create_directories(env);
        mflab::write_jsonl(reports, std::string(env) + "/reports.jsonl");
    }
    std::cout << reports.size() << " checks, " << failures << " failures\n";
    return failures == 0 ? 0 : 1;
}

int cmd_orbitals(const std::string& config_path, const std::string& out_path) {
    mflab::ExperimentConfig cfg = mflab::load_config(config_path);
    const int n = cfg.particles.front();
    const mflab::Grid grid = cfg.grid.build(n);
    const std::vector<double> w = cfg.field_for(grid);
    mflab::OrbitalSet orbs;
    if (cfg.initial.type == mflab::InitialSpec::Type::packets)
        orbs = mflab::packet_orbitals(grid, cfg.initial.centers, cfg.initial.width,
                                      cfg.initial.momenta, n);
    else
        orbs = mflab::ground_orbitals(grid, w, n);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("orbitals: cannot write " + out_path);
    out << "x";
    for (int j = 0; j < n; ++j) out << ",re_" << j << ",im_" << j;
    out << "\n";
    for (int i = 0; i < grid.points; ++i) {
        out << mflab::detail::fmt_double(grid.coord(i));
        for (int j = 0; j < n; ++j)
            out << "," << mflab::detail::fmt_double(orbs.vectors(i, j).real()) << ","
                << mflab::detail::fmt_double(orbs.vectors(i, j).imag());
        out << "\n";
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_plot(const std::string& from_dir) {
    std::ifstream in(from_dir + "/results.csv");
    if (!in) throw mflab::InvalidArgument("plot: cannot open " + from_dir + "/results.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::vector<mflab::CsvRow> rows = mflab::parse_results_csv(ss.str());
    std::vector<std::pair<double, double>> pts;
    std::map<int, double> finals;
    for (const auto& r : rows) finals[r.N] = r.row.alpha_n;
    for (const auto& [n, a] : finals) pts.push_back({double(n), a});
    mflab::emit_plots(rows, mflab::fit_rate(pts), from_dir + "/plots");
    std::cout << "wrote " << from_dir << "/plots\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mflab: exact vs mean-field fermion dynamics laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_path, from_dir, suite = "all";
    int only_n = 0, workers = 1;
    std::uint64_t seed = 1;

    auto* sim = app.add_subcommand("simulate", "run one configuration");
    sim->add_option("--config", config_path)->required();
    sim->add_option("--n", only_n, "restrict to a single particle number");

    auto* swp = app.add_subcommand("sweep", "run all N in the configuration");
    swp->add_option("--config", config_path)->required();
    swp->add_option("--workers", workers, "parallel sweep workers");

    auto* chk = app.add_subcommand("check", "run the seeded property-check suites");
    chk->add_option("--suite", suite)->check(CLI::IsMember({"all", "algebra", "lemmas",
                                                            "dynamics"}));
    chk->add_option("--seed", seed);

    auto* orb = app.add_subcommand("orbitals", "write the initial orbitals as CSV");
    orb->add_option("--config", config_path)->required();
    orb->add_option("--out", out_path)->required();

    auto* plt = app.add_subcommand("plot", "regenerate plots from an output directory");
    plt->add_option("--from", from_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(config_path, only_n, 1);
        if (swp->parsed()) return cmd_simulate(config_path, 0, workers);
        if (chk->parsed()) return cmd_check(suite, seed);
        if (orb->parsed()) return cmd_orbitals(config_path, out_path);
        if (plt->parsed()) return cmd_plot(from_dir);
    } catch (const mflab::InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
