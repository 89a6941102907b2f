#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace mflab;
using Catch::Approx;

namespace {

HamiltonianSpec sample_hamiltonian(const Grid& g, double strength = 0.6, double hbar = 1.0) {
    InteractionSpec spec;
    spec.kind = InteractionSpec::Kind::gaussian;
    spec.sigma = 1.0;
    spec.strength = strength;
    HamiltonianSpec h;
    h.one_body = laplacian(g);
    h.pair = kernel_table(spec, g);
    h.hbar_eff = hbar;
    return h;
}

// exp(-i H t / hbar) by dense diagonalization, for tiny bases
Vec expm_oracle(const HamiltonianSpec& h, const FockVector& psi, double t) {
    Mat hm = oracle::dense_of(psi.basis,
                              [&](const FockVector& u) { return apply_hamiltonian(h, u); });
    Eigen::SelfAdjointEigenSolver<Mat> es(hm);
    Vec modes = es.eigenvectors().adjoint() * psi.coeffs;
    for (int j = 0; j < modes.size(); ++j) {
        const double th = -t / h.hbar_eff * es.eigenvalues()[j];
        modes[j] *= Complex(std::cos(th), std::sin(th));
    }
    return es.eigenvectors() * modes;
}

}  // namespace

TEST_CASE("exact_evolve basics") {
    std::mt19937_64 rng(3);
    Grid g = make_grid(7, 7.0, Boundary::periodic);
    HamiltonianSpec h = sample_hamiltonian(g);
    auto basis = build_basis(7, 2);
    FockVector psi = random_state(basis, rng);
    SECTION("t = 0 is the identity") {
        FockVector out = exact_evolve(h, psi, 0.0);
        CHECK((out.coeffs - psi.coeffs).norm() == 0.0);
    }
    SECTION("matches the dense exponential oracle") {
        for (double t : {0.3, 1.7, -0.9}) {
            FockVector out = exact_evolve(h, psi, t);
            CHECK((out.coeffs - expm_oracle(h, psi, t)).norm() < 1e-9);
        }
    }
    SECTION("effective hbar rescales time") {
        HamiltonianSpec h2 = h;
        h2.hbar_eff = 0.5;
        FockVector a = exact_evolve(h2, psi, 0.4);
        FockVector b = exact_evolve(h, psi, 0.8);
        CHECK((a.coeffs - b.coeffs).norm() < 1e-9);
    }
    SECTION("time reversal returns the initial state") {
        FockVector fwd = exact_evolve(h, psi, 1.3);
        FockVector back = exact_evolve(h, fwd, -1.3);
        CHECK((back.coeffs - psi.coeffs).norm() < 1e-9);
    }
    SECTION("bad config is rejected") {
        ExactPropagatorConfig cfg;
        cfg.dt = -1.0;
        CHECK_THROWS_AS(exact_evolve(h, psi, 1.0, cfg), InvalidArgument);
        cfg = {};
        cfg.max_substeps = 2;
        cfg.dt = 1e-3;
        CHECK_THROWS_AS(exact_evolve(h, psi, 1.0, cfg), PropagationFailure);
    }
}

TEST_CASE("diagonal Hamiltonian gets exact per-state phases") {
    auto basis = build_basis(6, 3);
    std::vector<double> w = {0.1, -0.4, 0.7, 0.2, -0.3, 0.5};
    std::vector<double> vtab = {0.0, 0.8, 0.3, 0.1, 0.3, 0.8};
    HamiltonianSpec h;
    h.one_body.matrix = Mat::Zero(6, 6);
    for (int i = 0; i < 6; ++i) h.one_body.matrix(i, i) = w[i];
    h.one_body.hermitian = true;
    h.pair = vtab;
    std::mt19937_64 rng(9);
    FockVector psi = random_state(basis, rng);
    const double t = 2.1;
    FockVector out = exact_evolve(h, psi, t);
    for (int b = 0; b < basis->dim(); ++b) {
        const std::uint32_t mask = basis->states[b];
        double e = 0.0;
        for (int x = 0; x < 6; ++x)
            if (mask & (1u << x)) {
                e += w[x];
                for (int y = x + 1; y < 6; ++y)
                    if (mask & (1u << y)) e += vtab[y - x];
            }
        const Complex phase(std::cos(-e * t), std::sin(-e * t));
        CHECK(std::abs(out.coeffs[b] - phase * psi.coeffs[b]) < 1e-10);
    }
}

TEST_CASE("norm and energy are conserved over many steps") {
    std::mt19937_64 rng(15);
    Grid g = make_grid(8, 8.0, Boundary::periodic);
    HamiltonianSpec h = sample_hamiltonian(g);
    auto basis = build_basis(8, 2);
    FockVector psi = random_state(basis, rng);
    const double e0 = energy_many(h, psi);
    ExactPropagatorConfig cfg;
    cfg.dt = 0.01;
    FockVector cur = psi;
    for (int step = 0; step < 200; ++step) cur = exact_evolve(h, cur, 0.01, cfg);
    CHECK(std::abs(cur.norm() - 1.0) < 1e-10);
    CHECK(std::abs(energy_many(h, cur) - e0) < 1e-8);
}

TEST_CASE("free evolution keeps determinants determinantal") {
    Grid g = make_grid(8, 8.0, Boundary::periodic);
    HamiltonianSpec h = sample_hamiltonian(g, 0.0);
    auto basis = build_basis(8, 2);
    OrbitalSet init = packet_orbitals(g, {2.0, 6.0}, 0.9, {0.5, -0.5}, 2);
    FockVector psi = slater(init, basis);
    MeanFieldSystem sys{h.pair, h.one_body.matrix, 1.0};
    MeanFieldConfig cfg;
    cfg.dt = 2e-4;
    auto states = mf_evolve(init, sys, {1.0}, cfg);
    FockVector mf = slater(states.back().orbitals, basis);
    FockVector exact = exact_evolve(h, psi, 1.0);
    const double fidelity = std::abs(inner(mf, exact));
    CHECK(fidelity >= 1.0 - 1e-8);
}

TEST_CASE("orbital right-hand sides") {
    std::mt19937_64 rng(21);
    Grid g = make_grid(8, 8.0, Boundary::dirichlet);
    HamiltonianSpec h = sample_hamiltonian(g);
    OrbitalSet orbs = ground_orbitals(g, {}, 2);
    SECTION("matches the one-body mean-field operator, direct and exchange") {
        for (bool exchange : {false, true}) {
            Mat rhs = exchange ? hf_rhs(orbs.vectors, h.pair, h.one_body.matrix, 1.0)
                               : hartree_rhs(orbs.vectors, h.pair, h.one_body.matrix, 1.0);
            Mat v = mean_field_onebody(orbs, h.pair, exchange);
            Mat ref = Complex(0.0, -1.0) * ((h.one_body.matrix + v) * orbs.vectors);
            CHECK((rhs - ref).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SECTION("single particle: exchange cancels the direct term exactly") {
        OrbitalSet one = ground_orbitals(g, {}, 1);
        Mat rhs = hf_rhs(one.vectors, h.pair, h.one_body.matrix, 1.0);
        Mat free = Complex(0.0, -1.0) * (h.one_body.matrix * one.vectors);
        CHECK((rhs - free).cwiseAbs().maxCoeff() < 1e-13);
    }
    SECTION("zero interaction: direct and exchange coincide") {
        std::vector<double> zero(8, 0.0);
        Mat a = hartree_rhs(orbs.vectors, zero, h.one_body.matrix, 1.0);
        Mat b = hf_rhs(orbs.vectors, zero, h.one_body.matrix, 1.0);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
    }
    SECTION("hbar scales the right-hand side") {
        Mat a = hartree_rhs(orbs.vectors, h.pair, h.one_body.matrix, 2.0);
        Mat b = hartree_rhs(orbs.vectors, h.pair, h.one_body.matrix, 1.0);
        CHECK((2.0 * a - b).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("integrator accuracy") {
    Grid g = make_grid(10, 10.0, Boundary::periodic);
    InteractionSpec spec;
    spec.kind = InteractionSpec::Kind::gaussian;
    spec.sigma = 1.0;
    spec.strength = 1.0;
    MeanFieldSystem sys = make_mf_system(g, {}, spec, {}, 2);
    OrbitalSet init = packet_orbitals(g, {3.0, 7.0}, 1.0, {0.4, -0.4}, 2);
    const double horizon = 0.5;
    auto final_orbs = [&](MeanFieldConfig cfg) {
        return mf_evolve(init, sys, {horizon}, cfg).back().orbitals.vectors;
    };
    SECTION("rk4 is fourth order in dt") {
        MeanFieldConfig fine;
        fine.dt = 1e-4;
        Mat ref = final_orbs(fine);
        MeanFieldConfig c1;
        c1.dt = 0.02;
        MeanFieldConfig c2;
        c2.dt = 0.01;
        const double e1 = (final_orbs(c1) - ref).norm();
        const double e2 = (final_orbs(c2) - ref).norm();
        const double ratio = e1 / e2;
        CHECK(ratio > 10.0);
        CHECK(ratio < 24.0);
    }
    SECTION("strang splitting agrees and preserves the Gram matrix exactly") {
        MeanFieldConfig fine;
        fine.dt = 1e-4;
        Mat ref = final_orbs(fine);
        MeanFieldConfig strang;
        strang.scheme = MeanFieldConfig::Scheme::strang_split;
        strang.dt = 1e-3;
        auto states = mf_evolve(init, sys, {horizon}, strang);
        CHECK((states.back().orbitals.vectors - ref).norm() < 1e-4);
        CHECK(states.back().gram_deviation < 1e-12);
    }
    SECTION("strang refuses exchange") {
        MeanFieldConfig cfg;
        cfg.scheme = MeanFieldConfig::Scheme::strang_split;
        cfg.exchange = true;
        CHECK_THROWS_AS(mf_evolve(init, sys, {0.1}, cfg), InvalidArgument);
    }
    SECTION("Gram drift beyond tolerance aborts rather than re-orthonormalizing") {
        MeanFieldConfig coarse;
        coarse.dt = 0.25;
        coarse.gram_tol = 1e-14;
        CHECK_THROWS_AS(mf_evolve(init, sys, {horizon}, coarse), IntegratorAccuracy);
    }
    SECTION("sample times must ascend") {
        MeanFieldConfig cfg;
        CHECK_THROWS_AS(mf_evolve(init, sys, {0.2, 0.1}, cfg), InvalidArgument);
    }
}

TEST_CASE("regime presets") {
    SECTION("semiclassical scalings at N = 8") {
        RegimePreset r = make_regime(RegimePreset::Name::semiclassical, 8);
        CHECK(r.beta == 1.0);
        CHECK(r.hbar_eff == Approx(0.5));
        CHECK(r.kinetic_prefactor == Approx(0.25));
    }
    SECTION("dilute keeps hbar and kinetic term unscaled") {
        RegimePreset r = make_regime(RegimePreset::Name::dilute, 8, 0.4);
        CHECK(r.beta == 0.4);
        CHECK(r.hbar_eff == 1.0);
        CHECK(r.kinetic_prefactor == 1.0);
    }
    SECTION("build_hamiltonian applies field, kinetic prefactor and coupling scale") {
        Grid g = make_grid(6, 6.0, Boundary::periodic);
        std::vector<double> w = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
        InteractionSpec spec;
        spec.kind = InteractionSpec::Kind::gaussian;
        spec.sigma = 1.0;
        RegimePreset r = make_regime(RegimePreset::Name::semiclassical, 8);
        HamiltonianSpec h = build_hamiltonian(g, w, spec, r, 8);
        Mat expect = 0.25 * laplacian(g).matrix;
        for (int i = 0; i < 6; ++i) expect(i, i) += w[i];
        CHECK((h.one_body.matrix - expect).cwiseAbs().maxCoeff() < 1e-14);
        std::vector<double> bare = kernel_table(spec, g);
        for (int d = 0; d < 6; ++d) CHECK(h.pair[d] == Approx(bare[d] / 8.0));
        CHECK(h.hbar_eff == Approx(0.5));
    }
}

TEST_CASE("mean-field energy accounting") {
    Grid g = make_grid(8, 8.0, Boundary::dirichlet);
    OrbitalSet orbs = ground_orbitals(g, {}, 3);
    SECTION("constant interaction bookkeeping") {
        const double c = 0.7;
        MeanFieldSystem sys{std::vector<double>(8, c), Mat::Zero(8, 8), 1.0};
        MfEnergy hartree = energy_mf(orbs, sys, g, false);
        MfEnergy hf = energy_mf(orbs, sys, g, true);
        CHECK(hartree.total == Approx(0.5 * c * 9.0).margin(1e-10));       // N^2 / 2
        CHECK(hf.total == Approx(0.5 * c * 3.0 * 2.0).margin(1e-10));      // N(N-1)/2
    }
    SECTION("kinetic sum uses the bare stencil") {
        MeanFieldSystem sys{std::vector<double>(8, 0.0), 0.25 * laplacian(g).matrix, 1.0};
        MfEnergy e = energy_mf(orbs, sys, g, false);
        double kin = 0.0;
        OneBodyOperator neglap = laplacian(g);
        for (int j = 0; j < 3; ++j) kin += kinetic_norm_sq(neglap, orbs.orbital(j));
        CHECK(e.kinetic_sum == Approx(kin).margin(1e-10));
        CHECK(e.total == Approx(0.25 * kin).margin(1e-10));
    }
    SECTION("Hartree energy is conserved along the flow") {
        Grid gp = make_grid(10, 10.0, Boundary::periodic);
        InteractionSpec spec;
        spec.kind = InteractionSpec::Kind::gaussian;
        spec.sigma = 1.0;
        spec.strength = 0.8;
        MeanFieldSystem sys = make_mf_system(gp, {}, spec, {}, 2);
        OrbitalSet init = packet_orbitals(gp, {3.0, 7.0}, 1.0, {0.4, -0.4}, 2);
        const double e0 = energy_mf(init, sys, gp, false).total;
        MeanFieldConfig cfg;
        cfg.dt = 5e-4;
        auto states = mf_evolve(init, sys, {0.25, 0.5, 1.0}, cfg);
        for (const auto& s : states)
            CHECK(std::abs(energy_mf(s.orbitals, sys, gp, false).total - e0) < 1e-6);
    }
}

TEST_CASE("single particle: exact and Hartree-Fock flows coincide") {
    Grid g = make_grid(8, 8.0, Boundary::periodic);
    HamiltonianSpec h = sample_hamiltonian(g, 0.9);
    OrbitalSet init = packet_orbitals(g, {4.0}, 1.0, {0.6}, 1);
    auto basis = build_basis(8, 1);
    FockVector exact = exact_evolve(h, slater(init, basis), 0.8);
    MeanFieldSystem sys{h.pair, h.one_body.matrix, 1.0};
    MeanFieldConfig cfg;
    cfg.dt = 2e-4;
    cfg.exchange = true;  // for N = 1 the self-interaction cancels exactly
    auto states = mf_evolve(init, sys, {0.8}, cfg);
    FockVector mf = slater(states.back().orbitals, basis);
    CHECK(std::abs(inner(mf, exact)) >= 1.0 - 1e-8);
}
