#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace mflab;
using Catch::Approx;

TEST_CASE("weight functions") {
    SECTION("relative counter n(k) = k/N") {
        WeightFunction f = weight_n(4);
        const std::vector<double> expect = {0.0, 0.25, 0.5, 0.75, 1.0};
        CHECK(f.values == expect);
        CHECK_NOTHROW(f.validate());
        CHECK(f.monotone_increasing());
        CHECK(f(-1) == 0.0);
        CHECK(f(5) == 0.0);  // zero-extended
    }
    SECTION("capped counter m(k) = min(k N^-gamma, 1)") {
        WeightFunction f = weight_m(16, 0.5);
        CHECK(f(0) == 0.0);
        CHECK(f(2) == Approx(0.5));
        CHECK(f(4) == Approx(1.0));
        CHECK(f(5) == 1.0);
        CHECK(f(16) == 1.0);
        CHECK_NOTHROW(f.validate());
    }
    SECTION("gamma = 1 reduces to n") {
        WeightFunction m = weight_m(7, 1.0), n = weight_n(7);
        for (int k = 0; k <= 7; ++k) CHECK(m(k) == Approx(n(k)).margin(1e-15));
    }
    SECTION("bad parameters") {
        CHECK_THROWS_AS(weight_n(0), InvalidArgument);
        CHECK_THROWS_AS(weight_m(4, 0.0), InvalidArgument);
        CHECK_THROWS_AS(weight_m(4, 1.5), InvalidArgument);
        WeightFunction bad{{0.0, 0.5}};
        CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    }
}

TEST_CASE("discrete derivatives and shifts") {
    SECTION("forward and backward differences of n") {
        WeightFunction f = weight_n(4);
        std::vector<double> d1 = derivative(f, 1);
        CHECK(d1[0] == 0.0);
        for (int k = 1; k <= 4; ++k) CHECK(d1[k] == Approx(0.25));
        std::vector<double> d2 = derivative(f, 2);
        CHECK(d2[0] == 0.0);
        CHECK(d2[1] == 0.0);
        for (int k = 2; k <= 4; ++k) CHECK(d2[k] == Approx(0.5));
        std::vector<double> dm1 = derivative(f, -1);
        for (int k = 0; k <= 3; ++k) CHECK(dm1[k] == Approx(0.25));
        CHECK(dm1[4] == 0.0);
    }
    SECTION("capped counter derivative vanishes past the cap") {
        std::vector<double> d = derivative(weight_m(16, 0.5), 1);
        for (int k = 1; k <= 4; ++k) CHECK(d[k] == Approx(0.25));
        for (int k = 5; k <= 16; ++k) CHECK(d[k] == 0.0);
    }
    SECTION("shift zero-extends") {
        WeightFunction f = weight_n(4);
        std::vector<double> s = shifted(f, 1);
        for (int k = 0; k <= 3; ++k) CHECK(s[k] == Approx(f(k + 1)));
        CHECK(s[4] == 0.0);
        std::vector<double> sm = shifted(f, -2);
        CHECK(sm[0] == 0.0);
        CHECK(sm[1] == 0.0);
        for (int k = 2; k <= 4; ++k) CHECK(sm[k] == Approx(f(k - 2)));
    }
    SECTION("only |d| in {1,2}") {
        CHECK_THROWS_AS(derivative(weight_n(4), 0), InvalidArgument);
        CHECK_THROWS_AS(derivative(weight_n(4), 3), InvalidArgument);
    }
}

TEST_CASE("complement projector") {
    std::mt19937_64 rng(7);
    OrbitalSet orbs = oracle::random_orbitals(6, 2, rng);
    Mat q = q_onebody(orbs).matrix;
    CHECK((q * q - q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((q - q.adjoint()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((q * orbs.vectors).cwiseAbs().maxCoeff() < 1e-12);
    OrbitalSet full = oracle::random_orbitals(4, 4, rng);
    CHECK(q_onebody(full).matrix.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projected occupation distribution") {
    std::mt19937_64 rng(13);
    Grid g = make_grid(8, 8.0, Boundary::dirichlet);
    OrbitalSet wide = ground_orbitals(g, {}, 3);
    OrbitalSet orbs{wide.vectors.leftCols(2)};
    auto basis = build_basis(8, 2);
    SECTION("determinant of the reference orbitals sits at k = 0") {
        FockVector psi = slater(orbs, basis);
        auto dist = pnk_distribution(psi, orbs);
        CHECK(dist.probs[0] == Approx(1.0).margin(1e-10));
        CHECK(std::abs(dist.probs[1]) < 1e-10);
        CHECK(std::abs(dist.probs[2]) < 1e-10);
    }
    SECTION("single full excitation sits at k = 1") {
        FockVector psi = mix_excitation(orbs, wide.vectors.col(2), 0, 1.0, basis);
        auto dist = pnk_distribution(psi, orbs);
        CHECK(std::abs(dist.probs[0]) < 1e-10);
        CHECK(dist.probs[1] == Approx(1.0).margin(1e-10));
    }
    SECTION("small admixture: probabilities (1 - eps^2, eps^2, 0)") {
        FockVector psi = mix_excitation(orbs, wide.vectors.col(2), 0, 0.1, basis);
        auto dist = pnk_distribution(psi, orbs);
        CHECK(dist.probs[0] == Approx(0.99).margin(1e-10));
        CHECK(dist.probs[1] == Approx(0.01).margin(1e-10));
        CHECK(std::abs(dist.probs[2]) < 1e-10);
    }
    SECTION("random states: nonnegative, sums to one") {
        for (int rep = 0; rep < 10; ++rep) {
            FockVector psi = random_state(basis, rng);
            auto dist = pnk_distribution(psi, orbs);
            double sum = 0.0;
            for (double p : dist.probs) {
                CHECK(p > -1e-10);
                sum += p;
            }
            CHECK(sum == Approx(1.0).margin(1e-9));
        }
    }
    SECTION("unnormalized input is rejected") {
        FockVector psi = slater(orbs, basis);
        psi.coeffs *= 1.5;
        CHECK_THROWS_AS(pnk_distribution(psi, orbs), InvalidArgument);
    }
}

TEST_CASE("alpha_f") {
    std::mt19937_64 rng(17);
    Grid g = make_grid(8, 8.0, Boundary::dirichlet);
    OrbitalSet wide = ground_orbitals(g, {}, 3);
    OrbitalSet orbs{wide.vectors.leftCols(2)};
    auto basis = build_basis(8, 2);
    SECTION("small admixture, relative counter: eps^2 / N") {
        FockVector psi = mix_excitation(orbs, wide.vectors.col(2), 0, 0.1, basis);
        CHECK(alpha_f(psi, orbs, weight_n(2)) == Approx(0.005).margin(1e-12));
    }
    SECTION("determinant scores zero, full excitation scores f(1)") {
        FockVector det = slater(orbs, basis);
        CHECK(std::abs(alpha_f(det, orbs, weight_n(2))) < 1e-12);
        FockVector exc = mix_excitation(orbs, wide.vectors.col(2), 0, 1.0, basis);
        CHECK(alpha_f(exc, orbs, weight_n(2)) == Approx(0.5).margin(1e-10));
    }
    SECTION("alpha_n via the reduced density matrix agrees") {
        for (int rep = 0; rep < 10; ++rep) {
            FockVector psi = random_state(basis, rng);
            const double slow = alpha_f(psi, orbs, weight_n(2));
            const double fast = alpha_n_fast(rdm1(psi), orbs);
            CHECK(slow == Approx(fast).margin(1e-10));
        }
    }
    SECTION("weight length must match particle number") {
        FockVector psi = slater(orbs, basis);
        CHECK_THROWS_AS(alpha_f(psi, orbs, weight_n(3)), InvalidArgument);
    }
    SECTION("capped vs relative counter ordering, all gammas") {
        auto b3 = build_basis(6, 3);
        OrbitalSet o3 = oracle::random_orbitals(6, 3, rng);
        for (double gamma : {0.3, 0.5, 1.0}) {
            for (int rep = 0; rep < 5; ++rep) {
                FockVector psi = random_state(b3, rng);
                const double an = alpha_f(psi, o3, weight_n(3));
                const double am = alpha_f(psi, o3, weight_m(3, gamma));
                CHECK(an <= am + 1e-12);
                CHECK(am <= std::pow(3.0, 1.0 - gamma) * an + 1e-12);
            }
        }
    }
}

TEST_CASE("filter application") {
    std::mt19937_64 rng(19);
    auto basis = build_basis(6, 2);
    OrbitalSet orbs = oracle::random_orbitals(6, 2, rng);
    SECTION("constant filter is the identity") {
        FockVector psi = random_state(basis, rng);
        FockVector out = fhat_apply(psi, orbs, {1.0, 1.0, 1.0});
        CHECK((out.coeffs - psi.coeffs).norm() < 1e-10);
    }
    SECTION("indicator filters decompose the state orthogonally") {
        FockVector psi = random_state(basis, rng);
        auto dist = pnk_distribution(psi, orbs);
        Vec acc = Vec::Zero(basis->dim());
        std::vector<FockVector> parts;
        for (int k = 0; k <= 2; ++k) {
            std::vector<double> g(3, 0.0);
            g[k] = 1.0;
            parts.push_back(fhat_apply(psi, orbs, g));
            acc += parts.back().coeffs;
        }
        CHECK((acc - psi.coeffs).norm() < 1e-10);
        for (int j = 0; j <= 2; ++j)
            for (int k = 0; k <= 2; ++k) {
                const Complex ov = inner(parts[j], parts[k]);
                if (j == k)
                    CHECK(std::abs(ov - Complex(dist.probs[k])) < 1e-10);
                else
                    CHECK(std::abs(ov) < 1e-10);
            }
    }
    SECTION("filter length must be N + 1") {
        FockVector psi = random_state(basis, rng);
        CHECK_THROWS_AS(fhat_apply(psi, orbs, {1.0, 1.0}), InvalidArgument);
    }
}

namespace {

using oracle::dense_of;

// P^(a) on the pair index: a = number of particles outside the reference span
mflab::Mat pair_projector(const mflab::Mat& p, const mflab::Mat& q, int a) {
    switch (a) {
        case 0: return mflab::kron(p, p);
        case 1: return mflab::kron(p, q) + mflab::kron(q, p);
        default: return mflab::kron(q, q);
    }
}

}  // namespace

TEST_CASE("filters slide through pair operators by the excitation difference") {
    std::mt19937_64 rng(29);
    auto basis = build_basis(6, 2);
    OrbitalSet orbs = oracle::random_orbitals(6, 2, rng);
    Mat p = orbs.projector();
    Mat q = q_onebody(orbs).matrix;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        Mat h = oracle::random_hermitian(36, rng);
        FockVector psi = random_state(basis, rng);
        std::vector<double> g = {unif(rng), unif(rng), unif(rng)};
        const int a = int(rng() % 3), b = int(rng() % 3);
        const Mat k = pair_projector(p, q, a) * h * pair_projector(p, q, b);
        // lift(K) fhat(g) = fhat(g shifted by b - a) lift(K)
        FockVector lhs = apply_pair_lift(k, fhat_apply(psi, orbs, g));
        std::vector<double> gs(3, 0.0);
        for (int x = 0; x <= 2; ++x) {
            const int src = x + (b - a);
            gs[x] = (src >= 0 && src <= 2) ? g[src] : 0.0;
        }
        FockVector rhs = fhat_apply(apply_pair_lift(k, psi), orbs, gs);
        CHECK((lhs.coeffs - rhs.coeffs).norm() < 1e-9);
    }
}

TEST_CASE("direct mean-field one-body operator") {
    std::mt19937_64 rng(37);
    Grid g = make_grid(8, 8.0, Boundary::dirichlet);
    OrbitalSet orbs = ground_orbitals(g, {}, 2);
    InteractionSpec spec;
    spec.kind = InteractionSpec::Kind::gaussian;
    spec.sigma = 1.2;
    std::vector<double> vtab = kernel_table(spec, g);
    SECTION("diagonal equals the grid convolution against the density") {
        Mat v = mean_field_onebody(orbs, vtab, false);
        Density rho = density_from(orbs, g);
        std::vector<double> conv = convolve(vtab, rho, g);
        for (int x = 0; x < 8; ++x) {
            CHECK(std::real(v(x, x)) == Approx(conv[x]).margin(1e-12));
            for (int y = 0; y < 8; ++y)
                if (x != y) CHECK(std::abs(v(x, y)) < 1e-15);
        }
    }
    SECTION("exchange subtracts v(x-y) P(x,y)") {
        Mat vd = mean_field_onebody(orbs, vtab, false);
        Mat vx = mean_field_onebody(orbs, vtab, true);
        Mat p = orbs.projector();
        for (int x = 0; x < 8; ++x)
            for (int y = 0; y < 8; ++y)
                CHECK(std::abs(vx(x, y) - (vd(x, y) - vtab[std::abs(x - y)] * p(x, y))) < 1e-13);
        CHECK((vx - vx.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("rank-one projector: p2 v12 p2 factorizes into (v * |phi|^2) tensor p") {
        const int m = 6;
        Grid g6 = make_grid(m, 6.0, Boundary::dirichlet);
        OrbitalSet one = ground_orbitals(g6, {}, 1);
        std::vector<double> v6 = kernel_table(spec, g6);
        Mat id = Mat::Identity(m, m);
        Mat p = one.projector();
        Mat k = sandwich_kernel(id, p, id, p, v6);
        Mat vmf = mean_field_onebody(one, v6, false);
        oracle::Tensor t{m, 2};
        Mat lifted = t.pair_sum(k);
        Mat factored = t.on_coord(vmf, 0) * t.on_coord(p, 1) +
                       t.on_coord(vmf, 1) * t.on_coord(p, 0);
        CHECK((lifted - factored).cwiseAbs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("derivative terms of the counting functional") {
    std::mt19937_64 rng(41);
    Grid g = make_grid(6, 6.0, Boundary::dirichlet);
    OrbitalSet orbs = ground_orbitals(g, {}, 2);
    InteractionSpec spec;
    spec.kind = InteractionSpec::Kind::gaussian;
    spec.sigma = 1.0;
    spec.strength = 0.7;
    std::vector<double> vtab = kernel_table(spec, g);
    auto basis = build_basis(6, 2);
    WeightFunction fn = weight_n(2);

    SECTION("zero interaction kills every term") {
        std::vector<double> zero(6, 0.0);
        FockVector psi = random_state(basis, rng);
        CHECK(std::abs(term_I(psi, orbs, zero, fn)) < 1e-13);
        CHECK(std::abs(term_II(psi, orbs, zero, fn)) < 1e-13);
        CHECK(std::abs(term_III(psi, orbs, zero, fn)) < 1e-13);
    }
    SECTION("reference determinant gives zero") {
        FockVector psi = slater(orbs, basis);
        CHECK(std::abs(term_I(psi, orbs, vtab, fn)) < 1e-12);
        CHECK(std::abs(term_II(psi, orbs, vtab, fn)) < 1e-12);
        CHECK(std::abs(term_III(psi, orbs, vtab, fn)) < 1e-12);
    }
    SECTION("terms sum to the commutator with the fluctuation generator") {
        // i <psi, [W - sum_j V_j, fhat] psi> where W is the pair interaction,
        // evaluated densely on the occupation basis
        for (bool exchange : {false, true}) {
            for (const WeightFunction& f : {weight_n(2), weight_m(2, 0.5)}) {
                for (int rep = 0; rep < 6; ++rep) {
                    FockVector psi = random_state(basis, rng);
                    double sum = term_I(psi, orbs, vtab, f, exchange) +
                                 term_II(psi, orbs, vtab, f) + term_III(psi, orbs, vtab, f);
                    Mat fm = dense_of(basis, [&](const FockVector& u) {
                        FockVector v = u;
                        v.coeffs = fhat_apply(u, orbs, f.values).coeffs;
                        return v;
                    });
                    Mat vmf = mean_field_onebody(orbs, vtab, exchange);
                    Mat wm = dense_of(basis, [&](const FockVector& u) {
                        FockVector w = apply_pair_diagonal(vtab, u);
                        w.coeffs -= apply_one_body({vmf, true}, u).coeffs;
                        return w;
                    });
                    const Complex comm =
                        psi.coeffs.dot((wm * fm - fm * wm) * psi.coeffs) * Complex(0.0, 1.0);
                    CHECK(std::abs(comm.imag()) < 1e-10);
                    CHECK(sum == Approx(comm.real()).margin(1e-9));
                }
            }
        }
    }
    SECTION("weight must be monotone") {
        WeightFunction bumpy{{0.0, 0.8, 0.5, 1.0}};
        auto b3 = build_basis(6, 3);
        FockVector psi = random_state(b3, rng);
        OrbitalSet o3 = ground_orbitals(g, {}, 3);
        CHECK_THROWS_AS(term_I(psi, o3, vtab, bumpy), InvalidArgument);
    }
    SECTION("site cap surfaces as a resource error") {
        FockVector psi = random_state(basis, rng);
        PairLiftCaps caps;
        caps.sites = 4;
        CHECK_THROWS_AS(term_II(psi, orbs, vtab, fn, caps), ResourceLimit);
    }
}

TEST_CASE("filtered half-derivative norms obey the counting bounds") {
    std::mt19937_64 rng(53);
    auto basis = build_basis(6, 3);
    OrbitalSet orbs = oracle::random_orbitals(6, 3, rng);
    OneBodyOperator q = q_onebody(orbs);
    const double n = 3.0;
    for (double gamma : {0.3, 0.5, 1.0}) {
        WeightFunction m = weight_m(3, gamma);
        for (int rep = 0; rep < 5; ++rep) {
            FockVector psi = random_state(basis, rng);
            const double am = alpha_f(psi, orbs, m);
            for (int d : {1, 2}) {
                FockVector plus = filtered_half_derivative(psi, orbs, m, d);
                FockVector minus = filtered_half_derivative(psi, orbs, m, -d);
                CHECK(plus.coeffs.squaredNorm() <= d * std::pow(n, -gamma) + 1e-12);
                CHECK(minus.coeffs.squaredNorm() <= d * std::pow(n, -gamma) + 1e-12);
                // ||q1 . ||^2 against the unnormalized filtered states
                const double qminus = std::real(inner(minus, apply_one_body(q, minus))) / n;
                const double qplus = std::real(inner(plus, apply_one_body(q, plus))) / n;
                CHECK(qminus <= d / n * am + 1e-12);
                CHECK(qplus <= (d + 1.0) / n * am + 1e-12);
            }
            FockVector one = filtered_half_derivative(psi, orbs, m, 1);
            FockVector nq = apply_one_body(q, one);
            FockVector nq2 = apply_one_body(q, nq);
            const double q1q2 = std::real(inner(one, nq2) - inner(one, nq)) / (n * (n - 1.0));
            CHECK(q1q2 <= 3.0 * std::pow(n, gamma - 2.0) * am + 1e-12);
        }
    }
}
