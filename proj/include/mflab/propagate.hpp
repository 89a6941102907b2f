#pragma once

// Time evolution: exact many-body propagation by Lanczos approximation of
// exp(-i H t / hbar_eff), and the fermionic Hartree / Hartree-Fock orbital
// integrator with regime presets and energy accounting.

#include "mflab/alpha.hpp"

namespace mflab {

struct ExactPropagatorConfig {
    double dt = 0.05;
    int krylov_dim = 20;
    double tol = 1e-10;
    int max_substeps = 200000;
};

namespace detail {

struct LanczosResult {
    Vec state;
    double err = 0.0;
};

/// One Krylov step of exp(-i tau H) psi with full reorthogonalization;
/// the error estimate is the standard beta * |last component| residual.
inline LanczosResult lanczos_exp_step(const HamiltonianSpec& h, const FockVector& psi,
                                      double tau, int kdim) {
    const int dim = int(psi.coeffs.size());
    kdim = std::min(kdim, dim);
    Mat v(dim, kdim);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(kdim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(kdim);  // b[j] couples j-1 and j
    const double nrm = psi.coeffs.norm();
    v.col(0) = psi.coeffs / nrm;
    int built = 0;
    double next_beta = 0.0;
    FockVector work = zero_state(psi.basis);
    for (int j = 0; j < kdim; ++j) {
        built = j + 1;
        work.coeffs = v.col(j);
        Vec w = apply_hamiltonian(h, work).coeffs;
        a[j] = std::real(Complex(v.col(j).dot(w)));
        w -= a[j] * v.col(j);
        if (j > 0) w -= b[j] * v.col(j - 1);
        // full reorthogonalization: cheap at these Krylov sizes
        for (int i = 0; i <= j; ++i) w -= v.col(i).dot(w) * v.col(i);
        next_beta = w.norm();
        if (j + 1 < kdim) {
            if (next_beta < 1e-14) {  // invariant subspace reached
                next_beta = 0.0;
                break;
            }
            b[j + 1] = next_beta;
            v.col(j + 1) = w / next_beta;
        }
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(built, built);
    for (int j = 0; j < built; ++j) {
        t(j, j) = a[j];
        if (j > 0) {
            t(j, j - 1) = b[j];
            t(j - 1, j) = b[j];
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    Vec phases(built);
    for (int j = 0; j < built; ++j) {
        const double th = -tau * es.eigenvalues()[j];
        phases[j] = Complex(std::cos(th), std::sin(th));
    }
    Vec small = es.eigenvectors().cast<Complex>() *
                (phases.array() * es.eigenvectors().row(0).transpose().cast<Complex>().array())
                    .matrix();
    LanczosResult r;
    r.state = nrm * (v.leftCols(built) * small);
    r.err = (built == kdim) ? next_beta * std::abs(small[built - 1]) * std::abs(tau) : 0.0;
    return r;
}

}  // namespace detail

/// Krylov approximation of exp(-i H t / hbar_eff) psi with adaptive
/// substepping until the per-step residual estimate is below tol.
inline FockVector exact_evolve(const HamiltonianSpec& h, const FockVector& psi, double t,
                               const ExactPropagatorConfig& cfg = {}) {
    h.validate(psi.basis->M);
    if (!(cfg.tol > 0.0) || !(cfg.dt > 0.0))
        throw InvalidArgument("exact_evolve: dt and tol must be positive");
    FockVector cur = psi;
    if (t == 0.0) return cur;
    const double sign = (t > 0.0) ? 1.0 : -1.0;
    double remaining = std::abs(t) / h.hbar_eff;
    double step = std::min(cfg.dt / h.hbar_eff, remaining);
    int substeps = 0;
    while (remaining > 1e-15 * std::abs(t) / h.hbar_eff) {
        const double tau = sign * std::min(step, remaining);
        detail::LanczosResult r = detail::lanczos_exp_step(h, cur, tau, cfg.krylov_dim);
        if (r.err > cfg.tol) {
            step /= 2.0;
            if (step < 1e-12)
                throw PropagationFailure("exact_evolve: residual " + std::to_string(r.err) +
                                         " will not converge, step underflow");
            continue;
        }
        cur.coeffs = std::move(r.state);
        remaining -= std::abs(tau);
        if (++substeps > cfg.max_substeps)
            throw PropagationFailure("exact_evolve: exceeded max_substeps=" +
                                     std::to_string(cfg.max_substeps));
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Regime presets

struct RegimePreset {
    enum class Name { dilute, semiclassical, unscaled };
    Name name = Name::unscaled;
    double beta = 0.0;             // interaction scaling v^(N) = N^{-beta} v
    double hbar_eff = 1.0;         // prefactor on i d/dt
    double kinetic_prefactor = 1.0;
};

/// dilute: hbar = 1, beta caller-chosen (1 - s/3 is the 3D-reference
/// default); semiclassical: i N^{-1/3} d/dt, kinetic N^{-2/3}, beta = 1.
inline RegimePreset make_regime(RegimePreset::Name name, int n, double dilute_beta = 2.0 / 3.0) {
    RegimePreset r;
    r.name = name;
    switch (name) {
        case RegimePreset::Name::dilute:
            r.beta = dilute_beta;
            break;
        case RegimePreset::Name::semiclassical:
            r.beta = 1.0;
            r.hbar_eff = std::pow(double(n), -1.0 / 3.0);
            r.kinetic_prefactor = std::pow(double(n), -2.0 / 3.0);
            break;
        case RegimePreset::Name::unscaled:
            break;
    }
    return r;
}

/// One-body part kinetic_prefactor * (-Lap) + diag(w), pair part from the
/// kernel table with the regime's beta and N applied.
inline HamiltonianSpec build_hamiltonian(const Grid& g, const std::vector<double>& w,
                                         InteractionSpec spec, const RegimePreset& regime,
                                         int n) {
    spec.beta = regime.beta;
    spec.particle_count = n;
    HamiltonianSpec h;
    h.one_body.matrix = regime.kinetic_prefactor * laplacian(g).matrix;
    h.one_body.hermitian = true;
    if (!w.empty()) {
        if (int(w.size()) != g.points) throw InvalidArgument("build_hamiltonian: field size");
        for (int i = 0; i < g.points; ++i) h.one_body.matrix(i, i) += w[i];
    }
    h.pair = kernel_table(spec, g);
    h.hbar_eff = regime.hbar_eff;
    return h;
}

// ---------------------------------------------------------------------------
// Mean-field (fermionic Hartree / Hartree-Fock) orbital dynamics

struct MeanFieldConfig {
    enum class Scheme { rk4, strang_split };
    double dt = 1e-3;
    Scheme scheme = Scheme::rk4;
    bool exchange = false;  // Hartree-Fock when set
    double gram_tol = 1e-6;
};

/// (1/hbar)(-i)(H0 + v * rho) phi_j, density rebuilt from the argument.
inline Mat hartree_rhs(const Mat& phis, const std::vector<double>& vtab, const Mat& h0,
                       double hbar_eff) {
    const int m = int(phis.rows());
    Eigen::VectorXd dens(m);
    for (int x = 0; x < m; ++x) dens[x] = phis.row(x).squaredNorm();
    Mat out = h0 * phis;
    for (int x = 0; x < m; ++x) {
        double u = 0.0;
        for (int y = 0; y < m; ++y) u += vtab[std::abs(x - y)] * dens[y];
        out.row(x) += u * phis.row(x);
    }
    return Complex(0.0, -1.0 / hbar_eff) * out;
}

/// hartree_rhs minus the exchange term sum_k (v * (phi_k^* phi_j)) phi_k.
inline Mat hf_rhs(const Mat& phis, const std::vector<double>& vtab, const Mat& h0,
                  double hbar_eff) {
    const int m = int(phis.rows());
    Mat out = hartree_rhs(phis, vtab, h0, hbar_eff);
    Mat p = phis * phis.adjoint();
    Mat ex = Mat::Zero(m, m);
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y) ex(x, y) = vtab[std::abs(x - y)] * p(x, y);
    out -= Complex(0.0, -1.0 / hbar_eff) * (ex * phis);
    return out;
}

struct MeanFieldSystem {
    std::vector<double> vtab;
    Mat h0;
    double hbar_eff = 1.0;

    Mat rhs(const Mat& phis, bool exchange) const {
        return exchange ? hf_rhs(phis, vtab, h0, hbar_eff)
                        : hartree_rhs(phis, vtab, h0, hbar_eff);
    }
};

inline MeanFieldSystem make_mf_system(const Grid& g, const std::vector<double>& w,
                                      InteractionSpec spec, const RegimePreset& regime, int n) {
    HamiltonianSpec h = build_hamiltonian(g, w, spec, regime, n);
    return MeanFieldSystem{std::move(h.pair), std::move(h.one_body.matrix), h.hbar_eff};
}

struct MfState {
    double time = 0.0;
    OrbitalSet orbitals;
    double gram_deviation = 0.0;
};

namespace detail {

inline Mat rk4_step(const MeanFieldSystem& sys, const Mat& phis, double dt, bool exchange) {
    Mat k1 = sys.rhs(phis, exchange);
    Mat k2 = sys.rhs(phis + 0.5 * dt * k1, exchange);
    Mat k3 = sys.rhs(phis + 0.5 * dt * k2, exchange);
    Mat k4 = sys.rhs(phis + dt * k3, exchange);
    return phis + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct StrangCache {
    Mat u;                  // eigenvectors of h0
    Eigen::VectorXd evals;  // eigenvalues of h0
};

inline Mat strang_step(const MeanFieldSystem& sys, const StrangCache& cache, const Mat& phis,
                       double dt) {
    const int m = int(phis.rows());
    auto half_potential = [&](const Mat& f) {
        Eigen::VectorXd dens(m);
        for (int x = 0; x < m; ++x) dens[x] = f.row(x).squaredNorm();
        Mat out = f;
        for (int x = 0; x < m; ++x) {
            double u = 0.0;
            for (int y = 0; y < m; ++y) u += sys.vtab[std::abs(x - y)] * dens[y];
            const double th = -0.5 * dt * u / sys.hbar_eff;
            out.row(x) *= Complex(std::cos(th), std::sin(th));
        }
        return out;
    };
    Mat f = half_potential(phis);
    Mat modes = cache.u.adjoint() * f;
    for (int j = 0; j < m; ++j) {
        const double th = -dt * cache.evals[j] / sys.hbar_eff;
        modes.row(j) *= Complex(std::cos(th), std::sin(th));
    }
    f = cache.u * modes;
    return half_potential(f);
}

}  // namespace detail

/// Integrates the orbitals over [0, t], sampling at the requested times
/// (which must be nondecreasing, starting at >= 0). Gram deviation is
/// monitored, never projected away; exceeding gram_tol aborts.
inline std::vector<MfState> mf_evolve(const OrbitalSet& init, const MeanFieldSystem& sys,
                                      const std::vector<double>& sample_times,
                                      const MeanFieldConfig& cfg) {
    if (init.gram_deviation() > 1e-8)
        throw InvalidArgument("mf_evolve: initial orbitals not orthonormal");
    if (!(cfg.dt > 0.0)) throw InvalidArgument("mf_evolve: dt must be positive");
    detail::StrangCache cache;
    if (cfg.scheme == MeanFieldConfig::Scheme::strang_split) {
        if (cfg.exchange)
            throw InvalidArgument("mf_evolve: strang_split supports direct interaction only");
        Eigen::SelfAdjointEigenSolver<Mat> es(sys.h0);
        cache.u = es.eigenvectors();
        cache.evals = es.eigenvalues();
    }
    Mat phis = init.vectors;
    double t = 0.0;
    std::vector<MfState> out;
    auto check_and_record = [&](double at) {
        OrbitalSet o{phis};
        const double dev = o.gram_deviation();
        if (dev > cfg.gram_tol)
            throw IntegratorAccuracy("mf_evolve: Gram deviation " + std::to_string(dev) +
                                     " at t=" + std::to_string(at) + "; reduce dt");
        out.push_back({at, std::move(o), dev});
    };
    for (double target : sample_times) {
        if (target < t - 1e-12) throw InvalidArgument("mf_evolve: sample times must ascend");
        while (target - t > 1e-12) {
            const double dt = std::min(cfg.dt, target - t);
            phis = (cfg.scheme == MeanFieldConfig::Scheme::rk4)
                       ? detail::rk4_step(sys, phis, dt, cfg.exchange)
                       : detail::strang_step(sys, cache, phis, dt);
            t += dt;
            OrbitalSet probe{phis};
            if (probe.gram_deviation() > cfg.gram_tol)
                throw IntegratorAccuracy("mf_evolve: Gram deviation " +
                                         std::to_string(probe.gram_deviation()) + " at t=" +
                                         std::to_string(t) + "; reduce dt");
        }
        check_and_record(target);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Energy accounting

inline double energy_many(const HamiltonianSpec& h, const FockVector& psi) {
    if (psi.coeffs.norm() == 0.0) throw InvalidArgument("energy_many: zero state");
    return std::real(inner(psi, apply_hamiltonian(h, psi)));
}

struct MfEnergy {
    double total = 0.0;
    double kinetic_sum = 0.0;  // sum_j ||grad phi_j||^2, bare stencil
};

/// sum_j <phi_j, H0 phi_j> + (1/2) sum_xy v(x-y) rho~(x) rho~(y), minus
/// (1/2) sum_xy v(x-y) |P(x,y)|^2 when exchange is configured; rho~ is the
/// measure-absorbed density sum_j |phi_j|^2.
inline MfEnergy energy_mf(const OrbitalSet& orbs, const MeanFieldSystem& sys, const Grid& g,
                          bool exchange) {
    const int m = orbs.space_dim();
    MfEnergy e;
    e.total = std::real((orbs.vectors.adjoint() * sys.h0 * orbs.vectors).trace());
    Eigen::VectorXd dens(m);
    for (int x = 0; x < m; ++x) dens[x] = orbs.vectors.row(x).squaredNorm();
    double direct = 0.0;
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y) direct += sys.vtab[std::abs(x - y)] * dens[x] * dens[y];
    e.total += 0.5 * direct;
    if (exchange) {
        Mat p = orbs.projector();
        double ex = 0.0;
        for (int x = 0; x < m; ++x)
            for (int y = 0; y < m; ++y) ex += sys.vtab[std::abs(x - y)] * std::norm(p(x, y));
        e.total -= 0.5 * ex;
    }
    const Mat neglap = laplacian(g).matrix;
    e.kinetic_sum = std::real((orbs.vectors.adjoint() * neglap * orbs.vectors).trace());
    return e;
}

}  // namespace mflab
