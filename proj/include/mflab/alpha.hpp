#pragma once

// Counting-functional machinery: weight functions on {0..N}, discrete
// derivatives and shifts, the projector q = 1 - span(phi), the spectral
// projectors P^(N,k) of the lifted counter N_q, evaluation of alpha_f,
// filtered states fhat(g) psi, and the three terms of d/dt alpha_f.
//
// P^(N,k) is never materialized: it is applied by Lagrange interpolation
// in N_q, which has exact integer spectrum {0..N}.

#include "mflab/fock.hpp"

namespace mflab {

struct WeightFunction {
    std::vector<double> values;  // f(0..N)

    int particle_count() const { return int(values.size()) - 1; }
    double operator()(int k) const {
        if (k < 0 || k >= int(values.size())) return 0.0;  // zero-extended
        return values[k];
    }
    void validate() const {
        if (values.size() < 2) throw InvalidArgument("WeightFunction: need N >= 1");
        if (values.front() != 0.0 || values.back() != 1.0)
            throw InvalidArgument("WeightFunction: need f(0)=0 and f(N)=1");
        for (double v : values)
            if (v < 0.0 || v > 1.0) throw InvalidArgument("WeightFunction: range [0,1]");
    }
    bool monotone_increasing() const {
        for (size_t k = 1; k < values.size(); ++k)
            if (values[k] < values[k - 1]) return false;
        return true;
    }
};

/// n(k) = k/N
inline WeightFunction weight_n(int n) {
    if (n < 1) throw InvalidArgument("weight_n: need N >= 1");
    WeightFunction f;
    f.values.resize(n + 1);
    for (int k = 0; k <= n; ++k) f.values[k] = double(k) / n;
    return f;
}

/// m(k) = k N^{-gamma} for k <= N^gamma, else 1
inline WeightFunction weight_m(int n, double gamma) {
    if (n < 1) throw InvalidArgument("weight_m: need N >= 1");
    if (!(gamma > 0.0) || gamma > 1.0) throw InvalidArgument("weight_m: need 0 < gamma <= 1");
    WeightFunction f;
    f.values.resize(n + 1);
    const double scale = std::pow(double(n), -gamma);
    for (int k = 0; k <= n; ++k) f.values[k] = std::min(k * scale, 1.0);
    return f;
}

/// f'^(d)(k) = (f(k) - f(k-d)) on {d..N}; f'^(-d)(k) = (f(k+d) - f(k)) on
/// {0..N-d}; zero outside the indicator support.
inline std::vector<double> derivative(const WeightFunction& f, int d) {
    if (d == 0 || std::abs(d) > 2) throw InvalidArgument("derivative: need |d| in {1,2}");
    const int n = f.particle_count();
    std::vector<double> out(n + 1, 0.0);
    if (d > 0) {
        for (int k = d; k <= n; ++k) out[k] = f(k) - f(k - d);
    } else {
        for (int k = 0; k <= n + d; ++k) out[k] = f(k - d) - f(k);
    }
    return out;
}

/// f_d(k) = f(k+d), zero-extended outside {0..N}
inline std::vector<double> shifted(const WeightFunction& f, int d) {
    const int n = f.particle_count();
    std::vector<double> out(n + 1, 0.0);
    for (int k = 0; k <= n; ++k) out[k] = f(k + d);
    return out;
}

/// q = 1 - sum_j |phi_j><phi_j|
inline OneBodyOperator q_onebody(const OrbitalSet& orbs) {
    const int m = orbs.space_dim();
    return {Mat::Identity(m, m) - orbs.projector(), true};
}

struct ProjectedDistribution {
    std::vector<double> probs;  // over k = 0..N
};

namespace detail {

/// P^(N,k) psi = prod_{j != k} (N_q - j)/(k - j) psi, applied sequentially.
inline FockVector project_k(const OneBodyOperator& q, const FockVector& psi, int k) {
    const int n = psi.basis->N;
    FockVector w = psi;
    for (int j = 0; j <= n; ++j) {
        if (j == k) continue;
        FockVector nqw = apply_one_body(q, w);
        w.coeffs = (nqw.coeffs - double(j) * w.coeffs) / double(k - j);
    }
    return w;
}

/// Monomial coefficients of the Lagrange basis polynomial L_k over nodes
/// {0..N}; fine at desk-scale N.
inline std::vector<double> lagrange_coeffs(int n, int k) {
    std::vector<double> c{1.0};
    double denom = 1.0;
    for (int j = 0; j <= n; ++j) {
        if (j == k) continue;
        denom *= double(k - j);
        std::vector<double> next(c.size() + 1, 0.0);
        for (size_t t = 0; t < c.size(); ++t) {
            next[t] += -double(j) * c[t];  // times (x - j)
            next[t + 1] += c[t];
        }
        c = std::move(next);
    }
    for (double& x : c) x /= denom;
    return c;
}

}  // namespace detail

/// probs[k] = <psi, P^(N,k) psi>, computed by both the moment method
/// (powers of N_q against Lagrange coefficients) and by spectral
/// projection; the two routes must agree.
inline ProjectedDistribution pnk_distribution(const FockVector& psi, const OrbitalSet& orbs,
                                              double xcheck_tol = 1e-9) {
    if (!psi.normalized(1e-10)) throw InvalidArgument("pnk_distribution: unnormalized state");
    const int n = psi.basis->N;
    const OneBodyOperator q = q_onebody(orbs);

    // moments mu_j = <psi, N_q^j psi>
    std::vector<double> mu(n + 1);
    FockVector w = psi;
    mu[0] = 1.0;
    for (int j = 1; j <= n; ++j) {
        w = apply_one_body(q, w);
        mu[j] = std::real(inner(psi, w));
    }
    ProjectedDistribution moment;
    moment.probs.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        const std::vector<double> c = detail::lagrange_coeffs(n, k);
        double p = 0.0;
        for (int j = 0; j <= n; ++j) p += c[j] * mu[j];
        moment.probs[k] = p;
    }

    ProjectedDistribution spectral;
    spectral.probs.resize(n + 1);
    for (int k = 0; k <= n; ++k)
        spectral.probs[k] = std::real(inner(psi, detail::project_k(q, psi, k)));

    for (int k = 0; k <= n; ++k)
        if (std::abs(moment.probs[k] - spectral.probs[k]) > xcheck_tol)
            throw InternalConsistency("pnk_distribution: moment and spectral routes disagree at k=" +
                                      std::to_string(k));
    return spectral;
}

/// fhat(g) psi = sum_k g(k) P^(N,k) psi
inline FockVector fhat_apply(const FockVector& psi, const OrbitalSet& orbs,
                             const std::vector<double>& g) {
    const int n = psi.basis->N;
    if (int(g.size()) != n + 1) throw InvalidArgument("fhat_apply: need N+1 filter values");
    const OneBodyOperator q = q_onebody(orbs);
    FockVector out = zero_state(psi.basis);
    for (int k = 0; k <= n; ++k) {
        if (g[k] == 0.0) continue;
        out.coeffs += g[k] * detail::project_k(q, psi, k).coeffs;
    }
    return out;
}

/// alpha_f = sum_k f(k) <P^(N,k)>
inline double alpha_f(const FockVector& psi, const OrbitalSet& orbs, const WeightFunction& f) {
    f.validate();
    if (f.particle_count() != psi.basis->N)
        throw InvalidArgument("alpha_f: weight length does not match particle number");
    const ProjectedDistribution dist = pnk_distribution(psi, orbs);
    double a = 0.0;
    for (int k = 0; k <= psi.basis->N; ++k) a += f(k) * dist.probs[k];
    return a;
}

/// alpha_n = tr(gamma1 q), with gamma1 trace-normalized to 1
inline double alpha_n_fast(const Mat& gamma1, const OrbitalSet& orbs) {
    return std::real((gamma1 * q_onebody(orbs).matrix).trace());
}

/// fhat(sqrt(f'^(d))) psi
inline FockVector filtered_half_derivative(const FockVector& psi, const OrbitalSet& orbs,
                                           const WeightFunction& f, int d) {
    std::vector<double> g = derivative(f, d);
    for (double& x : g) x = std::sqrt(std::max(x, 0.0));
    return fhat_apply(psi, orbs, g);
}

/// <phi, q_1 phi> = <phi, N_q phi>/N, no normalization assumed
inline double q1_expectation(const FockVector& phi, const OneBodyOperator& q) {
    return std::real(inner(phi, apply_one_body(q, phi))) / double(phi.basis->N);
}

/// <phi, q_1 q_2 phi> = <phi, N_q(N_q - 1) phi> / (N(N-1))
inline double q1q2_expectation(const FockVector& phi, const OneBodyOperator& q) {
    const double n = phi.basis->N;
    FockVector nq = apply_one_body(q, phi);
    FockVector nq2 = apply_one_body(q, nq);
    return std::real(inner(phi, nq2) - inner(phi, nq)) / (n * (n - 1.0));
}

// ---------------------------------------------------------------------------
// Two-body sandwich kernels and the three terms of d/dt alpha_f

inline Mat kron(const Mat& a, const Mat& b) {
    Mat k(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return k;
}

/// diag of v(|x1-x2|) on the (x1*M + x2) product index
inline Eigen::VectorXd pair_diag(const std::vector<double>& vtab) {
    const int m = int(vtab.size());
    Eigen::VectorXd d(m * m);
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y) d[x * m + y] = vtab[std::abs(x - y)];
    return d;
}

/// (A tensor B) v12 (C tensor D) as a dense M^2 x M^2 kernel
inline Mat sandwich_kernel(const Mat& a, const Mat& b, const Mat& c, const Mat& d,
                           const std::vector<double>& vtab) {
    return kron(a, b) * pair_diag(vtab).asDiagonal() * kron(c, d);
}

/// Direct mean-field operator diag(v * rho) built from the orbitals; with
/// exchange set, minus the kernel v(x-y) P(x,y).
inline Mat mean_field_onebody(const OrbitalSet& orbs, const std::vector<double>& vtab,
                              bool exchange) {
    const int m = orbs.space_dim();
    if (int(vtab.size()) != m) throw InvalidArgument("mean_field_onebody: table size mismatch");
    Mat p = orbs.projector();
    Mat v = Mat::Zero(m, m);
    for (int x = 0; x < m; ++x) {
        double u = 0.0;
        for (int y = 0; y < m; ++y) u += vtab[std::abs(x - y)] * std::real(p(y, y));
        v(x, x) = u;
    }
    if (exchange)
        for (int x = 0; x < m; ++x)
            for (int y = 0; y < m; ++y) v(x, y) -= vtab[std::abs(x - y)] * p(x, y);
    return v;
}

namespace detail {

struct TermContext {
    Mat p, q;
    FockVector f1, fm1;  // fhat(sqrt(f'^(1))) psi, fhat(sqrt(f'^(-1))) psi
};

inline TermContext make_term_context(const FockVector& psi, const OrbitalSet& orbs,
                                     const WeightFunction& f) {
    f.validate();
    if (!f.monotone_increasing())
        throw InvalidArgument("alpha derivative terms: weight must be monotone increasing");
    if (f.particle_count() != psi.basis->N)
        throw InvalidArgument("alpha derivative terms: weight length mismatch");
    TermContext ctx;
    ctx.p = orbs.projector();
    ctx.q = Mat::Identity(orbs.space_dim(), orbs.space_dim()) - ctx.p;
    ctx.f1 = filtered_half_derivative(psi, orbs, f, 1);
    ctx.fm1 = filtered_half_derivative(psi, orbs, f, -1);
    return ctx;
}

}  // namespace detail

/// 2N Im <psi, fhat'(1)^1/2 [ q1 ((N-1) p2 v12 p2 - V1) p1 ] fhat'(-1)^1/2 psi>
inline double term_I(const FockVector& psi, const OrbitalSet& orbs,
                     const std::vector<double>& vtab, const WeightFunction& f,
                     bool exchange = false, const PairLiftCaps& caps = {}) {
    auto ctx = detail::make_term_context(psi, orbs, f);
    // the N(N-1) lift prefactor cancels against 2N(N-1) exactly
    const Mat k = sandwich_kernel(ctx.q, ctx.p, ctx.p, ctx.p, vtab);
    double t = 2.0 * std::imag(pair_lift_expectation(k, ctx.f1, ctx.fm1, caps));
    const Mat qvp = ctx.q * mean_field_onebody(orbs, vtab, exchange) * ctx.p;
    t -= 2.0 * std::imag(inner(ctx.f1, apply_one_body({qvp, false}, ctx.fm1)));
    return t;
}

/// N Im <psi, fhat'(2)^1/2 [ q1 q2 (N-1) v12 p1 p2 ] fhat'(-2)^1/2 psi>
inline double term_II(const FockVector& psi, const OrbitalSet& orbs,
                      const std::vector<double>& vtab, const WeightFunction& f,
                      const PairLiftCaps& caps = {}) {
    auto ctx = detail::make_term_context(psi, orbs, f);
    FockVector f2 = filtered_half_derivative(psi, orbs, f, 2);
    FockVector fm2 = filtered_half_derivative(psi, orbs, f, -2);
    const Mat k = sandwich_kernel(ctx.q, ctx.q, ctx.p, ctx.p, vtab);
    return std::imag(pair_lift_expectation(k, f2, fm2, caps));
}

/// 2N Im <psi, fhat'(1)^1/2 [ q1 q2 (N-1) v12 p1 q2 ] fhat'(-1)^1/2 psi>
inline double term_III(const FockVector& psi, const OrbitalSet& orbs,
                       const std::vector<double>& vtab, const WeightFunction& f,
                       const PairLiftCaps& caps = {}) {
    auto ctx = detail::make_term_context(psi, orbs, f);
    const Mat k = sandwich_kernel(ctx.q, ctx.q, ctx.p, ctx.q, vtab);
    return 2.0 * std::imag(pair_lift_expectation(k, ctx.f1, ctx.fm1, caps));
}

}  // namespace mflab
