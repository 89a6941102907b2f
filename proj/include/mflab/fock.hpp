#pragma once

// Antisymmetric N-particle sector over the grid basis: occupation
// bitstrings, Slater determinants, one-/two-body operator application,
// reduced density matrices, snapshots.
//
// Conventions: basis masks ascend as integers; fermionic sign is the
// parity of occupied sites below the action site; rdm1 has trace 1.

#include <bit>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mflab/lattice.hpp"

namespace mflab {

inline std::uint64_t binomial(int m, int n) {
    if (n < 0 || n > m) return 0;
    n = std::min(n, m - n);
    std::uint64_t r = 1;
    for (int i = 1; i <= n; ++i) r = r * std::uint64_t(m - n + i) / std::uint64_t(i);
    return r;
}

struct OccupationBasis {
    int M = 0;
    int N = 0;
    std::vector<std::uint32_t> states;  // ascending
    std::unordered_map<std::uint32_t, int> index;

    int dim() const { return int(states.size()); }
    int ordinal(std::uint32_t mask) const {
        auto it = index.find(mask);
        if (it == index.end()) throw InvalidArgument("OccupationBasis: mask not in basis");
        return it->second;
    }
};

inline std::shared_ptr<const OccupationBasis> build_basis(int m, int n,
                                                          std::uint64_t cap = 200000) {
    if (n < 1 || n > m || m > 32) throw InvalidArgument("build_basis: need 1 <= N <= M <= 32");
    const std::uint64_t dim = binomial(m, n);
    if (dim > cap)
        throw ResourceLimit("build_basis: dimension " + std::to_string(dim) + " exceeds cap " +
                            std::to_string(cap));
    auto basis = std::make_shared<OccupationBasis>();
    basis->M = m;
    basis->N = n;
    basis->states.reserve(dim);
    // Gosper's hack walks same-popcount masks in ascending order
    std::uint32_t mask = (n == 32) ? 0xffffffffu : ((1u << n) - 1u);
    const std::uint64_t top = (m == 32) ? 0x100000000ull : (1ull << m);
    while (std::uint64_t(mask) < top) {
        basis->index.emplace(mask, int(basis->states.size()));
        basis->states.push_back(mask);
        const std::uint64_t c = mask & (0u - mask);
        const std::uint64_t r = std::uint64_t(mask) + c;
        const std::uint64_t next = (((r ^ mask) >> 2) / c) | r;
        if (next >= top || c == 0) break;
        mask = std::uint32_t(next);
    }
    if (basis->states.size() != dim) throw InternalConsistency("build_basis: enumeration short");
    return basis;
}

struct FockVector {
    std::shared_ptr<const OccupationBasis> basis;
    Vec coeffs;

    double norm() const { return coeffs.norm(); }
    bool normalized(double tol = 1e-12) const { return std::abs(norm() - 1.0) <= tol; }
};

inline FockVector zero_state(std::shared_ptr<const OccupationBasis> basis) {
    FockVector v;
    v.coeffs = Vec::Zero(basis->dim());
    v.basis = std::move(basis);
    return v;
}

inline Complex inner(const FockVector& a, const FockVector& b) { return a.coeffs.dot(b.coeffs); }

/// Gaussian random coefficients, normalized. Deterministic for a given engine state.
inline FockVector random_state(std::shared_ptr<const OccupationBasis> basis,
                               std::mt19937_64& rng) {
    FockVector v = zero_state(std::move(basis));
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < v.coeffs.size(); ++i) {
        double re = g(rng), im = g(rng);
        v.coeffs[i] = Complex(re, im);
    }
    v.coeffs /= v.coeffs.norm();
    return v;
}

/// Antisymmetrized product of the orbitals: coefficient for occupation set S
/// is det([phi_j(x_i)]) with rows in ascending site order.
inline FockVector slater(const OrbitalSet& orbs,
                         std::shared_ptr<const OccupationBasis> basis) {
    if (orbs.count() != basis->N || orbs.space_dim() != basis->M)
        throw InvalidArgument("slater: orbital set does not match basis");
    const int n = basis->N;
    FockVector v = zero_state(basis);
    Mat sub(n, n);
    for (int idx = 0; idx < basis->dim(); ++idx) {
        std::uint32_t mask = basis->states[idx];
        int row = 0;
        for (int x = 0; x < basis->M; ++x)
            if (mask & (1u << x)) sub.row(row++) = orbs.vectors.row(x);
        v.coeffs[idx] = sub.determinant();
    }
    return v;
}

namespace detail {

inline int parity_below(std::uint32_t mask, int site) {
    return std::popcount(mask & ((1u << site) - 1u)) & 1;
}

}  // namespace detail

/// Sum_m A_m on antisymmetric states, i.e. sum_{x,y} A(y,x) a†_y a_x.
inline FockVector apply_one_body(const OneBodyOperator& a, const FockVector& psi) {
    const auto& basis = *psi.basis;
    if (a.matrix.rows() != basis.M)
        throw InvalidArgument("apply_one_body: operator dimension mismatch");
    FockVector out = zero_state(psi.basis);
    for (int idx = 0; idx < basis.dim(); ++idx) {
        const Complex c = psi.coeffs[idx];
        if (c == Complex(0.0)) continue;
        const std::uint32_t mask = basis.states[idx];
        for (int x = 0; x < basis.M; ++x) {
            if (!(mask & (1u << x))) continue;
            const std::uint32_t mask1 = mask ^ (1u << x);
            const int sx = detail::parity_below(mask, x);
            for (int y = 0; y < basis.M; ++y) {
                const Complex axy = a.matrix(y, x);
                if (axy == Complex(0.0)) continue;
                if (mask1 & (1u << y)) continue;
                const int sy = detail::parity_below(mask1, y);
                const double sgn = ((sx + sy) & 1) ? -1.0 : 1.0;
                out.coeffs[basis.ordinal(mask1 | (1u << y))] += sgn * axy * c;
            }
        }
    }
    return out;
}

/// Position-diagonal pair interaction: scales each coefficient by
/// sum_{x<y occupied} v(|x-y|) using the displacement-indexed table.
inline FockVector apply_pair_diagonal(const std::vector<double>& vtab, const FockVector& psi) {
    const auto& basis = *psi.basis;
    if (int(vtab.size()) != basis.M)
        throw InvalidArgument("apply_pair_diagonal: table size mismatch");
    FockVector out = zero_state(psi.basis);
    for (int idx = 0; idx < basis.dim(); ++idx) {
        const std::uint32_t mask = basis.states[idx];
        double e = 0.0;
        for (int x = 0; x < basis.M; ++x) {
            if (!(mask & (1u << x))) continue;
            for (int y = x + 1; y < basis.M; ++y)
                if (mask & (1u << y)) e += vtab[y - x];
        }
        out.coeffs[idx] = e * psi.coeffs[idx];
    }
    return out;
}

struct HamiltonianSpec {
    OneBodyOperator one_body;           // kinetic + external field, regime prefactors included
    std::vector<double> pair;           // tabulated v^(N) over displacement
    double hbar_eff = 1.0;              // prefactor on i d/dt

    void validate(int m) const {
        if (one_body.matrix.rows() != m || !one_body.hermitian_within(1e-12))
            throw InvalidArgument("HamiltonianSpec: one_body must be hermitian MxM");
        if (int(pair.size()) != m) throw InvalidArgument("HamiltonianSpec: pair table size");
        if (!(hbar_eff > 0.0)) throw InvalidArgument("HamiltonianSpec: hbar_eff must be > 0");
    }
};

inline FockVector apply_hamiltonian(const HamiltonianSpec& h, const FockVector& psi) {
    h.validate(psi.basis->M);
    FockVector out = apply_one_body(h.one_body, psi);
    out.coeffs += apply_pair_diagonal(h.pair, psi).coeffs;
    return out;
}

/// gamma(y,x) = <a†_x a_y> / N, trace 1; hermitian by symmetrization.
inline Mat rdm1(const FockVector& psi) {
    if (!psi.normalized(1e-10)) throw InvalidArgument("rdm1: state must be normalized");
    const auto& basis = *psi.basis;
    Mat g = Mat::Zero(basis.M, basis.M);
    for (int idx = 0; idx < basis.dim(); ++idx) {
        const Complex c = psi.coeffs[idx];
        if (c == Complex(0.0)) continue;
        const std::uint32_t mask = basis.states[idx];
        for (int y = 0; y < basis.M; ++y) {
            if (!(mask & (1u << y))) continue;
            const std::uint32_t mask1 = mask ^ (1u << y);
            const int sy = detail::parity_below(mask, y);
            for (int x = 0; x < basis.M; ++x) {
                if (mask1 & (1u << x)) continue;
                const int sx = detail::parity_below(mask1, x);
                const double sgn = ((sx + sy) & 1) ? -1.0 : 1.0;
                // <psi| a†_x a_y |psi> accumulated at (y,x)
                g(y, x) += sgn * std::conj(psi.coeffs[basis.ordinal(mask1 | (1u << x))]) * c;
            }
        }
    }
    g /= double(basis.N);
    return 0.5 * (g + Mat(g.adjoint()));
}

/// sqrt(1-eps^2) * slater(phis) + eps * slater(phis with slot j replaced);
/// the replacement must be orthogonal to the span.
inline FockVector mix_excitation(const OrbitalSet& orbs, const Vec& replacement, int slot,
                                 double eps, std::shared_ptr<const OccupationBasis> basis) {
    if (slot < 0 || slot >= orbs.count()) throw InvalidArgument("mix_excitation: bad slot");
    if (eps < 0.0 || eps > 1.0) throw InvalidArgument("mix_excitation: need 0 <= eps <= 1");
    Vec r = replacement / replacement.norm();
    if ((orbs.vectors.adjoint() * r).cwiseAbs().maxCoeff() > 1e-10)
        throw InvalidArgument("mix_excitation: replacement not orthogonal to span");
    FockVector base = slater(orbs, basis);
    OrbitalSet excited = orbs;
    excited.vectors.col(slot) = r;
    FockVector exc = slater(excited, basis);
    FockVector out = zero_state(std::move(basis));
    out.coeffs = std::sqrt(1.0 - eps * eps) * base.coeffs + eps * exc.coeffs;
    return out;
}

// ---------------------------------------------------------------------------
// Two-body lift. K is an M^2 x M^2 kernel indexed (x1*M + x2); the lift
// realizes sum_{i != j} K_ij on antisymmetric states as
// sum_{pqrs} K[(p,q),(r,s)] a†_p a†_q a_s a_r. Dense, so gated by a cap:
// these are verification paths, not production propagation.

struct PairLiftCaps {
    std::uint64_t dim = 2000;
    int sites = 16;
};

inline FockVector apply_pair_lift(const Mat& k, const FockVector& psi,
                                  const PairLiftCaps& caps = {}) {
    const auto& basis = *psi.basis;
    const int m = basis.M;
    if (k.rows() != m * m || k.cols() != m * m)
        throw InvalidArgument("apply_pair_lift: kernel must be M^2 x M^2");
    if (m > caps.sites || std::uint64_t(basis.dim()) > caps.dim)
        throw ResourceLimit("apply_pair_lift: basis " + std::to_string(basis.dim()) + " sites " +
                            std::to_string(m) + " beyond the two-body cap");
    FockVector out = zero_state(psi.basis);
    for (int idx = 0; idx < basis.dim(); ++idx) {
        const Complex c = psi.coeffs[idx];
        if (c == Complex(0.0)) continue;
        const std::uint32_t mask = basis.states[idx];
        for (int r = 0; r < m; ++r) {
            if (!(mask & (1u << r))) continue;
            const int sr = detail::parity_below(mask, r);
            const std::uint32_t m1 = mask ^ (1u << r);
            for (int s = 0; s < m; ++s) {
                if (!(m1 & (1u << s))) continue;
                const int ss = detail::parity_below(m1, s);
                const std::uint32_t m2 = m1 ^ (1u << s);
                for (int q = 0; q < m; ++q) {
                    if (m2 & (1u << q)) continue;
                    const int sq = detail::parity_below(m2, q);
                    const std::uint32_t m3 = m2 | (1u << q);
                    for (int p = 0; p < m; ++p) {
                        if (m3 & (1u << p)) continue;
                        const Complex kv = k(p * m + q, r * m + s);
                        if (kv == Complex(0.0)) continue;
                        const int sp = detail::parity_below(m3, p);
                        const double sgn = ((sr + ss + sq + sp) & 1) ? -1.0 : 1.0;
                        out.coeffs[basis.ordinal(m3 | (1u << p))] += sgn * kv * c;
                    }
                }
            }
        }
    }
    return out;
}

/// <chi, (sum_{i != j} K_ij) psi>
inline Complex pair_lift_expectation(const Mat& k, const FockVector& chi, const FockVector& psi,
                                     const PairLiftCaps& caps = {}) {
    return inner(chi, apply_pair_lift(k, psi, caps));
}

// ---------------------------------------------------------------------------
// Snapshots: JSON with header (M, N) and (mask, re, im) triples. Doubles use
// shortest round-trip formatting, so load(save(v)) is bit-exact.

inline void save_snapshot(const FockVector& psi, const std::string& path) {
    nlohmann::json j;
    j["M"] = psi.basis->M;
    j["N"] = psi.basis->N;
    auto& arr = j["coeffs"] = nlohmann::json::array();
    for (int i = 0; i < psi.basis->dim(); ++i)
        arr.push_back({psi.basis->states[i], psi.coeffs[i].real(), psi.coeffs[i].imag()});
    std::ofstream out(path);
    if (!out) throw InvalidArgument("save_snapshot: cannot open " + path);
    out << j.dump() << '\n';
}

inline FockVector load_snapshot(const std::string& path, std::uint64_t cap = 200000) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("load_snapshot: cannot open " + path);
    nlohmann::json j;
    in >> j;
    FockVector v = zero_state(build_basis(j.at("M").get<int>(), j.at("N").get<int>(), cap));
    for (const auto& triple : j.at("coeffs")) {
        const std::uint32_t mask = triple.at(0).get<std::uint32_t>();
        v.coeffs[v.basis->ordinal(mask)] =
            Complex(triple.at(1).get<double>(), triple.at(2).get<double>());
    }
    return v;
}

}  // namespace mflab
