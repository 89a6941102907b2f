#pragma once

// One-particle discretized space: grids, kinetic/potential operators,
// interaction kernels with N-dependent scaling, mean-field convolutions
// and initial-orbital generators. Everything lives on a 1D grid in
// dimensionless units (hbar = 1 = 2m).
//
// Measure convention: the grid weight h is absorbed into vectors once at
// construction, so all inner products are plain sums. Convolutions carry
// h explicitly. Densities store continuum values, i.e. mass = h * sum.

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mflab/errors.hpp"

namespace mflab {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

enum class Boundary { periodic, dirichlet };

struct Grid {
    int points = 0;
    double length = 0.0;
    Boundary boundary = Boundary::periodic;

    double spacing() const {
        return boundary == Boundary::periodic ? length / points : length / (points + 1);
    }
    double coord(int i) const {
        return boundary == Boundary::periodic ? i * spacing() : (i + 1) * spacing();
    }
    std::vector<double> coords() const {
        std::vector<double> xs(points);
        for (int i = 0; i < points; ++i) xs[i] = coord(i);
        return xs;
    }
    bool operator==(const Grid&) const = default;
};

inline Grid make_grid(int points, double length, Boundary boundary) {
    if (points < 2) throw InvalidArgument("make_grid: need at least 2 points");
    if (!(length > 0.0)) throw InvalidArgument("make_grid: length must be positive");
    return Grid{points, length, boundary};
}

struct OneBodyOperator {
    Mat matrix;
    bool hermitian = false;

    bool hermitian_within(double tol = 1e-12) const {
        return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff() <= tol;
    }
};

/// Discrete -Laplacian, 3-point stencil (-f_{i-1} + 2 f_i - f_{i+1}) / h^2.
inline OneBodyOperator laplacian(const Grid& g) {
    const int m = g.points;
    const double ih2 = 1.0 / (g.spacing() * g.spacing());
    Mat a = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        a(i, i) = 2.0 * ih2;
        if (i + 1 < m) {
            a(i, i + 1) = -ih2;
            a(i + 1, i) = -ih2;
        }
    }
    if (g.boundary == Boundary::periodic && m > 2) {
        a(0, m - 1) = -ih2;
        a(m - 1, 0) = -ih2;
    }
    return {std::move(a), true};
}

/// Centered-difference first derivative (anti-hermitian); used for
/// commutator diagnostics, not for kinetic norms.
inline OneBodyOperator gradient(const Grid& g) {
    const int m = g.points;
    const double i2h = 1.0 / (2.0 * g.spacing());
    Mat a = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        if (i + 1 < m) a(i, i + 1) = i2h;
        if (i - 1 >= 0) a(i, i - 1) = -i2h;
    }
    if (g.boundary == Boundary::periodic && m > 2) {
        a(0, m - 1) = -i2h;
        a(m - 1, 0) = i2h;
    }
    return {std::move(a), false};
}

/// Kinetic norm ||grad phi||^2 evaluated as <phi, -Lap phi>, same stencil
/// as the Laplacian so energy accounts are consistent.
inline double kinetic_norm_sq(const OneBodyOperator& neg_lap, const Vec& phi) {
    return std::real(phi.dot(neg_lap.matrix * phi));
}

// ---------------------------------------------------------------------------
// Interactions

struct InteractionSpec {
    enum class Kind { power_law, cutoff_power_law, soft_coulomb, gaussian, tabulated, zero };

    Kind kind = Kind::gaussian;
    double s = 1.0;           // power-law exponent, in (0,2)
    int sign = +1;            // +- for power laws
    double delta = 0.0;       // cutoff scale N^{-delta}
    double cutoff_height = 1.0;  // D in the cutoff bound D N^{delta s}
    double a = 1.0;           // soft-coulomb softening
    double strength = 1.0;
    double sigma = 1.0;       // gaussian width
    std::vector<double> table;  // tabulated base kernel over displacement index

    double beta = 0.0;        // scaling exponent: v^(N) = N^{-beta} v
    int particle_count = 1;   // N used for the scaling

    double scale_factor() const { return std::pow(double(particle_count), -beta); }
};

namespace detail {

inline double base_kernel(const InteractionSpec& spec, double r, int displacement_index) {
    using K = InteractionSpec::Kind;
    switch (spec.kind) {
        case K::zero:
            return 0.0;
        case K::power_law:
            return spec.sign * std::pow(r, -spec.s);
        case K::cutoff_power_law: {
            const double rc = std::pow(double(spec.particle_count), -spec.delta);
            const double cap = spec.cutoff_height *
                               std::pow(double(spec.particle_count), spec.delta * spec.s);
            if (r > rc) return spec.sign * std::pow(r, -spec.s);
            return spec.sign * std::min(std::pow(r, -spec.s), cap);
        }
        case K::soft_coulomb:
            return spec.strength / std::sqrt(r * r + spec.a * spec.a);
        case K::gaussian:
            return spec.strength * std::exp(-r * r / (2.0 * spec.sigma * spec.sigma));
        case K::tabulated: {
            if (displacement_index < 0 || displacement_index >= int(spec.table.size()))
                throw InvalidArgument("tabulated kernel: displacement out of range");
            return spec.table[displacement_index];
        }
    }
    throw InvalidArgument("base_kernel: unknown kind");
}

}  // namespace detail

/// Scaled pair kernel v^(N) tabulated over displacement index d = 0..M-1.
/// Periodic grids identify d and M-d; the r=0 entry of an uncut power law
/// uses the half-cell value v(h/2).
inline std::vector<double> kernel_table(const InteractionSpec& spec, const Grid& g) {
    const int m = g.points;
    const double h = g.spacing();
    const double scale = spec.scale_factor();
    std::vector<double> v(m, 0.0);
    for (int d = 0; d < m; ++d) {
        double r = (g.boundary == Boundary::periodic) ? std::min(d, m - d) * h : d * h;
        if (d == 0 &&
            (spec.kind == InteractionSpec::Kind::power_law ||
             spec.kind == InteractionSpec::Kind::cutoff_power_law))
            r = h / 2.0;
        v[d] = scale * detail::base_kernel(spec, r, d);
    }
    if (g.boundary == Boundary::periodic)
        for (int d = 1; d < m; ++d) v[d] = v[std::min(d, m - d)];
    return v;
}

// ---------------------------------------------------------------------------
// Densities and orbital sets

struct Density {
    std::vector<double> values;  // continuum values, >= 0
    double mass(const Grid& g) const {
        double s = 0.0;
        for (double x : values) s += x;
        return g.spacing() * s;
    }
};

struct OrbitalSet {
    Mat vectors;  // M x N, orthonormal columns in the plain discrete inner product

    int count() const { return int(vectors.cols()); }
    int space_dim() const { return int(vectors.rows()); }
    Vec orbital(int j) const { return vectors.col(j); }

    double gram_deviation() const {
        Mat gram = vectors.adjoint() * vectors;
        return (gram - Mat::Identity(count(), count())).cwiseAbs().maxCoeff();
    }
    /// p = sum_j |phi_j><phi_j|
    Mat projector() const { return vectors * vectors.adjoint(); }
};

inline Density density_from(const OrbitalSet& orbs, const Grid& g) {
    const double h = g.spacing();
    Density rho;
    rho.values.assign(orbs.space_dim(), 0.0);
    for (int j = 0; j < orbs.count(); ++j)
        for (int x = 0; x < orbs.space_dim(); ++x)
            rho.values[x] += std::norm(orbs.vectors(x, j)) / h;
    return rho;
}

/// Discrete convolution (v * rho)(x) = h sum_y v(x-y) rho(y); periodic wrap
/// or zero padding per the grid boundary.
inline std::vector<double> convolve(const std::vector<double>& vtab, const Density& rho,
                                    const Grid& g) {
    const int m = g.points;
    if (int(vtab.size()) != m || int(rho.values.size()) != m)
        throw InvalidArgument("convolve: table/density size does not match grid");
    const double h = g.spacing();
    std::vector<double> u(m, 0.0);
    for (int x = 0; x < m; ++x) {
        double acc = 0.0;
        for (int y = 0; y < m; ++y) {
            int d = (g.boundary == Boundary::periodic) ? (x - y + m) % m : std::abs(x - y);
            acc += vtab[d] * rho.values[y];
        }
        u[x] = h * acc;
    }
    return u;
}

inline std::vector<double> mean_field(const InteractionSpec& spec, const Density& rho,
                                      const Grid& g) {
    return convolve(kernel_table(spec, g), rho, g);
}

/// ((v^(N))^2 * rho)(x)
inline std::vector<double> mean_field_squared(const InteractionSpec& spec, const Density& rho,
                                              const Grid& g) {
    std::vector<double> v2 = kernel_table(spec, g);
    for (double& x : v2) x *= x;
    return convolve(v2, rho, g);
}

/// sum_k (1 + k^2) |vhat(k)| with v(x) = sum_k vhat(k) e^{ikx} over the
/// grid's discrete momenta. Periodic grids only.
inline double fourier_weight(const InteractionSpec& spec, const Grid& g) {
    if (g.boundary != Boundary::periodic)
        throw InvalidArgument("fourier_weight: periodic grid required");
    const int m = g.points;
    const std::vector<double> v = kernel_table(spec, g);
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
        Complex vhat = 0.0;
        for (int x = 0; x < m; ++x) {
            double phase = -2.0 * std::numbers::pi * double(j) * double(x) / double(m);
            vhat += v[x] * Complex(std::cos(phase), std::sin(phase));
        }
        vhat /= double(m);
        int js = (j <= m / 2) ? j : j - m;  // signed mode index
        double k = 2.0 * std::numbers::pi * js / g.length;
        total += (1.0 + k * k) * std::abs(vhat);
    }
    return total;
}

/// sup_x |centered finite difference of (v^(N) * rho)| -- the empirical
/// average-force magnitude.
inline double force_scale(const InteractionSpec& spec, const Density& rho, const Grid& g) {
    const std::vector<double> u = mean_field(spec, rho, g);
    const int m = g.points;
    const double i2h = 1.0 / (2.0 * g.spacing());
    double sup = 0.0;
    for (int x = 0; x < m; ++x) {
        double diff;
        if (g.boundary == Boundary::periodic) {
            diff = (u[(x + 1) % m] - u[(x - 1 + m) % m]) * i2h;
        } else if (x == 0) {  // one-sided at the walls
            diff = (u[1] - u[0]) * 2.0 * i2h;
        } else if (x == m - 1) {
            diff = (u[m - 1] - u[m - 2]) * 2.0 * i2h;
        } else {
            diff = (u[x + 1] - u[x - 1]) * i2h;
        }
        sup = std::max(sup, std::abs(diff));
    }
    return sup;
}

// ---------------------------------------------------------------------------
// Initial-orbital generators

namespace detail {

inline void fix_phase(Eigen::Ref<Vec> v) {
    int imax = 0;
    double best = 0.0;
    for (int i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > best) {
            best = std::abs(v[i]);
            imax = i;
        }
    if (best > 0.0) v *= std::conj(v[imax]) / best;
}

}  // namespace detail

/// Lowest-N eigenvectors of -Lap + diag(w); deterministic phase convention
/// (largest-magnitude entry real positive).
inline OrbitalSet ground_orbitals(const Grid& g, const std::vector<double>& w, int n) {
    const int m = g.points;
    if (n < 1 || n > m) throw InvalidArgument("ground_orbitals: need 1 <= N <= M");
    if (!w.empty() && int(w.size()) != m)
        throw InvalidArgument("ground_orbitals: field table size mismatch");
    Mat h0 = laplacian(g).matrix;
    for (int i = 0; i < m && !w.empty(); ++i) h0(i, i) += w[i];
    Eigen::SelfAdjointEigenSolver<Mat> es(h0);
    OrbitalSet orbs;
    orbs.vectors = es.eigenvectors().leftCols(n);
    for (int j = 0; j < n; ++j) detail::fix_phase(orbs.vectors.col(j));
    return orbs;
}

/// Gaussian wave packets e^{-(x-c)^2/(4 w^2)} e^{ipx}, Gram-Schmidt
/// orthonormalized in the given order.
inline OrbitalSet packet_orbitals(const Grid& g, const std::vector<double>& centers, double width,
                                  const std::vector<double>& momenta, int n) {
    if (int(centers.size()) != n || int(momenta.size()) != n)
        throw InvalidArgument("packet_orbitals: need N centers and N momenta");
    if (!(width > 0.0)) throw InvalidArgument("packet_orbitals: width must be positive");
    const int m = g.points;
    Mat v(m, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) {
            double x = g.coord(i) - centers[j];
            double amp = std::exp(-x * x / (4.0 * width * width));
            double ph = momenta[j] * g.coord(i);
            v(i, j) = amp * Complex(std::cos(ph), std::sin(ph));
        }
    // modified Gram-Schmidt
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < j; ++k) v.col(j) -= v.col(k).dot(v.col(j)) * v.col(k);
        double nrm = v.col(j).norm();
        if (nrm < 1e-8) throw DegenerateInput("packet_orbitals: linearly dependent packets");
        v.col(j) /= nrm;
    }
    return OrbitalSet{std::move(v)};
}

// ---------------------------------------------------------------------------
// CSV tables ("x,value" header, one sample per line)

inline std::vector<double> load_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("load_table_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,value", 0) != 0)
        throw InvalidArgument("load_table_csv: expected header 'x,value' in " + path);
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw InvalidArgument("load_table_csv: malformed line '" + line + "'");
        values.push_back(std::stod(line.substr(comma + 1)));
    }
    return values;
}

}  // namespace mflab
