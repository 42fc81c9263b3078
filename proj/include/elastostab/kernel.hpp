#pragma once

#include <Eigen/Dense>
#include <random>

#include "elastostab/elasticity.hpp"
#include "elastostab/fd.hpp"

namespace elastostab {

struct SingularStrainError : Error {
    std::vector<index_t> locations;
    SingularStrainError(const std::string& what, std::vector<index_t> locs)
        : Error(what), locations(std::move(locs)) {}
};

struct KernelFieldResult {
    VectorField a;
    double max_condition = 0;
    index_t near_singular_points = 0;  // cond > 1e8
};

namespace detail {

/// Solve a . eps_i = rhs_i by the Gram-Schmidt recursion over the strain
/// columns (orthonormalized form).
inline Eigen::Vector3d gram_schmidt_solve(const Eigen::Matrix3d& eps,
                                          const Eigen::Vector3d& rhs) {
    std::array<Eigen::Vector3d, 3> e;
    std::array<double, 3> a_dot_e{};
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d v = eps.col(i);
        double s = rhs[i];  // a . b_i is prescribed
        for (int j = 0; j < i; ++j) {
            const double c = eps.col(i).dot(e[std::size_t(j)]);
            v -= c * e[std::size_t(j)];
            s -= c * a_dot_e[std::size_t(j)];
        }
        const double r = v.norm();
        e[std::size_t(i)] = v / r;
        a_dot_e[std::size_t(i)] = s / r;
    }
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) a += a_dot_e[std::size_t(i)] * e[std::size_t(i)];
    return a;
}

}  // namespace detail

/// The field a with a . eps_i = -div(eps)_i at every point; requires
/// nonsingular strain everywhere. Warns (in the result) where the strain
/// condition number exceeds 1e8.
inline KernelFieldResult kernel_vector_field(const SymTensorField& eps, index_t snap = 0) {
    const Grid& g = eps.grid();
    VectorField dive = tensor_divergence(eps);
    KernelFieldResult res{VectorField(g), 0.0, 0};

    std::vector<index_t> singular;
    for (index_t p = 0; p < g.points(); ++p) {
        Eigen::Matrix3d E;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) E(i, j) = eps.at(p, sym_index(i, j), snap);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(E, Eigen::EigenvaluesOnly);
        const double lmax = std::max(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[2]));
        const double lmin = std::min({std::abs(es.eigenvalues()[0]),
                                      std::abs(es.eigenvalues()[1]),
                                      std::abs(es.eigenvalues()[2])});
        if (lmin <= 1e-14 * lmax || lmax == 0.0) {
            singular.push_back(p);
            continue;
        }
        const double cond = lmax / lmin;
        res.max_condition = std::max(res.max_condition, cond);
        if (cond > 1e8) ++res.near_singular_points;
        Eigen::Vector3d rhs(-dive.at(p, 0, snap), -dive.at(p, 1, snap), -dive.at(p, 2, snap));
        const Eigen::Vector3d a = detail::gram_schmidt_solve(E, rhs);
        for (int c = 0; c < 3; ++c) res.a.at(p, c) = a[c];
    }
    if (!singular.empty())
        throw SingularStrainError("singular strain at " + std::to_string(singular.size()) +
                                      " grid points",
                                  std::move(singular));
    return res;
}

/// Independent route: direct pointwise 3x3 solve (used as the oracle the
/// Gram-Schmidt path is checked against).
inline VectorField kernel_vector_field_direct(const SymTensorField& eps, index_t snap = 0) {
    const Grid& g = eps.grid();
    VectorField dive = tensor_divergence(eps);
    VectorField a(g);
    for (index_t p = 0; p < g.points(); ++p) {
        Eigen::Matrix3d E;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) E(i, j) = eps.at(p, sym_index(i, j), snap);
        Eigen::Vector3d rhs(-dive.at(p, 0, snap), -dive.at(p, 1, snap), -dive.at(p, 2, snap));
        const Eigen::Vector3d x = E.partialPivLu().solve(rhs);
        for (int c = 0; c < 3; ++c) a.at(p, c) = x[c];
    }
    return a;
}

/// delta-mu*(x) = exp of the path integral of a from p to x; equals 1 at p.
inline ScalarField kernel_element(const VectorField& a, std::array<double, 3> p) {
    const Grid& g = a.grid();
    require(g.contains(p), "kernel_element: base point outside grid");
    ScalarField out(g);
    for (index_t q = 0; q < g.points(); ++q)
        out.at(q) = std::exp(path_integral(a, p, g.point(q)));
    return out;
}

/// Grid point nearest the box center (keeps path-integral nodes on grid
/// planes, which the quadrature error model relies on).
inline std::array<double, 3> grid_center(const Grid& g) {
    return g.point(g.dims[0] / 2, g.dims[1] / 2, g.dims[2] / 2);
}

/// Normalized residual of the kernel equation div(dmu eps) = 0.
inline double verify_kernel(const ScalarField& delta_mu, const SymTensorField& eps) {
    require(delta_mu.grid() == eps.grid(), "verify_kernel: grid mismatch");
    const SymTensorField prod = scaled_by(eps, delta_mu);
    const double num = sobolev_norm(tensor_divergence(prod), 0);
    const double den = sobolev_norm(delta_mu, 1) * sobolev_norm(eps, 1);
    return den > 0 ? num / den : 0.0;
}

/// Max over sampled point pairs of the staircase-order sensitivity of the
/// path integral; near zero for conservative fields.
inline double path_independence_defect(const VectorField& a, int n_pairs = 32,
                                       std::uint64_t seed = 1) {
    const Grid& g = a.grid();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double worst = 0;
    for (int k = 0; k < n_pairs; ++k) {
        std::array<double, 3> p, x;
        for (int c = 0; c < 3; ++c) {
            const double lo = g.origin[c], hi = g.origin[c] + g.spacing[c] * double(g.dims[c] - 1);
            p[std::size_t(c)] = lo + (hi - lo) * uni(rng);
            x[std::size_t(c)] = lo + (hi - lo) * uni(rng);
        }
        const double i1 = path_integral(a, p, x, {0, 1, 2});
        const double i2 = path_integral(a, p, x, {2, 1, 0});
        worst = std::max(worst, std::abs(i1 - i2));
    }
    return worst;
}

/// Explicit kernel certificate of the shear-modulus linearization.
struct KernelCertificate {
    VectorField a;
    std::array<double, 3> base_point;
    ScalarField delta_mu_star;
    double residual = 0;
    double path_independence = 0;
    double max_condition = 0;
    index_t near_singular_points = 0;
};

inline KernelCertificate build_kernel_certificate(const SymTensorField& eps,
                                                  std::optional<std::array<double, 3>> base = {}) {
    KernelFieldResult kf = kernel_vector_field(eps);
    const std::array<double, 3> p = base.value_or(grid_center(eps.grid()));
    KernelCertificate cert{std::move(kf.a), p, ScalarField(eps.grid()), 0, 0,
                           kf.max_condition, kf.near_singular_points};
    cert.delta_mu_star = kernel_element(cert.a, p);
    cert.residual = verify_kernel(cert.delta_mu_star, eps);
    cert.path_independence = path_independence_defect(cert.a);
    return cert;
}

}  // namespace elastostab
