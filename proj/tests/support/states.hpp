#pragma once

// Manufactured reference states shared by the unit and acceptance suites.

#include <cmath>

#include "elastostab/analytic.hpp"
#include "elastostab/elasticity.hpp"

namespace elastostab::testing {

/// Quadratic displacement whose strain is exactly (b + a.x) * C for a
/// constant symmetric C; second-order stencils reproduce it to roundoff,
/// so 1/(b + a.x) is a machine-exact discrete kernel element.
struct AffineStrainState {
    std::array<double, 3> a{0.3, 0.2, 0.1};
    double b = 1.0;
    std::array<std::array<double, 3>, 3> C{{{2.0, 0.3, 0.2}, {0.3, 1.5, 0.1}, {0.2, 0.1, 1.8}}};

    double g(double x1, double x2, double x3) const {
        return b + a[0] * x1 + a[1] * x2 + a[2] * x3;
    }

    VectorField displacement(const Grid& grid) const {
        return sample<3>(grid, {[this](double x1, double x2, double x3, double) {
                                    return u_comp(0, x1, x2, x3);
                                },
                                [this](double x1, double x2, double x3, double) {
                                    return u_comp(1, x1, x2, x3);
                                },
                                [this](double x1, double x2, double x3, double) {
                                    return u_comp(2, x1, x2, x3);
                                }});
    }

    double u_comp(int i, double x1, double x2, double x3) const {
        const double x[3] = {x1, x2, x3};
        double lin = 0;
        for (int j = 0; j < 3; ++j) lin += C[std::size_t(i)][std::size_t(j)] * x[j];
        double quad = 0;
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                const double q = 0.5 * (a[std::size_t(k)] * C[std::size_t(i)][std::size_t(j)] +
                                        a[std::size_t(j)] * C[std::size_t(i)][std::size_t(k)] -
                                        a[std::size_t(i)] * C[std::size_t(j)][std::size_t(k)]);
                quad += q * x[j] * x[k];
            }
        return b * lin + quad;
    }
};

/// A second independent quadratic state for two-measurement experiments.
inline AffineStrainState second_affine_state() {
    AffineStrainState s;
    s.a = {-0.1, 0.25, 0.15};
    s.b = 1.2;
    s.C = {{{1.4, -0.2, 0.1}, {-0.2, 2.1, 0.3}, {0.1, 0.3, 1.6}}};
    return s;
}

/// Smooth non-polynomial displacement with everywhere nonsingular strain
/// (a small smooth shear on top of the identity map).
inline VectorField smooth_nonsingular_displacement(const Grid& g, double amp = 0.1) {
    return sample<3>(g, {[amp](double x1, double x2, double, double) {
                             (void)x1;
                             return x1 + amp * std::sin(M_PI * x2);
                         },
                         [amp](double, double x2, double x3, double) {
                             return x2 + amp * std::sin(M_PI * x3);
                         },
                         [amp](double x1, double, double x3, double) {
                             return x3 + amp * std::sin(M_PI * x1);
                         }});
}

/// Strain diag(1, 1, x3 - 1/2): singular exactly on the mid plane.
inline VectorField singular_plane_displacement(const Grid& g) {
    return sample<3>(g, {[](double x1, double, double, double) { return x1; },
                         [](double, double x2, double, double) { return x2; },
                         [](double, double, double x3, double) {
                             return 0.5 * (x3 - 0.5) * (x3 - 0.5);
                         }});
}

/// Dynamic snapshot series u(x,t) = cos(w t) * (x3 - 1/2) * c; the
/// acceleration vanishes exactly on the mid plane.
inline VectorField oscillating_displacement(const Grid& g, double omega = 2.0) {
    require(g.dynamic(), "needs a dynamic grid");
    return sample<3>(g, {[omega](double, double, double x3, double t) {
                             return std::cos(omega * t) * (x3 - 0.5);
                         },
                         [omega](double, double, double x3, double t) {
                             return 0.5 * std::cos(omega * t) * (x3 - 0.5);
                         },
                         [](double, double, double, double) { return 0.0; }});
}

/// Manufactured solution of the quasi-static operator with variable mu:
/// u_i = v_i sin(pi x1) sin(pi x2) sin(pi x3), mu = 1 + mu_amp sin(pi x1),
/// lambda constant. force() is the analytic right-hand side.
struct ManufacturedQuasistatic {
    std::array<double, 3> v{1.0, -0.5, 0.75};
    double lambda = 0.8;
    double mu_amp = 0.5;

    double mu(double x1) const { return 1.0 + mu_amp * std::sin(M_PI * x1); }
    double dmu(double x1) const { return mu_amp * M_PI * std::cos(M_PI * x1); }

    MaterialParams params(const Grid& g) const {
        MaterialParams p{ScalarField(g, lambda),
                         sample_scalar(g, [this](double x1, double, double, double) {
                             return mu(x1);
                         }),
                         ScalarField(g, 1.0)};
        return p;
    }

    VectorField displacement(const Grid& g) const {
        return sample<3>(g, {[this](double x1, double x2, double x3, double) {
                                 return v[0] * P(x1, x2, x3);
                             },
                             [this](double x1, double x2, double x3, double) {
                                 return v[1] * P(x1, x2, x3);
                             },
                             [this](double x1, double x2, double x3, double) {
                                 return v[2] * P(x1, x2, x3);
                             }});
    }

    VectorField force(const Grid& g) const {
        return sample<3>(g, {[this](double x1, double x2, double x3, double) {
                                 return F_comp(0, x1, x2, x3);
                             },
                             [this](double x1, double x2, double x3, double) {
                                 return F_comp(1, x1, x2, x3);
                             },
                             [this](double x1, double x2, double x3, double) {
                                 return F_comp(2, x1, x2, x3);
                             }});
    }

  private:
    static double P(double x1, double x2, double x3) {
        return std::sin(M_PI * x1) * std::sin(M_PI * x2) * std::sin(M_PI * x3);
    }
    // dP[i] = partial_i P, ddP[i][j] = partial_i partial_j P
    static void derivs(double x1, double x2, double x3, double dP[3], double ddP[3][3]) {
        const double s1 = std::sin(M_PI * x1), c1 = std::cos(M_PI * x1);
        const double s2 = std::sin(M_PI * x2), c2 = std::cos(M_PI * x2);
        const double s3 = std::sin(M_PI * x3), c3 = std::cos(M_PI * x3);
        const double pi = M_PI, pi2 = M_PI * M_PI;
        dP[0] = pi * c1 * s2 * s3;
        dP[1] = pi * s1 * c2 * s3;
        dP[2] = pi * s1 * s2 * c3;
        ddP[0][0] = -pi2 * s1 * s2 * s3;
        ddP[1][1] = -pi2 * s1 * s2 * s3;
        ddP[2][2] = -pi2 * s1 * s2 * s3;
        ddP[0][1] = ddP[1][0] = pi2 * c1 * c2 * s3;
        ddP[0][2] = ddP[2][0] = pi2 * c1 * s2 * c3;
        ddP[1][2] = ddP[2][1] = pi2 * s1 * c2 * c3;
    }

    double F_comp(int i, double x1, double x2, double x3) const {
        double dP[3], ddP[3][3];
        derivs(x1, x2, x3, dP, ddP);
        // d_i div u = sum_j v_j ddP[i][j]; Lap u_i = v_i * (-3 pi^2 P)
        double did = 0;
        for (int j = 0; j < 3; ++j) did += v[std::size_t(j)] * ddP[i][j];
        const double lap = -3.0 * M_PI * M_PI * v[std::size_t(i)] * P(x1, x2, x3);
        // eps_i1 = (v_1 dP[i] + v_i dP[0]) / 2
        const double eps_i1 = 0.5 * (v[0] * dP[i] + v[std::size_t(i)] * dP[0]);
        return (lambda + mu(x1)) * did + mu(x1) * lap + 2.0 * dmu(x1) * eps_i1;
    }
};

/// Strain field m(x)^{-1} Id given directly (not derived from a
/// displacement); m = exp(x1) gives kernel field a = (1,0,0).
inline SymTensorField inverse_scalar_identity_strain(const Grid& g,
                                                     const SpaceTimeFn& m) {
    SymTensorField eps(g);
    for (index_t p = 0; p < g.points(); ++p) {
        auto x = g.point(p);
        const double val = 1.0 / m(x[0], x[1], x[2], 0.0);
        eps.at(p, 0) = val;
        eps.at(p, 1) = val;
        eps.at(p, 2) = val;
    }
    return eps;
}

}  // namespace elastostab::testing
