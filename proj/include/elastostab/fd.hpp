#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "elastostab/grid.hpp"

namespace elastostab {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

namespace detail {

/// First derivative of one component block along a spatial axis.
/// Second-order central stencil inside, one-sided second-order at the faces.
inline void diff_axis(const Grid& g, const double* in, double* out, int axis) {
    const index_t n = g.dims[axis];
    const double h = g.spacing[axis];
    index_t stride = 1;
    for (int a = 0; a < axis; ++a) stride *= g.dims[a];

    // iterate over all 1D lines along `axis`
    int o0 = (axis + 1) % 3, o1 = (axis + 2) % 3;
    index_t s0 = 1, s1 = 1;
    for (int a = 0; a < o0; ++a) s0 *= g.dims[a];
    for (int a = 0; a < o1; ++a) s1 *= g.dims[a];

    for (index_t j1 = 0; j1 < g.dims[o1]; ++j1) {
        for (index_t j0 = 0; j0 < g.dims[o0]; ++j0) {
            const index_t base = j0 * s0 + j1 * s1;
            out[base] = (-3.0 * in[base] + 4.0 * in[base + stride] - in[base + 2 * stride]) /
                        (2.0 * h);
            for (index_t i = 1; i + 1 < n; ++i) {
                const index_t p = base + i * stride;
                out[p] = (in[p + stride] - in[p - stride]) / (2.0 * h);
            }
            const index_t e = base + (n - 1) * stride;
            out[e] = (3.0 * in[e] - 4.0 * in[e - stride] + in[e - 2 * stride]) / (2.0 * h);
        }
    }
}

/// Stencil weights of the first derivative at 1D index i (line length n).
/// Calls f(offset_in_points, weight). Matches diff_axis exactly.
template <typename F>
void diff_stencil(index_t i, index_t n, double h, F&& f) {
    if (i == 0) {
        f(0, -3.0 / (2 * h));
        f(1, 4.0 / (2 * h));
        f(2, -1.0 / (2 * h));
    } else if (i == n - 1) {
        f(0, 3.0 / (2 * h));
        f(-1, -4.0 / (2 * h));
        f(-2, 1.0 / (2 * h));
    } else {
        f(-1, -1.0 / (2 * h));
        f(1, 1.0 / (2 * h));
    }
}

}  // namespace detail

/// Sparse matrix of the first-derivative operator along a spatial axis,
/// acting on a single component block (points x points). The stencils are
/// identical to the ones gradient/divergence apply.
inline SparseMat fd_derivative_matrix(const Grid& g, int axis) {
    const index_t n = g.points();
    index_t stride = 1;
    for (int a = 0; a < axis; ++a) stride *= g.dims[a];
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(3 * n));
    for (index_t p = 0; p < n; ++p) {
        const index_t i = g.unflat(p)[axis];
        detail::diff_stencil(i, g.dims[axis], g.spacing[axis], [&](index_t off, double w) {
            trips.emplace_back(int(p), int(p + off * stride), w);
        });
    }
    SparseMat D(static_cast<int>(n), static_cast<int>(n));
    D.setFromTriplets(trips.begin(), trips.end());
    D.makeCompressed();
    return D;
}

/// Gradient of a scalar field, per snapshot.
inline VectorField gradient(const ScalarField& f) {
    const Grid& g = f.grid();
    VectorField out(g);
    for (index_t s = 0; s < g.snapshot_count(); ++s)
        for (int a = 0; a < 3; ++a)
            detail::diff_axis(g, f.component(0, s), out.component(a, s), a);
    return out;
}

/// Divergence of a vector field.
inline ScalarField divergence(const VectorField& v) {
    const Grid& g = v.grid();
    ScalarField out(g);
    std::vector<double> tmp(std::size_t(g.points()));
    for (index_t s = 0; s < g.snapshot_count(); ++s) {
        for (int a = 0; a < 3; ++a) {
            detail::diff_axis(g, v.component(a, s), tmp.data(), a);
            double* o = out.component(0, s);
            for (index_t p = 0; p < g.points(); ++p) o[p] += tmp[std::size_t(p)];
        }
    }
    return out;
}

/// Column-wise divergence of a symmetric tensor field: out_i = div(T e_i).
inline VectorField tensor_divergence(const SymTensorField& T) {
    const Grid& g = T.grid();
    VectorField out(g);
    std::vector<double> tmp(std::size_t(g.points()));
    for (index_t s = 0; s < g.snapshot_count(); ++s) {
        for (int i = 0; i < 3; ++i) {
            double* o = out.component(i, s);
            for (int j = 0; j < 3; ++j) {
                detail::diff_axis(g, T.component(sym_index(i, j), s), tmp.data(), j);
                for (index_t p = 0; p < g.points(); ++p) o[p] += tmp[std::size_t(p)];
            }
        }
    }
    return out;
}

namespace detail {

/// Weights of the discrete second time derivative at snapshot s.
/// Central inside; 3-point one-sided at the first/last snapshot (also exact
/// for quadratics in t).
template <typename F>
void utt_stencil(index_t s, index_t ns, double dt, F&& f) {
    const double w = 1.0 / (dt * dt);
    if (s == 0) {
        f(0, w);
        f(1, -2 * w);
        f(2, w);
    } else if (s == ns - 1) {
        f(0, w);
        f(-1, -2 * w);
        f(-2, w);
    } else {
        f(-1, w);
        f(0, -2 * w);
        f(1, w);
    }
}

}  // namespace detail

/// Discrete second time derivative of a snapshot series.
template <int NC>
FieldT<NC> second_time_derivative(const FieldT<NC>& u) {
    const Grid& g = u.grid();
    if (g.snapshots < 3) throw Error("second_time_derivative needs >= 3 snapshots");
    FieldT<NC> out(g);
    const index_t n = g.points();
    for (index_t s = 0; s < g.snapshots; ++s)
        for (int c = 0; c < NC; ++c) {
            double* o = out.component(c, s);
            detail::utt_stencil(s, g.snapshots, g.dt, [&](index_t ds, double w) {
                const double* in = u.component(c, s + ds);
                for (index_t p = 0; p < n; ++p) o[p] += w * in[p];
            });
        }
    return out;
}

namespace detail {

template <int NC>
double sq_l2(const FieldT<NC>& f) {
    double acc = 0;
    for (double v : f.raw()) acc += v * v;
    return acc;
}

}  // namespace detail

/// Discrete Sobolev norm of integer order 0..2: cell-volume-weighted root
/// of the sum of squares of the field and of all mixed spatial FD
/// derivatives up to the order. Snapshots are summed with weight dt when
/// the field is dynamic.
template <int NC>
double sobolev_norm(const FieldT<NC>& f, int order) {
    if (order < 0 || order > 2) throw Error("sobolev_norm supports orders 0..2 only");
    const Grid& g = f.grid();
    const index_t n = g.points();
    double acc = detail::sq_l2(f);
    std::vector<double> d1(static_cast<std::size_t>(n));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (index_t s = 0; s < g.snapshot_count(); ++s) {
        for (int c = 0; c < NC; ++c) {
            const double* base = f.component(c, s);
            for (int a = 0; a < 3 && order >= 1; ++a) {
                detail::diff_axis(g, base, d1.data(), a);
                for (double v : d1) acc += v * v;
                // mixed second derivatives D_b D_a with b >= a, each once
                for (int b = a; b < 3 && order >= 2; ++b) {
                    detail::diff_axis(g, d1.data(), d2.data(), b);
                    for (double v : d2) acc += v * v;
                }
            }
        }
    }
    const double tw = g.dynamic() ? g.dt : 1.0;
    return std::sqrt(acc * g.cell_volume() * tw);
}

/// Trilinear interpolation of one component at physical coordinates.
template <int NC>
double interpolate(const FieldT<NC>& f, const std::array<double, 3>& x, int comp = 0,
                   index_t snap = 0) {
    const Grid& g = f.grid();
    if (!g.contains(x)) throw Error("interpolation point outside grid");
    index_t idx[3];
    double w[3];
    for (int a = 0; a < 3; ++a) {
        double t = (x[a] - g.origin[a]) / g.spacing[a];
        index_t i = index_t(std::floor(t));
        i = std::clamp(i, index_t(0), g.dims[a] - 2);
        idx[a] = i;
        w[a] = std::clamp(t - double(i), 0.0, 1.0);
    }
    double acc = 0;
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk) {
                double ww = (di ? w[0] : 1 - w[0]) * (dj ? w[1] : 1 - w[1]) *
                            (dk ? w[2] : 1 - w[2]);
                acc += ww * f.at3(idx[0] + di, idx[1] + dj, idx[2] + dk, comp, snap);
            }
    return acc;
}

/// Line integral of the vector field along the axis-aligned staircase path
/// from p to x (one segment per axis, in the given axis order), trapezoid
/// rule with trilinearly interpolated values.
inline double path_integral(const VectorField& a, std::array<double, 3> p,
                            std::array<double, 3> x, std::array<int, 3> axis_order = {0, 1, 2},
                            index_t snap = 0) {
    const Grid& g = a.grid();
    if (!g.contains(p) || !g.contains(x)) throw Error("path_integral endpoint outside grid");
    std::array<double, 3> cur = p;
    double total = 0;
    for (int axis : axis_order) {
        const double delta = x[axis] - cur[axis];
        if (delta == 0.0) continue;
        // nearest-integer subdivision keeps the nodes on grid planes when
        // the endpoints are grid points (no cell-count jitter)
        const index_t nsub =
            std::max<index_t>(1, index_t(std::llround(std::abs(delta) / g.spacing[axis])));
        const double step = delta / double(nsub);
        std::array<double, 3> q = cur;
        double prev = interpolate(a, q, axis, snap);
        for (index_t i = 1; i <= nsub; ++i) {
            q[axis] = cur[axis] + step * double(i);
            const double val = interpolate(a, q, axis, snap);
            total += 0.5 * (prev + val) * step;
            prev = val;
        }
        cur[axis] = x[axis];
    }
    return total;
}

}  // namespace elastostab
