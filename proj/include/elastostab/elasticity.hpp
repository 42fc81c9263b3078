#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <optional>

#include "elastostab/fd.hpp"
#include "elastostab/grid.hpp"

namespace elastostab {

struct SolverError : Error {
    using Error::Error;
};

/// Reference material coefficients. mu and rho must be strictly positive,
/// lambda nonnegative.
struct MaterialParams {
    ScalarField lambda;
    ScalarField mu;
    ScalarField rho;

    const Grid& grid() const { return mu.grid(); }

    void validate() const {
        require(lambda.grid() == mu.grid() && mu.grid() == rho.grid(),
                "material parameter fields must share one grid");
        for (double v : mu.raw())
            if (!(v > 0)) throw Error("mu must be positive everywhere");
        for (double v : rho.raw())
            if (!(v > 0)) throw Error("rho must be positive everywhere");
        for (double v : lambda.raw())
            if (v < 0) throw Error("lambda must be nonnegative");
    }

    static MaterialParams constant(const Grid& g, double lam, double mu_, double rho_) {
        MaterialParams p{ScalarField(g, lam), ScalarField(g, mu_), ScalarField(g, rho_)};
        p.validate();
        return p;
    }
};

/// Symmetric gradient of a displacement field.
inline SymTensorField strain(const VectorField& u) {
    const Grid& g = u.grid();
    SymTensorField eps(g);
    std::vector<double> tmp(std::size_t(g.points()));
    for (index_t s = 0; s < g.snapshot_count(); ++s)
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                double* out = eps.component(sym_index(i, j), s);
                detail::diff_axis(g, u.component(j, s), tmp.data(), i);
                for (index_t p = 0; p < g.points(); ++p) out[p] += 0.5 * tmp[std::size_t(p)];
                detail::diff_axis(g, u.component(i, s), tmp.data(), j);
                for (index_t p = 0; p < g.points(); ++p) out[p] += 0.5 * tmp[std::size_t(p)];
            }
    return eps;
}

/// p = lambda * div(u).
inline ScalarField pressure(const ScalarField& lambda, const VectorField& u) {
    require(lambda.grid() == u.grid(), "pressure: grid mismatch");
    ScalarField p = divergence(u);
    for (index_t s = 0; s < p.grid().snapshot_count(); ++s)
        for (index_t q = 0; q < p.grid().points(); ++q)
            p.at(q, 0, s) *= lambda.at(q, 0, s);
    return p;
}

inline double det3_sym(const double* c) {
    // packed (11,22,33,12,13,23)
    return c[0] * (c[1] * c[2] - c[5] * c[5]) - c[3] * (c[3] * c[2] - c[5] * c[4]) +
           c[4] * (c[3] * c[5] - c[1] * c[4]);
}

/// Pointwise det(t2*eps1^D - t1*eps2^D) with t_k = tr(eps_k) and ^D the
/// deviatoric part; the two-measurement invertibility indicator.
inline ScalarField bal_condition(const SymTensorField& e1, const SymTensorField& e2) {
    require(e1.grid() == e2.grid(), "bal_condition: grid mismatch");
    const Grid& g = e1.grid();
    ScalarField out(g);
    for (index_t s = 0; s < g.snapshot_count(); ++s)
        for (index_t p = 0; p < g.points(); ++p) {
            double a[6], b[6], m[6];
            for (int c = 0; c < 6; ++c) {
                a[c] = e1.at(p, c, s);
                b[c] = e2.at(p, c, s);
            }
            const double t1 = a[0] + a[1] + a[2], t2 = b[0] + b[1] + b[2];
            for (int c = 0; c < 6; ++c) {
                const double dev_a = a[c] - (c < 3 ? t1 / 3.0 : 0.0);
                const double dev_b = b[c] - (c < 3 ? t2 / 3.0 : 0.0);
                m[c] = t2 * dev_a - t1 * dev_b;
            }
            out.at(p, 0, s) = det3_sym(m);
        }
    return out;
}

/// Reference state: material parameters plus one displacement field per
/// experiment, with cached strain, pressure and (when dynamic)
/// acceleration.
struct ReferenceState {
    MaterialParams params;
    std::vector<VectorField> displacements;
    std::vector<SymTensorField> strains;
    std::vector<ScalarField> pressures;
    std::vector<VectorField> accelerations;  // empty when quasi-static

    const Grid& grid() const { return params.grid(); }
    int measurements() const { return int(displacements.size()); }
    bool dynamic() const { return grid().dynamic(); }
};

inline ReferenceState make_reference_state(MaterialParams params,
                                           std::vector<VectorField> displacements) {
    params.validate();
    require(!displacements.empty(), "reference state needs at least one displacement");
    ReferenceState st{std::move(params), std::move(displacements), {}, {}, {}};
    for (const auto& u : st.displacements) {
        require(u.grid() == st.grid(), "displacement grid mismatch");
        st.strains.push_back(strain(u));
        st.pressures.push_back(pressure(st.params.lambda, u));
        if (st.grid().dynamic()) st.accelerations.push_back(second_time_derivative(u));
    }
    return st;
}

namespace detail {

/// Conservative 3-point stencil for d_a(c d_a u) at interior points; rows
/// at points lying on any face are left empty (they become Dirichlet rows).
inline void add_compact_term(std::vector<Triplet>& trips, const Grid& g,
                             const ScalarField& c, int axis, index_t row_off,
                             index_t col_off) {
    index_t stride = 1;
    for (int a = 0; a < axis; ++a) stride *= g.dims[a];
    const double ih2 = 1.0 / (g.spacing[axis] * g.spacing[axis]);
    for (index_t p = 0; p < g.points(); ++p) {
        if (g.on_boundary(p)) continue;
        const double cm = 0.5 * (c.at(p) + c.at(p - stride)) * ih2;
        const double cp = 0.5 * (c.at(p) + c.at(p + stride)) * ih2;
        trips.emplace_back(int(row_off + p), int(col_off + p - stride), cm);
        trips.emplace_back(int(row_off + p), int(col_off + p), -(cm + cp));
        trips.emplace_back(int(row_off + p), int(col_off + p + stride), cp);
    }
}

inline SparseMat interior_rows_only(const Grid& g, const SparseMat& M) {
    SparseMat out = M;
    for (int k = 0; k < out.outerSize(); ++k)
        for (SparseMat::InnerIterator it(out, k); it; ++it)
            if (g.on_boundary(index_t(it.row()))) it.valueRef() = 0.0;
    out.prune(0.0);
    return out;
}

}  // namespace detail

/// Discretization of u |-> grad(lambda div u) + 2 div(mu eps(u)) with
/// identity rows at boundary points (zero-displacement Dirichlet data).
/// Same-axis second-order terms use a conservative 3-point stencil, mixed
/// terms compose the first-derivative operators.
inline SparseMat assemble_quasistatic_matrix(const MaterialParams& params) {
    const Grid& g = params.grid();
    const index_t n = g.points();
    SparseMat D[3];
    for (int a = 0; a < 3; ++a) D[a] = fd_derivative_matrix(g, a);

    auto diag = [&](const ScalarField& c) {
        SparseMat M(static_cast<int>(n), static_cast<int>(n));
        std::vector<Triplet> t;
        t.reserve(std::size_t(n));
        for (index_t p = 0; p < n; ++p) t.emplace_back(int(p), int(p), c.at(p));
        M.setFromTriplets(t.begin(), t.end());
        return M;
    };
    const SparseMat Lam = diag(params.lambda), Mu = diag(params.mu);

    std::vector<Triplet> trips;
    auto add_block = [&](int bi, int bj, const SparseMat& M) {
        for (int r = 0; r < M.outerSize(); ++r)
            for (SparseMat::InnerIterator it(M, r); it; ++it)
                if (it.value() != 0.0)
                    trips.emplace_back(int(bi * n) + int(it.row()), int(bj * n) + int(it.col()),
                                       it.value());
    };

    for (int i = 0; i < 3; ++i) {
        // diagonal block: d_i(lambda d_i .) + sum_k d_k(mu d_k .) + d_i(mu d_i .)
        std::vector<Triplet> ct;
        detail::add_compact_term(ct, g, params.lambda, i, 0, 0);
        for (int k = 0; k < 3; ++k) detail::add_compact_term(ct, g, params.mu, k, 0, 0);
        detail::add_compact_term(ct, g, params.mu, i, 0, 0);
        for (auto& t : ct)
            trips.emplace_back(int(i * n) + t.row(), int(i * n) + t.col(), t.value());
        for (int j = 0; j < 3; ++j) {
            if (j == i) continue;
            SparseMat M = detail::interior_rows_only(g, SparseMat(D[i] * (Lam * D[j])));
            M += detail::interior_rows_only(g, SparseMat(D[j] * (Mu * D[i])));
            add_block(i, j, M);
        }
    }
    for (index_t p = 0; p < n; ++p)
        if (g.on_boundary(p))
            for (int c = 0; c < 3; ++c)
                trips.emplace_back(int(c * n + p), int(c * n + p), 1.0);

    SparseMat A(int(3 * n), int(3 * n));
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
}

struct QuasistaticOptions {
    double rtol = 1e-8;
    double solver_tol = 1e-11;
    index_t max_iter_per_dof = 20;
};

/// Solve grad(lambda div u) + 2 div(mu eps(u)) = F with u = 0 on the grid
/// boundary. Iterative solve (BiCGSTAB, diagonal preconditioning) of the
/// assembled sparse system; throws SolverError when the discrete residual
/// exceeds rtol * ||F||.
inline VectorField solve_quasistatic(const MaterialParams& params, const VectorField& F,
                                     const QuasistaticOptions& opts = {}) {
    const Grid& g = params.grid();
    params.validate();
    require(F.grid() == g, "solve_quasistatic: grid mismatch");
    for (int a = 0; a < 3; ++a)
        require(g.dims[a] <= 48, "solve_quasistatic: desk-scale grids only (dims <= 48)");
    require(g.snapshot_count() == 1, "solve_quasistatic is quasi-static (single snapshot)");

    const index_t n = g.points();
    SparseMat A = assemble_quasistatic_matrix(params);
    Eigen::VectorXd rhs(3 * n);
    for (int c = 0; c < 3; ++c)
        for (index_t p = 0; p < n; ++p)
            rhs[c * n + p] = g.on_boundary(p) ? 0.0 : F.at(p, c);

    Eigen::BiCGSTAB<SparseMat, Eigen::DiagonalPreconditioner<double>> solver;
    solver.setMaxIterations(Eigen::Index(opts.max_iter_per_dof * 3 * n));
    solver.setTolerance(opts.solver_tol);
    solver.compute(A);
    Eigen::VectorXd x = solver.solve(rhs);

    const double rhs_norm = rhs.norm();
    const double resid = (A * x - rhs).norm();
    if (rhs_norm > 0 && !(resid <= opts.rtol * rhs_norm))
        throw SolverError("quasistatic solver did not reach the residual tolerance (" +
                          std::to_string(resid / rhs_norm) + ")");
    if (!x.allFinite()) throw SolverError("quasistatic solver produced non-finite values");

    VectorField u(g);
    for (int c = 0; c < 3; ++c)
        for (index_t p = 0; p < n; ++p) u.at(p, c) = x[c * n + p];
    return u;
}

/// Convenience: simulate one experiment per force field and build the
/// reference state from the solved displacements.
inline ReferenceState simulate_reference_state(const MaterialParams& params,
                                               const std::vector<VectorField>& forces,
                                               const QuasistaticOptions& opts = {}) {
    std::vector<VectorField> us;
    us.reserve(forces.size());
    for (const auto& F : forces) us.push_back(solve_quasistatic(params, F, opts));
    return make_reference_state(params, std::move(us));
}

}  // namespace elastostab
