#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fstream>

#include "elastostab/elasticity.hpp"
#include "elastostab/fd.hpp"
#include "elastostab/symbols.hpp"

namespace elastostab {

/// Increments entering the linearized operators. Unused members stay
/// empty; du holds one field per measurement.
struct Increments {
    std::optional<ScalarField> dp;       // per-measurement pressure increments share one field
    std::vector<ScalarField> dp_per_meas;
    std::optional<ScalarField> dmu;
    std::optional<ScalarField> drho;
    std::optional<ScalarField> dlambda;
    std::vector<VectorField> du;
};

/// F_{p mu rho} for one measurement:
/// grad dp + 2 div(dmu eps(u)) + 2 div(mu eps(du)) - drho u_tt - rho du_tt.
/// Time terms require a dynamic state.
inline VectorField apply_F_pmurho(const ReferenceState& st, const ScalarField* dp,
                                  const ScalarField* dmu, const ScalarField* drho,
                                  const VectorField* du, int meas = 0) {
    const Grid& g = st.grid();
    VectorField out(g);
    if (dp) {
        require(dp->grid() == g, "apply_F_pmurho: dp grid mismatch");
        out += gradient(*dp);
    }
    if (dmu) {
        require(dmu->grid() == g, "apply_F_pmurho: dmu grid mismatch");
        VectorField t = tensor_divergence(scaled_by(st.strains[std::size_t(meas)], *dmu));
        t *= 2.0;
        out += t;
    }
    if (du) {
        require(du->grid() == g, "apply_F_pmurho: du grid mismatch");
        VectorField t = tensor_divergence(scaled_by(strain(*du), st.params.mu));
        t *= 2.0;
        out += t;
        if (g.dynamic()) {
            VectorField tt = second_time_derivative(*du);
            for (index_t s = 0; s < g.snapshot_count(); ++s)
                for (int c = 0; c < 3; ++c)
                    for (index_t p = 0; p < g.points(); ++p)
                        out.at(p, c, s) -= st.params.rho.at(p) * tt.at(p, c, s);
        }
    }
    if (drho) {
        require(g.dynamic(), "apply_F_pmurho: drho term requires a dynamic state");
        const VectorField& utt = st.accelerations[std::size_t(meas)];
        for (index_t s = 0; s < g.snapshot_count(); ++s)
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < g.points(); ++p)
                    out.at(p, c, s) -= drho->at(p) * utt.at(p, c, s);
    }
    return out;
}

/// One measurement block of the linearized operator: the PDE part and the
/// interior-data part (the increment itself).
struct AppliedBlock {
    VectorField pde;
    VectorField data;
};

/// Apply the restriction of L_{p mu rho} (or the lambda-form L_lambda) for
/// the given kind to the increments; returns one block per measurement.
inline std::vector<AppliedBlock> apply_L(OperatorKind kind, const ReferenceState& st,
                                         const Increments& inc) {
    const Grid& g = st.grid();
    const int r = int(inc.du.size());
    require(r >= 1 && r <= st.measurements(), "apply_L: measurement count mismatch");
    auto want = [&](bool cond, const char* what) {
        require(cond, std::string("apply_L: increments do not match kind: ") + what);
    };
    switch (kind) {
        case OperatorKind::L_p:
            want(bool(inc.dp) || !inc.dp_per_meas.empty(), "dp required");
            want(!inc.dmu && !inc.drho && !inc.dlambda, "only dp allowed");
            break;
        case OperatorKind::L_mu:
            want(bool(inc.dmu), "dmu required");
            want(!inc.dp && inc.dp_per_meas.empty() && !inc.drho && !inc.dlambda,
                 "only dmu allowed");
            break;
        case OperatorKind::L_rho:
            want(bool(inc.drho), "drho required");
            want(!inc.dp && inc.dp_per_meas.empty() && !inc.dmu && !inc.dlambda,
                 "only drho allowed");
            break;
        case OperatorKind::L_pmu:
            want(bool(inc.dp) || !inc.dp_per_meas.empty(), "dp required");
            want(bool(inc.dmu), "dmu required");
            want(!inc.drho && !inc.dlambda, "no drho/dlambda");
            break;
        case OperatorKind::L_pmurho:
            want(bool(inc.dp) || !inc.dp_per_meas.empty(), "dp required");
            want(bool(inc.dmu) && bool(inc.drho), "dmu and drho required");
            break;
        case OperatorKind::L_lambda:
            want(bool(inc.dlambda), "dlambda required");
            want(!inc.dp && inc.dp_per_meas.empty() && !inc.dmu && !inc.drho,
                 "only dlambda allowed");
            break;
        default: throw Error("apply_L: fixture kinds have no increment form");
    }

    std::vector<AppliedBlock> out;
    for (int k = 0; k < r; ++k) {
        const ScalarField* dp = nullptr;
        if (!inc.dp_per_meas.empty())
            dp = &inc.dp_per_meas[std::size_t(k)];
        else if (inc.dp)
            dp = &*inc.dp;
        const ScalarField* dmu = inc.dmu ? &*inc.dmu : nullptr;
        const ScalarField* drho = inc.drho ? &*inc.drho : nullptr;

        VectorField pde(g);
        if (kind == OperatorKind::L_lambda) {
            // grad(dlambda div u) + grad(lambda div du) + 2 div(mu eps(du))
            ScalarField t1 = divergence(st.displacements[std::size_t(k)]);
            for (index_t s = 0; s < g.snapshot_count(); ++s)
                for (index_t p = 0; p < g.points(); ++p)
                    t1.at(p, 0, s) *= inc.dlambda->at(p, 0, s);
            pde += gradient(t1);
            ScalarField t2 = divergence(inc.du[std::size_t(k)]);
            for (index_t s = 0; s < g.snapshot_count(); ++s)
                for (index_t p = 0; p < g.points(); ++p)
                    t2.at(p, 0, s) *= st.params.lambda.at(p, 0, s);
            pde += gradient(t2);
            pde += apply_F_pmurho(st, nullptr, nullptr, nullptr, &inc.du[std::size_t(k)], k);
        } else {
            pde = apply_F_pmurho(st, dp, dmu, drho, &inc.du[std::size_t(k)], k);
        }
        out.push_back({std::move(pde), inc.du[std::size_t(k)]});
    }
    return out;
}

/// Which parameter blocks a system kind carries.
struct KindTraits {
    bool has_p = false, has_mu = false, has_rho = false, has_lambda = false;
};

inline KindTraits kind_traits(OperatorKind k) {
    switch (k) {
        case OperatorKind::L_p: return {true, false, false, false};
        case OperatorKind::L_mu: return {false, true, false, false};
        case OperatorKind::L_rho: return {false, false, true, false};
        case OperatorKind::L_pmu: return {true, true, false, false};
        case OperatorKind::L_pmurho: return {true, true, true, false};
        case OperatorKind::L_lambda: return {false, false, false, true};
        default: throw Error("kind has no discrete system");
    }
}

enum class BoundaryOperator { B, B_prime };

/// Row/column layout of an assembled system. Parameters come first
/// (measurement-shared blocks, then per-measurement dp blocks), then the
/// displacement DOFs per measurement (snapshot-major, component-minor).
struct UnknownLayout {
    OperatorKind kind{};
    index_t n_points = 0;
    index_t n_snap = 1;
    int n_meas = 1;
    bool dynamic = false;
    std::vector<std::string> param_blocks;  // e.g. {"dmu"} or {"dp[0]","dp[1]"}

    index_t param_dofs() const { return index_t(param_blocks.size()) * n_points; }
    index_t du_dofs_per_meas() const { return 3 * n_points * n_snap; }
    index_t cols() const { return param_dofs() + index_t(n_meas) * du_dofs_per_meas(); }

    index_t param_offset(int block) const { return index_t(block) * n_points; }
    index_t du_offset(int meas, int comp, index_t snap = 0) const {
        return param_dofs() + index_t(meas) * du_dofs_per_meas() + (snap * 3 + comp) * n_points;
    }
};

struct RowLayout {
    index_t pde_rows = 0;       // per measurement
    index_t data_rows = 0;      // per measurement
    index_t boundary_rows = 0;  // total
    index_t total = 0;
};

/// Sparse realization of a stacked linearized system with interior-data
/// rows and boundary rows.
struct DiscreteLinearizedSystem {
    SparseMat matrix;
    UnknownLayout layout;
    RowLayout rows;
    double boundary_pde_weight = 1.0;

    index_t data_row(int meas, int comp, index_t pt, index_t snap = 0) const {
        const index_t per = rows.pde_rows + rows.data_rows;
        return index_t(meas) * per + rows.pde_rows + (snap * 3 + comp) * layout.n_points + pt;
    }
};

namespace detail {

inline void append_sparse_block(std::vector<Triplet>& trips, const SparseMat& M, index_t row0,
                                index_t col0, double scale = 1.0) {
    for (int k = 0; k < M.outerSize(); ++k)
        for (SparseMat::InnerIterator it(M, k); it; ++it)
            if (it.value() != 0.0)
                trips.emplace_back(int(row0 + it.row()), int(col0 + it.col()),
                                   scale * it.value());
}

inline SparseMat diag_matrix(const Grid& g, const ScalarField& c, index_t snap) {
    const index_t n = g.points();
    std::vector<Triplet> t;
    t.reserve(std::size_t(n));
    for (index_t p = 0; p < n; ++p) t.emplace_back(int(p), int(p), c.at(p, 0, snap));
    SparseMat M(static_cast<int>(n), static_cast<int>(n));
    M.setFromTriplets(t.begin(), t.end());
    return M;
}

inline SparseMat diag_component(const Grid& g, const VectorField& v, int comp, index_t snap) {
    const index_t n = g.points();
    std::vector<Triplet> t;
    t.reserve(std::size_t(n));
    for (index_t p = 0; p < n; ++p) t.emplace_back(int(p), int(p), v.at(p, comp, snap));
    SparseMat M(static_cast<int>(n), static_cast<int>(n));
    M.setFromTriplets(t.begin(), t.end());
    return M;
}

}  // namespace detail

struct AssembleOptions {
    /// Weight of the PDE rows at boundary grid points. Interior rows carry
    /// weight 1; the one-sided boundary rows are kept at their truncation
    /// order h^2 so that every parameter DOF stays coupled without letting
    /// boundary truncation error dominate a least-squares fit. Negative
    /// means "use h^2".
    double boundary_pde_weight = -1.0;
};

/// Assemble the discrete system A_kind for n_measurements experiments.
/// The matrix action reproduces apply_L row-for-row at interior points
/// (same stencils; boundary-point PDE rows are scaled, see
/// AssembleOptions); boundary rows enforce du = 0 on the spatial boundary,
/// and dynamic systems additionally pin the first snapshot and its time
/// derivative.
inline DiscreteLinearizedSystem assemble(OperatorKind kind, const ReferenceState& st,
                                         int n_measurements,
                                         BoundaryOperator bop = BoundaryOperator::B,
                                         const AssembleOptions& aopts = {}) {
    const Grid& g = st.grid();
    const KindTraits tr = kind_traits(kind);
    require(n_measurements >= 1 && n_measurements <= st.measurements(),
            "assemble: n_measurements exceeds state");
    const bool dyn = g.dynamic();
    if (tr.has_rho) require(dyn, "assemble: rho systems require a dynamic state");
    if (tr.has_p && dyn) throw Error("assemble: pressure systems are quasi-static here");
    if (tr.has_lambda && dyn) throw Error("assemble: lambda system is quasi-static here");

    UnknownLayout lay;
    lay.kind = kind;
    lay.n_points = g.points();
    lay.n_snap = g.snapshot_count();
    lay.n_meas = n_measurements;
    lay.dynamic = dyn;
    if (tr.has_mu) lay.param_blocks.push_back("dmu");
    if (tr.has_rho) lay.param_blocks.push_back("drho");
    if (tr.has_lambda) lay.param_blocks.push_back("dlambda");
    if (tr.has_p)
        for (int k = 0; k < n_measurements; ++k)
            lay.param_blocks.push_back("dp[" + std::to_string(k) + "]");

    const index_t n = g.points();
    const index_t S = lay.n_snap;

    // boundary rows: du on the spatial boundary for every snapshot, plus
    // two initial-condition row groups when dynamic, plus optional
    // parameter traces for B'
    std::vector<index_t> bpoints;
    for (index_t p = 0; p < n; ++p)
        if (g.on_boundary(p)) bpoints.push_back(p);

    RowLayout rows;
    rows.pde_rows = 3 * n * S;
    rows.data_rows = 3 * n * S;
    index_t brows = index_t(bpoints.size()) * 3 * S * n_measurements;
    if (dyn) brows += 2 * 3 * n * n_measurements;
    index_t prime_rows = 0;
    if (bop == BoundaryOperator::B_prime)
        prime_rows = index_t(lay.param_blocks.size()) * index_t(bpoints.size());
    rows.boundary_rows = brows + prime_rows;
    rows.total = index_t(n_measurements) * (rows.pde_rows + rows.data_rows) + rows.boundary_rows;

    SparseMat D[3];
    for (int a = 0; a < 3; ++a) D[a] = fd_derivative_matrix(g, a);

    std::vector<Triplet> trips;

    int mu_block = -1, rho_block = -1, lam_block = -1, p_block0 = -1;
    {
        int b = 0;
        if (tr.has_mu) mu_block = b++;
        if (tr.has_rho) rho_block = b++;
        if (tr.has_lambda) lam_block = b++;
        if (tr.has_p) p_block0 = b;
    }

    for (int k = 0; k < n_measurements; ++k) {
        const index_t meas_row0 = index_t(k) * (rows.pde_rows + rows.data_rows);
        for (index_t s = 0; s < S; ++s) {
            const index_t row_s0 = meas_row0 + s * 3 * n;
            // dp block: rows i get D_i dp
            if (tr.has_p) {
                const index_t col0 = lay.param_offset(p_block0 + k);
                for (int i = 0; i < 3; ++i)
                    detail::append_sparse_block(trips, D[i], row_s0 + i * n, col0);
            }
            // dmu block: rows i get 2 sum_j D_j diag(eps_ij)
            if (tr.has_mu) {
                const index_t col0 = lay.param_offset(mu_block);
                const auto& eps = st.strains[std::size_t(k)];
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        ScalarField c(g);
                        for (index_t p = 0; p < n; ++p)
                            c.at(p) = eps.at(p, sym_index(i, j), s);
                        SparseMat M = D[j] * detail::diag_matrix(g, c, 0);
                        detail::append_sparse_block(trips, M, row_s0 + i * n, col0, 2.0);
                    }
            }
            // drho block: rows i get -diag(u_tt_i)
            if (tr.has_rho) {
                const index_t col0 = lay.param_offset(rho_block);
                const auto& utt = st.accelerations[std::size_t(k)];
                for (int i = 0; i < 3; ++i)
                    detail::append_sparse_block(
                        trips, detail::diag_component(g, utt, i, s), row_s0 + i * n, col0, -1.0);
            }
            // dlambda block: rows i get D_i diag(div u)
            if (tr.has_lambda) {
                const index_t col0 = lay.param_offset(lam_block);
                ScalarField divu = divergence(st.displacements[std::size_t(k)]);
                SparseMat divu_diag = detail::diag_matrix(g, divu, s);
                for (int i = 0; i < 3; ++i) {
                    SparseMat M = D[i] * divu_diag;
                    detail::append_sparse_block(trips, M, row_s0 + i * n, col0);
                }
            }
            // du blocks: rows i, cols j: D_j mu D_i + delta_ij sum_q D_q mu D_q
            // (plus grad(lambda div du) for the lambda-form system)
            {
                SparseMat Mu = detail::diag_matrix(g, st.params.mu, 0);
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        SparseMat M = D[j] * (Mu * D[i]);
                        if (i == j)
                            for (int q = 0; q < 3; ++q) M += D[q] * (Mu * D[q]);
                        if (tr.has_lambda) {
                            SparseMat Lam = detail::diag_matrix(g, st.params.lambda, 0);
                            M += D[i] * (Lam * D[j]);
                        }
                        detail::append_sparse_block(trips, M, row_s0 + i * n,
                                                    lay.du_offset(k, j, s));
                    }
            }
            // dynamic: -rho du_tt couples snapshots
            if (dyn) {
                for (int i = 0; i < 3; ++i)
                    detail::utt_stencil(s, S, g.dt, [&](index_t ds, double w) {
                        for (index_t p = 0; p < n; ++p)
                            trips.emplace_back(int(row_s0 + i * n + p),
                                               int(lay.du_offset(k, i, s + ds) + p),
                                               -w * st.params.rho.at(p));
                    });
            }
            // interior-data identity rows
            for (int i = 0; i < 3; ++i)
                for (index_t p = 0; p < n; ++p)
                    trips.emplace_back(int(meas_row0 + rows.pde_rows + (s * 3 + i) * n + p),
                                       int(lay.du_offset(k, i, s) + p), 1.0);
        }
    }

    // boundary rows
    index_t brow = index_t(n_measurements) * (rows.pde_rows + rows.data_rows);
    for (int k = 0; k < n_measurements; ++k) {
        for (index_t s = 0; s < S; ++s)
            for (int i = 0; i < 3; ++i)
                for (index_t bp : bpoints)
                    trips.emplace_back(int(brow++), int(lay.du_offset(k, i, s) + bp), 1.0);
        if (dyn) {
            for (int i = 0; i < 3; ++i)
                for (index_t p = 0; p < n; ++p)
                    trips.emplace_back(int(brow++), int(lay.du_offset(k, i, 0) + p), 1.0);
            // one-sided first time derivative at snapshot 0
            const double idt = 1.0 / (2.0 * g.dt);
            for (int i = 0; i < 3; ++i)
                for (index_t p = 0; p < n; ++p) {
                    trips.emplace_back(int(brow), int(lay.du_offset(k, i, 0) + p), -3.0 * idt);
                    trips.emplace_back(int(brow), int(lay.du_offset(k, i, 1) + p), 4.0 * idt);
                    trips.emplace_back(int(brow), int(lay.du_offset(k, i, 2) + p), -idt);
                    ++brow;
                }
        }
    }
    if (bop == BoundaryOperator::B_prime)
        for (std::size_t b = 0; b < lay.param_blocks.size(); ++b)
            for (index_t bp : bpoints)
                trips.emplace_back(int(brow++), int(lay.param_offset(int(b)) + bp), 1.0);

    DiscreteLinearizedSystem sys;
    sys.layout = lay;
    sys.rows = rows;
    sys.matrix = SparseMat(int(rows.total), int(lay.cols()));
    sys.matrix.setFromTriplets(trips.begin(), trips.end());

    double wb = aopts.boundary_pde_weight;
    if (wb < 0) {
        const double hmax = std::max({g.spacing[0], g.spacing[1], g.spacing[2]});
        wb = hmax * hmax;
    }
    sys.boundary_pde_weight = wb;
    if (wb != 1.0) {
        const index_t per_meas = rows.pde_rows + rows.data_rows;
        for (int c = 0; c < sys.matrix.outerSize(); ++c)
            for (SparseMat::InnerIterator it(sys.matrix, c); it; ++it) {
                const index_t r = index_t(it.row());
                const index_t within = r % per_meas;
                if (r < index_t(n_measurements) * per_meas && within < rows.pde_rows &&
                    g.on_boundary(within % n))
                    it.valueRef() *= wb;
            }
    }
    sys.matrix.makeCompressed();
    return sys;
}

/// Interior source produced by a parameter increment in the linearized
/// PDE of the given kind, measurement k (the right-hand side the
/// displacement response solves against, with opposite sign).
inline VectorField linearized_source(OperatorKind kind, const ReferenceState& st,
                                     const ScalarField& dparam, int k) {
    VectorField source(st.grid());
    if (kind == OperatorKind::L_mu) {
        source = tensor_divergence(scaled_by(st.strains[std::size_t(k)], dparam));
        source *= 2.0;
    } else if (kind == OperatorKind::L_p) {
        source = gradient(dparam);
    } else if (kind == OperatorKind::L_lambda) {
        ScalarField t = divergence(st.displacements[std::size_t(k)]);
        for (index_t p = 0; p < st.grid().points(); ++p) t.at(p) *= dparam.at(p);
        source = gradient(t);
    } else {
        throw Error("linearized_source: quasi-static kinds only");
    }
    return source;
}

/// Quasi-static displacement-response solver in the same composed-stencil
/// discretization the assembled systems use: interior rows
/// 2 div(mu eps(du)) (+ grad(lambda div du) when with_lambda), Dirichlet
/// rows on the boundary. Produces interior data that is exactly
/// consistent with assemble()'s interior PDE rows. The factorization is
/// reused across solves.
class LinearizedResponseSolver {
  public:
    explicit LinearizedResponseSolver(const ReferenceState& st, bool with_lambda = false)
        : grid_(st.grid()) {
        const Grid& g = grid_;
        require(g.snapshot_count() == 1, "LinearizedResponseSolver is quasi-static");
        const index_t n = g.points();
        SparseMat D[3];
        for (int a = 0; a < 3; ++a) D[a] = fd_derivative_matrix(g, a);
        SparseMat Mu = detail::diag_matrix(g, st.params.mu, 0);
        SparseMat Lam = detail::diag_matrix(g, st.params.lambda, 0);

        std::vector<Triplet> trips;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                SparseMat M = D[j] * (Mu * D[i]);
                if (i == j)
                    for (int q = 0; q < 3; ++q) M += D[q] * (Mu * D[q]);
                if (with_lambda) M += D[i] * (Lam * D[j]);
                for (int k = 0; k < M.outerSize(); ++k)
                    for (SparseMat::InnerIterator it(M, k); it; ++it)
                        if (!g.on_boundary(index_t(it.row())) && it.value() != 0.0)
                            trips.emplace_back(int(index_t(i) * n) + int(it.row()),
                                               int(index_t(j) * n) + int(it.col()), it.value());
            }
        for (index_t p = 0; p < n; ++p)
            if (g.on_boundary(p))
                for (int c = 0; c < 3; ++c)
                    trips.emplace_back(int(index_t(c) * n + p), int(index_t(c) * n + p), 1.0);
        matrix_ = SparseMat(static_cast<int>(3 * n), static_cast<int>(3 * n));
        matrix_.setFromTriplets(trips.begin(), trips.end());
        matrix_.makeCompressed();
        lu_.compute(matrix_);
        if (lu_.info() != Eigen::Success)
            throw SolverError("LinearizedResponseSolver: factorization failed");
    }

    VectorField solve(const VectorField& source) const {
        const Grid& g = grid_;
        require(source.grid() == g, "LinearizedResponseSolver: grid mismatch");
        const index_t n = g.points();
        Eigen::VectorXd b(3 * n);
        for (int c = 0; c < 3; ++c)
            for (index_t p = 0; p < n; ++p)
                b[index_t(c) * n + p] = g.on_boundary(p) ? 0.0 : source.at(p, c);
        Eigen::VectorXd x = lu_.solve(b);
        if (!x.allFinite() || (b.norm() > 0 && (matrix_ * x - b).norm() > 1e-8 * b.norm()))
            throw SolverError("LinearizedResponseSolver: solve failed");
        VectorField du(g);
        for (int c = 0; c < 3; ++c)
            for (index_t p = 0; p < n; ++p) du.at(p, c) = x[index_t(c) * n + p];
        return du;
    }

    /// Solve with the transposed operator (the adjoint of solve() without
    /// the interior masking of the source).
    VectorField solve_transpose(const VectorField& rhs) const {
        const Grid& g = grid_;
        require(rhs.grid() == g, "LinearizedResponseSolver: grid mismatch");
        const index_t n = g.points();
        Eigen::VectorXd b(3 * n);
        for (int c = 0; c < 3; ++c)
            for (index_t p = 0; p < n; ++p) b[index_t(c) * n + p] = rhs.at(p, c);
        Eigen::VectorXd x = lu_.transpose().solve(b);
        if (!x.allFinite()) throw SolverError("LinearizedResponseSolver: transpose solve failed");
        VectorField out(g);
        for (int c = 0; c < 3; ++c)
            for (index_t p = 0; p < n; ++p) out.at(p, c) = x[index_t(c) * n + p];
        return out;
    }

  private:
    Grid grid_;
    SparseMat matrix_;
    mutable Eigen::SparseLU<SparseMat> lu_;  // transpose() is non-const in Eigen 3.4
};

inline VectorField solve_linearized_response(const ReferenceState& st,
                                             const VectorField& source,
                                             bool with_lambda = false) {
    return LinearizedResponseSolver(st, with_lambda).solve(source);
}

/// Right-hand side for interior data deltaK (one field per measurement):
/// data rows carry the measured increments, all other rows are zero.
inline Eigen::VectorXd make_rhs(const DiscreteLinearizedSystem& sys,
                                const std::vector<VectorField>& dK) {
    require(int(dK.size()) == sys.layout.n_meas, "make_rhs: measurement count mismatch");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.matrix.rows());
    const index_t n = sys.layout.n_points;
    for (int k = 0; k < sys.layout.n_meas; ++k)
        for (index_t s = 0; s < sys.layout.n_snap; ++s)
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p)
                    rhs[sys.data_row(k, c, p, s)] = dK[std::size_t(k)].at(p, c, s);
    return rhs;
}

/// Coordinate-format text export (row col value per line).
inline void write_coordinate_format(const SparseMat& M, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << M.rows() << " " << M.cols() << " " << M.nonZeros() << "\n";
    char buf[96];
    for (int k = 0; k < M.outerSize(); ++k)
        for (SparseMat::InnerIterator it(M, k); it; ++it) {
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", long(it.row()), long(it.col()),
                          it.value());
            out << buf;
        }
}

}  // namespace elastostab
