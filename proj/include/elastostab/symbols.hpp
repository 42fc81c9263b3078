#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "elastostab/elasticity.hpp"
#include "elastostab/fd.hpp"
#include "elastostab/grid.hpp"

namespace elastostab {

using cplx = std::complex<double>;

struct DNError : Error {
    using Error::Error;
};

/// One term of a matrix-operator entry: coeff(x,t) * d^alpha, where alpha
/// is a multi-index over (x1,x2,x3,t) and the coefficient is a constant
/// optionally times a scalar field.
struct DiffTerm {
    std::array<int, 4> alpha{0, 0, 0, 0};
    double constant = 1.0;
    std::shared_ptr<const ScalarField> coeff;

    int order() const { return alpha[0] + alpha[1] + alpha[2] + alpha[3]; }
    double coeff_at(index_t pt, index_t snap) const {
        return coeff ? constant * coeff->at(pt, 0, snap) : constant;
    }
};

/// Matrix differential operator with polynomial-in-d entries.
/// space_dim is 2 or 3 for spatial operators, 4 when the last variable is
/// time.
struct MatrixDiffOp {
    int rows = 0;
    int cols = 0;
    int space_dim = 3;
    std::vector<std::vector<std::vector<DiffTerm>>> entries;

    MatrixDiffOp() = default;
    MatrixDiffOp(int M, int m, int dim)
        : rows(M), cols(m), space_dim(dim),
          entries(std::size_t(M), std::vector<std::vector<DiffTerm>>(std::size_t(m))) {}

    std::vector<DiffTerm>& entry(int i, int j) { return entries[std::size_t(i)][std::size_t(j)]; }
    const std::vector<DiffTerm>& entry(int i, int j) const {
        return entries[std::size_t(i)][std::size_t(j)];
    }
    void add_term(int i, int j, DiffTerm t) { entry(i, j).push_back(std::move(t)); }

    bool entry_empty(int i, int j) const { return entry(i, j).empty(); }

    /// Order of the (i,j) entry; zero entries count as order 0 (the
    /// convention the worked example in the source analysis uses for
    /// boundary rows).
    int entry_order(int i, int j) const {
        int o = 0;
        for (const auto& t : entry(i, j)) o = std::max(o, t.order());
        return o;
    }
};

/// Douglis-Nirenberg numbers: s per row (all <= 0 after normalization),
/// t per column; sigma carries boundary-row numbers when present.
struct DNNumbers {
    std::vector<int> s;
    std::vector<int> t;
    std::vector<int> sigma;

    void validate_for(const MatrixDiffOp& op) const {
        require(int(s.size()) == op.rows && int(t.size()) == op.cols,
                "DN numbers do not match operator shape");
        for (int si : s)
            if (si > 0) throw DNError("DN row numbers must satisfy s_i <= 0");
        for (int i = 0; i < op.rows; ++i)
            for (int j = 0; j < op.cols; ++j) {
                const int bound = s[std::size_t(i)] + t[std::size_t(j)];
                if (op.entry_empty(i, j)) {
                    continue;
                }
                if (bound < 0) throw DNError("nonzero entry where s_i + t_j < 0");
                if (op.entry_order(i, j) > bound)
                    throw DNError("entry order exceeds s_i + t_j");
            }
    }
};

/// sigma_k = max_j (order(B_kj) - t_j), with zero entries participating at
/// order 0; a row with no terms at all is an error.
inline std::vector<int> compute_sigma(const MatrixDiffOp& B, const std::vector<int>& t) {
    require(int(t.size()) == B.cols, "compute_sigma: t size mismatch");
    std::vector<int> sigma(std::size_t(B.rows));
    for (int k = 0; k < B.rows; ++k) {
        bool any = false;
        for (int j = 0; j < B.cols; ++j) any = any || !B.entry_empty(k, j);
        if (!any) throw DNError("compute_sigma: empty boundary row " + std::to_string(k));
        int m = std::numeric_limits<int>::min();
        for (int j = 0; j < B.cols; ++j)
            m = std::max(m, B.entry_order(k, j) - t[std::size_t(j)]);
        sigma[std::size_t(k)] = m;
    }
    return sigma;
}

/// Keep only the terms of exact order s_i + t_j.
inline MatrixDiffOp principal_part(const MatrixDiffOp& L, const DNNumbers& dn) {
    dn.validate_for(L);
    MatrixDiffOp out(L.rows, L.cols, L.space_dim);
    for (int i = 0; i < L.rows; ++i)
        for (int j = 0; j < L.cols; ++j) {
            const int want = dn.s[std::size_t(i)] + dn.t[std::size_t(j)];
            for (const auto& term : L.entry(i, j))
                if (term.order() == want) out.add_term(i, j, term);
        }
    return out;
}

/// Principal part of a boundary operator for given column numbers t and
/// row numbers sigma.
inline MatrixDiffOp principal_part_boundary(const MatrixDiffOp& B, const std::vector<int>& t,
                                            const std::vector<int>& sigma) {
    require(int(t.size()) == B.cols && int(sigma.size()) == B.rows,
            "principal_part_boundary: size mismatch");
    MatrixDiffOp out(B.rows, B.cols, B.space_dim);
    for (int k = 0; k < B.rows; ++k)
        for (int j = 0; j < B.cols; ++j) {
            const int want = sigma[std::size_t(k)] + t[std::size_t(j)];
            for (const auto& term : B.entry(k, j))
                if (term.order() == want) out.add_term(k, j, term);
        }
    return out;
}

/// Evaluate entries at a generic complex covector W (each d/dx_k replaced
/// by W_k). The classical symbol uses W = i*xi.
inline Eigen::MatrixXcd eval_symbol_complex(const MatrixDiffOp& L, index_t pt, index_t snap,
                                            const std::array<cplx, 4>& W) {
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(L.rows, L.cols);
    for (int i = 0; i < L.rows; ++i)
        for (int j = 0; j < L.cols; ++j)
            for (const auto& term : L.entry(i, j)) {
                cplx v = term.coeff_at(pt, snap);
                for (int k = 0; k < 4; ++k)
                    for (int r = 0; r < term.alpha[std::size_t(k)]; ++r) v *= W[std::size_t(k)];
                M(i, j) += v;
            }
    return M;
}

/// Principal symbol L0(x, i*xi).
inline Eigen::MatrixXcd eval_symbol(const MatrixDiffOp& L0, index_t pt,
                                    const std::array<double, 4>& xi, index_t snap = 0) {
    double norm2 = 0;
    for (double c : xi) norm2 += c * c;
    require(norm2 > 0, "eval_symbol: xi must be nonzero");
    const cplx I(0, 1);
    return eval_symbol_complex(L0, pt, snap, {I * xi[0], I * xi[1], I * xi[2], I * xi[3]});
}

/// Deterministic Fibonacci-sphere directions on S^2 (or the unit circle in
/// 2D).
inline std::vector<std::array<double, 3>> fibonacci_directions(int n, int dim = 3) {
    std::vector<std::array<double, 3>> dirs;
    dirs.reserve(std::size_t(n));
    if (dim == 2) {
        for (int i = 0; i < n; ++i) {
            const double th = M_PI * double(i) / double(n);
            dirs.push_back({std::cos(th), std::sin(th), 0.0});
        }
        return dirs;
    }
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (double(i) + 0.5) / double(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = ga * double(i);
        dirs.push_back({r * std::cos(th), r * std::sin(th), z});
    }
    return dirs;
}

struct EllipticityOptions {
    int n_samples = 256;
    double rank_tol = 1e-9;
    /// extra covector candidates (e.g. strain eigenvectors per Prop-style
    /// constructions); spatial part only, time component taken as 0
    std::vector<std::array<double, 3>> candidates;
};

struct EllipticityResult {
    bool elliptic = true;
    std::vector<std::array<double, 4>> characteristic;
    double min_margin = std::numeric_limits<double>::infinity();  // smallest sv ratio seen
};

inline double rank_margin(const Eigen::MatrixXcd& M) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] == 0.0) return 0.0;
    return sv[sv.size() - 1] / sv[0];
}

/// Test rank L0(x, i*xi) = cols over a deterministic direction sample plus
/// caller-supplied analytic candidates. Returns the failing directions.
inline EllipticityResult ellipticity_test(const MatrixDiffOp& L0, index_t pt,
                                          const EllipticityOptions& opts = {},
                                          index_t snap = 0) {
    EllipticityResult res;
    std::vector<std::array<double, 4>> dirs;
    const int sdim = L0.space_dim;
    for (const auto& d : fibonacci_directions(opts.n_samples, sdim == 2 ? 2 : 3)) {
        if (sdim <= 3) {
            dirs.push_back({d[0], d[1], d[2], 0.0});
        } else {
            for (double x4 : {0.0, 1.0, -1.0}) {
                const double s = 1.0 / std::sqrt(1.0 + x4 * x4);
                dirs.push_back({s * d[0], s * d[1], s * d[2], s * x4});
            }
        }
    }
    if (sdim == 4) dirs.push_back({0, 0, 0, 1});
    for (const auto& c : opts.candidates) {
        const double n = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
        if (n > 0) dirs.push_back({c[0] / n, c[1] / n, c[2] / n, 0.0});
    }
    for (const auto& xi : dirs) {
        const double margin = rank_margin(eval_symbol(L0, pt, xi, snap));
        res.min_margin = std::min(res.min_margin, margin);
        if (margin < opts.rank_tol) {
            res.elliptic = false;
            res.characteristic.push_back(xi);
        }
    }
    return res;
}

/// Eigenvectors of the reference strain at a point; the analytic
/// characteristic-direction candidates for the shear-modulus linearization
/// family.
inline std::vector<std::array<double, 3>> strain_eigendirections(const SymTensorField& eps,
                                                                 index_t pt, index_t snap = 0) {
    Eigen::Matrix3d E;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) E(i, j) = eps.at(pt, sym_index(i, j), snap);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(E);
    std::vector<std::array<double, 3>> out;
    for (int k = 0; k < 3; ++k)
        out.push_back({es.eigenvectors()(0, k), es.eigenvectors()(1, k), es.eigenvectors()(2, k)});
    return out;
}

enum class OperatorKind { L_p, L_mu, L_rho, L_pmu, L_pmurho, L_lambda, helmholtz, maxwell, paper_example };

inline const char* to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::L_p: return "L_p";
        case OperatorKind::L_mu: return "L_mu";
        case OperatorKind::L_rho: return "L_rho";
        case OperatorKind::L_pmu: return "L_pmu";
        case OperatorKind::L_pmurho: return "L_pmurho";
        case OperatorKind::L_lambda: return "L_lambda";
        case OperatorKind::helmholtz: return "helmholtz";
        case OperatorKind::maxwell: return "maxwell";
        case OperatorKind::paper_example: return "paper_example";
    }
    return "?";
}

inline OperatorKind operator_kind_from(const std::string& s) {
    for (OperatorKind k :
         {OperatorKind::L_p, OperatorKind::L_mu, OperatorKind::L_rho, OperatorKind::L_pmu,
          OperatorKind::L_pmurho, OperatorKind::L_lambda, OperatorKind::helmholtz,
          OperatorKind::maxwell, OperatorKind::paper_example})
        if (s == to_string(k)) return k;
    throw Error("unknown operator kind: " + s);
}

struct BuiltOperator {
    MatrixDiffOp op;
    DNNumbers dn;
    std::vector<std::string> unknowns;
};

namespace detail {

inline std::shared_ptr<const ScalarField> field_ptr(ScalarField f) {
    return std::make_shared<const ScalarField>(std::move(f));
}

inline std::shared_ptr<const ScalarField> component_field(const VectorField& v, int c) {
    ScalarField f(v.grid());
    for (index_t s = 0; s < v.grid().snapshot_count(); ++s)
        for (index_t p = 0; p < v.grid().points(); ++p) f.at(p, 0, s) = v.at(p, c, s);
    return field_ptr(std::move(f));
}

inline std::array<int, 4> unit_alpha(int k) {
    std::array<int, 4> a{0, 0, 0, 0};
    a[std::size_t(k)] = 1;
    return a;
}

inline std::array<int, 4> two_alpha(int k, int l) {
    std::array<int, 4> a{0, 0, 0, 0};
    a[std::size_t(k)] += 1;
    a[std::size_t(l)] += 1;
    return a;
}

/// Fill the displacement block rows (i = 0..2) and the interior-data
/// identity rows for one measurement of the linearized elasticity family.
/// `col0` is the column of delta-u_1; rows `row0..row0+2` carry the PDE,
/// rows `row0+3..row0+5` the data equations.
inline void add_displacement_block(MatrixDiffOp& op, const ReferenceState& st, int meas,
                                   int row0, int col0, bool dynamic, bool with_lambda) {
    const auto& mu = st.params.mu;
    VectorField grad_mu = gradient(mu);
    // 2 div(mu eps(du)) acting on du_j, row i:
    //   j == i: sum_k mu d_k^2 + mu d_i^2 (+ first-order d(mu) terms)
    //   j != i: mu d_i d_j + (d_j mu) d_i
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const int col = col0 + j;
            if (j == i) {
                for (int k = 0; k < 3; ++k) {
                    DiffTerm t;
                    t.alpha = two_alpha(k, k);
                    t.constant = (k == i) ? 2.0 : 1.0;
                    t.coeff = field_ptr(mu);
                    op.add_term(i + row0, col, t);
                    DiffTerm t1;
                    t1.alpha = unit_alpha(k);
                    t1.constant = (k == i) ? 2.0 : 1.0;
                    t1.coeff = component_field(grad_mu, k);
                    op.add_term(i + row0, col, t1);
                }
                if (dynamic) {
                    DiffTerm tt;
                    tt.alpha = two_alpha(3, 3);
                    tt.constant = -1.0;
                    tt.coeff = field_ptr(st.params.rho);
                    op.add_term(i + row0, col, tt);
                }
            } else {
                DiffTerm t;
                t.alpha = two_alpha(i, j);
                t.coeff = field_ptr(mu);
                op.add_term(i + row0, col, t);
                DiffTerm t1;
                t1.alpha = unit_alpha(i);
                t1.coeff = component_field(grad_mu, j);
                op.add_term(i + row0, col, t1);
            }
        }
    }
    if (with_lambda) {
        // grad(lambda div du): row i, col j: lambda d_i d_j + (d_i lambda) d_j
        VectorField grad_lam = gradient(st.params.lambda);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                DiffTerm t;
                t.alpha = two_alpha(i, j);
                t.coeff = field_ptr(st.params.lambda);
                op.add_term(i + row0, col0 + j, t);
                DiffTerm t1;
                t1.alpha = unit_alpha(j);
                t1.coeff = component_field(grad_lam, i);
                op.add_term(i + row0, col0 + j, t1);
            }
    }
    for (int i = 0; i < 3; ++i) {
        DiffTerm one;
        op.add_term(row0 + 3 + i, col0 + i, one);
    }
    (void)meas;
}

/// delta-mu column: 2 div(dmu eps(u_k)) = sum_j 2 eps_ij d_j + 2 (div eps)_i.
inline void add_mu_column(MatrixDiffOp& op, const ReferenceState& st, int meas, int row0,
                          int col) {
    const SymTensorField& eps = st.strains[std::size_t(meas)];
    VectorField dive = tensor_divergence(eps);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            ScalarField c(eps.grid());
            for (index_t s = 0; s < eps.grid().snapshot_count(); ++s)
                for (index_t p = 0; p < eps.grid().points(); ++p)
                    c.at(p, 0, s) = eps.at(p, sym_index(i, j), s);
            DiffTerm t;
            t.alpha = unit_alpha(j);
            t.constant = 2.0;
            t.coeff = field_ptr(std::move(c));
            op.add_term(row0 + i, col, t);
        }
        DiffTerm t0;
        t0.constant = 2.0;
        t0.coeff = component_field(dive, i);
        op.add_term(row0 + i, col, t0);
    }
}

inline void add_p_column(MatrixDiffOp& op, int row0, int col) {
    for (int i = 0; i < 3; ++i) {
        DiffTerm t;
        t.alpha = unit_alpha(i);
        op.add_term(row0 + i, col, t);
    }
}

inline void add_rho_column(MatrixDiffOp& op, const ReferenceState& st, int meas, int row0,
                           int col) {
    require(st.dynamic(), "L_rho requires a dynamic reference state (>= 3 snapshots)");
    const VectorField& utt = st.accelerations[std::size_t(meas)];
    for (int i = 0; i < 3; ++i) {
        DiffTerm t;
        t.constant = -1.0;
        t.coeff = component_field(utt, i);
        op.add_term(row0 + i, col, t);
    }
}

inline void add_lambda_column(MatrixDiffOp& op, const ReferenceState& st, int meas, int row0,
                              int col) {
    // grad(dlambda div u): (div u) d_i + d_i(div u)
    const ScalarField divu = divergence(st.displacements[std::size_t(meas)]);
    VectorField grad_divu = gradient(divu);
    for (int i = 0; i < 3; ++i) {
        DiffTerm t;
        t.alpha = unit_alpha(i);
        t.coeff = field_ptr(divu);
        op.add_term(row0 + i, col, t);
        DiffTerm t0;
        t0.coeff = component_field(grad_divu, i);
        op.add_term(row0 + i, col, t0);
    }
}

inline MatrixDiffOp helmholtz_op() {
    // rows: curl (3), div (1); unknowns: u1,u2,u3
    MatrixDiffOp op(4, 3, 3);
    auto d = [](int k, double c) {
        DiffTerm t;
        t.alpha = unit_alpha(k);
        t.constant = c;
        return t;
    };
    // (curl u)_i = sum_jk levi(i,j,k) d_j u_k
    const int eps_lc[3][3][3] = {{{0, 0, 0}, {0, 0, 1}, {0, -1, 0}},
                                 {{0, 0, -1}, {0, 0, 0}, {1, 0, 0}},
                                 {{0, 1, 0}, {-1, 0, 0}, {0, 0, 0}}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                if (eps_lc[i][j][k] != 0) op.add_term(i, k, d(j, double(eps_lc[i][j][k])));
    for (int k = 0; k < 3; ++k) op.add_term(3, k, d(k, 1.0));
    return op;
}

inline MatrixDiffOp maxwell_op(double kappa1, double kappa2) {
    // unknowns (H, E); rows: curl H + k1 E (3), curl E - k2 H (3), div H, div E
    MatrixDiffOp op(8, 6, 3);
    auto d = [](int k, double c) {
        DiffTerm t;
        t.alpha = unit_alpha(k);
        t.constant = c;
        return t;
    };
    auto c0 = [](double c) {
        DiffTerm t;
        t.constant = c;
        return t;
    };
    const int eps_lc[3][3][3] = {{{0, 0, 0}, {0, 0, 1}, {0, -1, 0}},
                                 {{0, 0, -1}, {0, 0, 0}, {1, 0, 0}},
                                 {{0, 1, 0}, {-1, 0, 0}, {0, 0, 0}}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                if (eps_lc[i][j][k] != 0) {
                    op.add_term(i, k, d(j, double(eps_lc[i][j][k])));          // curl H rows
                    op.add_term(3 + i, 3 + k, d(j, double(eps_lc[i][j][k])));  // curl E rows
                }
    for (int i = 0; i < 3; ++i) {
        op.add_term(i, 3 + i, c0(kappa1));    // + k1 E
        op.add_term(3 + i, i, c0(-kappa2));   // - k2 H
    }
    for (int k = 0; k < 3; ++k) {
        op.add_term(6, k, d(k, 1.0));
        op.add_term(7, 3 + k, d(k, 1.0));
    }
    return op;
}

inline MatrixDiffOp paper_example_op() {
    // rows: u1 + Laplace u2; d_1 u1; d_2 u1  (2D)
    MatrixDiffOp op(3, 2, 2);
    DiffTerm one;
    op.add_term(0, 0, one);
    for (int k = 0; k < 2; ++k) {
        DiffTerm t;
        t.alpha = two_alpha(k, k);
        op.add_term(0, 1, t);
        DiffTerm d;
        d.alpha = unit_alpha(k);
        op.add_term(1 + k, 0, d);
    }
    return op;
}

}  // namespace detail

/// Alternative DN choice for the worked example: t=(1,3), s=(-1,0,0).
inline DNNumbers paper_example_dn_alt() { return DNNumbers{{-1, 0, 0}, {1, 3}, {}}; }

/// Build the operator of the given kind at a reference state, together
/// with the DN numbers used in the analysis. `measurement` selects the
/// experiment whose reference fields enter the coefficients.
inline BuiltOperator build_operator(OperatorKind kind, const ReferenceState& state,
                                    int measurement = 0) {
    const bool dyn = state.dynamic();
    switch (kind) {
        case OperatorKind::helmholtz: {
            BuiltOperator b{detail::helmholtz_op(), DNNumbers{{0, 0, 0, 0}, {1, 1, 1}, {}},
                            {"u1", "u2", "u3"}};
            return b;
        }
        case OperatorKind::maxwell: {
            BuiltOperator b{detail::maxwell_op(1.0, 1.0),
                            DNNumbers{{0, 0, 0, 0, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1}, {}},
                            {"H1", "H2", "H3", "E1", "E2", "E3"}};
            return b;
        }
        case OperatorKind::paper_example: {
            BuiltOperator b{detail::paper_example_op(), DNNumbers{{0, 0, 0}, {1, 2}, {}},
                            {"u1", "u2"}};
            return b;
        }
        default: break;
    }

    require(measurement >= 0 && measurement < state.measurements(),
            "build_operator: measurement index out of range");
    const int sdim = dyn ? 4 : 3;
    switch (kind) {
        case OperatorKind::L_p: {
            MatrixDiffOp op(6, 4, 3);
            detail::add_p_column(op, 0, 0);
            detail::add_displacement_block(op, state, measurement, 0, 1, false, false);
            return {std::move(op), DNNumbers{{0, 0, 0, -2, -2, -2}, {1, 2, 2, 2}, {}},
                    {"dp", "du1", "du2", "du3"}};
        }
        case OperatorKind::L_mu: {
            MatrixDiffOp op(6, 4, sdim);
            detail::add_mu_column(op, state, measurement, 0, 0);
            detail::add_displacement_block(op, state, measurement, 0, 1, dyn, false);
            return {std::move(op), DNNumbers{{0, 0, 0, -2, -2, -2}, {1, 2, 2, 2}, {}},
                    {"dmu", "du1", "du2", "du3"}};
        }
        case OperatorKind::L_rho: {
            MatrixDiffOp op(6, 4, 4);
            detail::add_rho_column(op, state, measurement, 0, 0);
            detail::add_displacement_block(op, state, measurement, 0, 1, true, false);
            return {std::move(op), DNNumbers{{0, 0, 0, -2, -2, -2}, {0, 2, 2, 2}, {}},
                    {"drho", "du1", "du2", "du3"}};
        }
        case OperatorKind::L_pmu: {
            MatrixDiffOp op(6, 5, sdim);
            detail::add_p_column(op, 0, 0);
            detail::add_mu_column(op, state, measurement, 0, 1);
            detail::add_displacement_block(op, state, measurement, 0, 2, dyn, false);
            return {std::move(op), DNNumbers{{0, 0, 0, -2, -2, -2}, {1, 1, 2, 2, 2}, {}},
                    {"dp", "dmu", "du1", "du2", "du3"}};
        }
        case OperatorKind::L_pmurho: {
            require(dyn, "L_pmurho requires a dynamic state (quasi-static collapses to L_pmu)");
            MatrixDiffOp op(6, 6, 4);
            detail::add_p_column(op, 0, 0);
            detail::add_mu_column(op, state, measurement, 0, 1);
            detail::add_rho_column(op, state, measurement, 0, 2);
            detail::add_displacement_block(op, state, measurement, 0, 3, true, false);
            return {std::move(op), DNNumbers{{0, 0, 0, -2, -2, -2}, {1, 1, 0, 2, 2, 2}, {}},
                    {"dp", "dmu", "drho", "du1", "du2", "du3"}};
        }
        case OperatorKind::L_lambda: {
            MatrixDiffOp op(6, 4, 3);
            detail::add_lambda_column(op, state, measurement, 0, 0);
            detail::add_displacement_block(op, state, measurement, 0, 1, false, true);
            return {std::move(op), DNNumbers{{0, 0, 0, -2, -2, -2}, {1, 2, 2, 2}, {}},
                    {"dlambda", "du1", "du2", "du3"}};
        }
        default: throw Error("unhandled operator kind");
    }
}

/// Stack r measurement blocks of a single-parameter kind (L_mu, L_rho or
/// L_lambda): the parameter column is shared, each measurement adds six
/// rows and three displacement columns.
inline BuiltOperator build_stacked_operator(OperatorKind kind, const ReferenceState& state,
                                            int r) {
    require(kind == OperatorKind::L_mu || kind == OperatorKind::L_rho ||
                kind == OperatorKind::L_lambda,
            "build_stacked_operator supports single-parameter kinds only");
    require(r >= 1 && r <= state.measurements(), "not enough measurements in state");
    const bool dyn = state.dynamic();
    const int sdim = (kind == OperatorKind::L_rho || dyn) ? 4 : 3;
    MatrixDiffOp op(6 * r, 1 + 3 * r, kind == OperatorKind::L_rho ? 4 : sdim);
    DNNumbers dn;
    dn.t.push_back(kind == OperatorKind::L_rho ? 0 : 1);
    for (int k = 0; k < r; ++k) {
        const int row0 = 6 * k, col0 = 1 + 3 * k;
        switch (kind) {
            case OperatorKind::L_mu: detail::add_mu_column(op, state, k, row0, 0); break;
            case OperatorKind::L_rho: detail::add_rho_column(op, state, k, row0, 0); break;
            default: detail::add_lambda_column(op, state, k, row0, 0); break;
        }
        detail::add_displacement_block(op, state, k, row0, col0,
                                       kind == OperatorKind::L_rho || dyn,
                                       kind == OperatorKind::L_lambda);
        for (int i = 0; i < 3; ++i) dn.s.push_back(0);
        for (int i = 0; i < 3; ++i) dn.s.push_back(-2);
        for (int i = 0; i < 3; ++i) dn.t.push_back(2);
    }
    BuiltOperator b{std::move(op), std::move(dn), {}};
    return b;
}

}  // namespace elastostab
