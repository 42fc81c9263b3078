#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <random>

#include "elastostab/diagnostics.hpp"
#include "elastostab/kernel.hpp"
#include "elastostab/linop.hpp"

namespace elastostab {

struct SizeLimitError : Error {
    using Error::Error;
};

/// Smooth band-limited random scalar field: the lowest `modes` Fourier
/// modes per axis with seeded Gaussian coefficients, normalized to unit
/// max amplitude.
inline ScalarField random_band_limited(const Grid& g, std::uint64_t seed, int modes = 4) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    struct Mode {
        int k[3];
        double amp, phase[3];
    };
    std::vector<Mode> ms;
    for (int k1 = 0; k1 < modes; ++k1)
        for (int k2 = 0; k2 < modes; ++k2)
            for (int k3 = 0; k3 < modes; ++k3) {
                Mode m{{k1, k2, k3}, gauss(rng), {0, 0, 0}};
                for (int a = 0; a < 3; ++a) m.phase[a] = gauss(rng);
                ms.push_back(m);
            }
    ScalarField f(g);
    std::array<double, 3> extent;
    for (int a = 0; a < 3; ++a) extent[std::size_t(a)] = g.spacing[a] * double(g.dims[a] - 1);
    for (index_t p = 0; p < g.points(); ++p) {
        auto x = g.point(p);
        double acc = 0;
        for (const auto& m : ms) {
            double v = m.amp;
            for (int a = 0; a < 3; ++a)
                v *= std::cos(M_PI * double(m.k[a]) * (x[std::size_t(a)] - g.origin[a]) /
                                  extent[std::size_t(a)] +
                              m.phase[a]);
            acc += v;
        }
        f.at(p) = acc;
    }
    const double m = f.max_abs();
    if (m > 0)
        for (auto& v : f.raw()) v /= m;
    return f;
}

struct ReconstructionResult {
    Increments increments;
    double data_residual = 0;
    double reg_weight = 0;
    int iterations = 0;
    std::optional<double> rel_error;  // vs ground truth when supplied
};

struct ReconstructOptions {
    /// reduced-CG stopping: relative residual of the parameter-block
    /// normal equations
    double cg_tol = 1e-9;
    index_t cg_max_iterations = 600;
    /// relative diagonal shift stabilizing the direct normal-equation
    /// factorization (dynamic path) when the system has an exact kernel
    /// (e.g. the constant pressure mode); selects a representative
    double shift_rel = 1e-12;
};

namespace detail {

/// First-order smoothing rows on the parameter block (gradient stencils
/// per parameter DOF), zero on the displacement block.
inline SparseMat param_smoothing_matrix(const DiscreteLinearizedSystem& sys, const Grid& g) {
    const index_t np = sys.layout.param_dofs();
    const index_t n = g.points();
    SparseMat D[3];
    for (int a = 0; a < 3; ++a) D[a] = fd_derivative_matrix(g, a);
    std::vector<Triplet> trips;
    for (index_t b = 0; b < index_t(sys.layout.param_blocks.size()); ++b)
        for (int a = 0; a < 3; ++a)
            for (int k = 0; k < D[a].outerSize(); ++k)
                for (SparseMat::InnerIterator it(D[a], k); it; ++it)
                    trips.emplace_back(int((b * 3 + a) * n + index_t(it.row())),
                                       int(b * n + index_t(it.col())), it.value());
    SparseMat R(int(3 * np), int(sys.matrix.cols()));
    R.setFromTriplets(trips.begin(), trips.end());
    R.makeCompressed();
    return R;
}

/// Same smoothing rows, but as an operator on the parameter block alone.
inline SparseMat param_smoothing_matrix_reduced(const DiscreteLinearizedSystem& sys,
                                                const Grid& g) {
    const index_t np = sys.layout.param_dofs();
    const index_t n = g.points();
    SparseMat D[3];
    for (int a = 0; a < 3; ++a) D[a] = fd_derivative_matrix(g, a);
    std::vector<Triplet> trips;
    for (index_t b = 0; b < index_t(sys.layout.param_blocks.size()); ++b)
        for (int a = 0; a < 3; ++a)
            for (int k = 0; k < D[a].outerSize(); ++k)
                for (SparseMat::InnerIterator it(D[a], k); it; ++it)
                    trips.emplace_back(int((b * 3 + a) * n + index_t(it.row())),
                                       int(b * n + index_t(it.col())), it.value());
    SparseMat R(static_cast<int>(3 * np), static_cast<int>(np));
    R.setFromTriplets(trips.begin(), trips.end());
    R.makeCompressed();
    return R;
}

inline SparseMat stack_rows(const SparseMat& A, const SparseMat& B) {
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(A.nonZeros() + B.nonZeros()));
    for (int k = 0; k < A.outerSize(); ++k)
        for (SparseMat::InnerIterator it(A, k); it; ++it)
            trips.emplace_back(int(it.row()), int(it.col()), it.value());
    for (int k = 0; k < B.outerSize(); ++k)
        for (SparseMat::InnerIterator it(B, k); it; ++it)
            trips.emplace_back(int(A.rows() + it.row()), int(it.col()), it.value());
    SparseMat S(int(A.rows() + B.rows()), int(A.cols()));
    S.setFromTriplets(trips.begin(), trips.end());
    S.makeCompressed();
    return S;
}

inline void check_param_columns(const DiscreteLinearizedSystem& sys) {
    const index_t np = sys.layout.param_dofs();
    std::vector<double> colnorm(std::size_t(np), 0.0);
    for (int k = 0; k < sys.matrix.outerSize(); ++k)
        for (SparseMat::InnerIterator it(sys.matrix, k); it; ++it)
            if (it.col() < np) colnorm[std::size_t(it.col())] += it.value() * it.value();
    for (double c : colnorm)
        if (c == 0.0)
            throw Error("assembled system has zero parameter columns "
                        "(reference state degenerate for this kind)");
}

}  // namespace detail

/// Regularized least-squares reconstruction
/// min ||A w - rhs(dK)||^2 + reg^2 ||D w_param||^2.
/// Quasi-static kinds are solved in reduced form: the displacement block
/// is eliminated through the interior PDE rows (one shared factorization),
/// and conjugate gradients run on the parameter-block normal equations.
/// On PDE-consistent data this reaches the same minimizer modulo kernel;
/// the reported data_residual is always evaluated on the full assembled
/// system. Small dynamic systems fall back to a direct normal-equation
/// factorization.
inline ReconstructionResult reconstruct(OperatorKind kind, const ReferenceState& st,
                                        const std::vector<VectorField>& dK, double reg_weight,
                                        const ReconstructOptions& opts = {}) {
    require(reg_weight >= 0, "reconstruct: reg_weight must be nonnegative");
    const int n_meas = int(dK.size());
    DiscreteLinearizedSystem sys = assemble(kind, st, n_meas);
    detail::check_param_columns(sys);
    const Eigen::VectorXd rhs = make_rhs(sys, dK);
    const Grid& g = st.grid();
    const index_t n = g.points();
    const KindTraits tr = kind_traits(kind);

    Eigen::VectorXd w;
    int iterations = 0;

    if (!st.dynamic()) {
        // ---- reduced form over the parameter block ----
        const index_t np = sys.layout.param_dofs();
        const LinearizedResponseSolver solver(st, tr.has_lambda);

        // per-measurement parameter-to-source operator S_k (3n x np)
        std::vector<SparseMat> S;
        {
            SparseMat D[3];
            for (int a = 0; a < 3; ++a) D[a] = fd_derivative_matrix(g, a);
            for (int k = 0; k < n_meas; ++k) {
                std::vector<Triplet> trips;
                auto add = [&](const SparseMat& M, index_t row0, index_t col0, double sc) {
                    for (int q = 0; q < M.outerSize(); ++q)
                        for (SparseMat::InnerIterator it(M, q); it; ++it)
                            if (it.value() != 0.0)
                                trips.emplace_back(int(row0 + it.row()), int(col0 + it.col()),
                                                   sc * it.value());
                };
                int block = 0;
                if (tr.has_mu) {
                    const auto& eps = st.strains[std::size_t(k)];
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            ScalarField c(g);
                            for (index_t p = 0; p < n; ++p) c.at(p) = eps.at(p, sym_index(i, j));
                            add(SparseMat(D[j] * detail::diag_matrix(g, c, 0)), i * n,
                                sys.layout.param_offset(block), 2.0);
                        }
                    ++block;
                }
                if (tr.has_lambda) {
                    ScalarField divu = divergence(st.displacements[std::size_t(k)]);
                    SparseMat dd = detail::diag_matrix(g, divu, 0);
                    for (int i = 0; i < 3; ++i)
                        add(SparseMat(D[i] * dd), i * n, sys.layout.param_offset(block), 1.0);
                    ++block;
                }
                if (tr.has_p) {
                    for (int i = 0; i < 3; ++i)
                        add(D[i], i * n, sys.layout.param_offset(block + k), 1.0);
                }
                SparseMat Sk(static_cast<int>(3 * n), static_cast<int>(np));
                Sk.setFromTriplets(trips.begin(), trips.end());
                Sk.makeCompressed();
                S.push_back(std::move(Sk));
            }
        }

        auto mask_interior = [&](Eigen::VectorXd v) {
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p)
                    if (g.on_boundary(p)) v[index_t(c) * n + p] = 0.0;
            return v;
        };
        auto to_field = [&](const Eigen::VectorXd& v) {
            VectorField f(g);
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p) f.at(p, c) = v[index_t(c) * n + p];
            return f;
        };
        auto to_vec = [&](const VectorField& f) {
            Eigen::VectorXd v(3 * n);
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p) v[index_t(c) * n + p] = f.at(p, c);
            return v;
        };

        // G_k x = -solve(S_k x); adjoint via the transposed factorization
        auto apply_G = [&](int k, const Eigen::VectorXd& x) {
            VectorField src = to_field(mask_interior(S[std::size_t(k)] * x));
            src *= -1.0;
            return to_vec(solver.solve(src));
        };
        auto apply_Gt = [&](int k, const Eigen::VectorXd& r) {
            VectorField rf = to_field(r);
            VectorField y = solver.solve_transpose(rf);
            Eigen::VectorXd v = mask_interior(to_vec(y));
            return Eigen::VectorXd(-(S[std::size_t(k)].transpose() * v));
        };

        SparseMat R = detail::param_smoothing_matrix_reduced(sys, g);
        SparseMat Rt = R.transpose();

        auto normal_apply = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(np);
            for (int k = 0; k < n_meas; ++k) acc += apply_Gt(k, apply_G(k, x));
            if (reg_weight > 0) acc += (reg_weight * reg_weight) * (Rt * (R * x));
            return acc;
        };

        Eigen::VectorXd b = Eigen::VectorXd::Zero(np);
        for (int k = 0; k < n_meas; ++k) {
            Eigen::VectorXd dk(3 * n);
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p)
                    dk[index_t(c) * n + p] = dK[std::size_t(k)].at(p, c);
            b += apply_Gt(k, dk);
        }

        // plain CG on the reduced normal equations; the right-hand side is
        // orthogonal to ker(G), so the iterates stay in its complement
        Eigen::VectorXd x = Eigen::VectorXd::Zero(np);
        Eigen::VectorXd r = b;
        Eigen::VectorXd p = r;
        const double b2 = b.squaredNorm();
        double r2 = r.squaredNorm();
        const double tol2 = opts.cg_tol * opts.cg_tol * std::max(b2, 1e-300);
        int it = 0;
        for (; it < opts.cg_max_iterations && r2 > tol2; ++it) {
            Eigen::VectorXd Ap = normal_apply(p);
            const double pAp = p.dot(Ap);
            if (!(pAp > 0)) break;
            const double alpha = r2 / pAp;
            x += alpha * p;
            r -= alpha * Ap;
            const double r2_new = r.squaredNorm();
            p = r + (r2_new / r2) * p;
            r2 = r2_new;
        }
        iterations = it;
        if (!x.allFinite()) throw SolverError("reconstruct: reduced CG diverged");

        // reassemble the full unknown vector: parameters + responses
        w = Eigen::VectorXd::Zero(sys.layout.cols());
        w.head(np) = x;
        for (int k = 0; k < n_meas; ++k) {
            Eigen::VectorXd du = apply_G(k, x);
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p)
                    w[sys.layout.du_offset(k, c, 0) + p] = du[index_t(c) * n + p];
        }
    } else {
        // ---- small dynamic systems: direct normal equations ----
        SparseMat At = sys.matrix.transpose();
        SparseMat N = At * sys.matrix;
        if (reg_weight > 0) {
            SparseMat R = detail::param_smoothing_matrix(sys, g);
            SparseMat Rt = R.transpose();
            N += SparseMat((reg_weight * reg_weight) * (Rt * R));
        }
        double diag_scale = 0;
        for (index_t i = 0; i < index_t(N.rows()); ++i)
            diag_scale = std::max(diag_scale, N.coeff(int(i), int(i)));
        for (index_t i = 0; i < index_t(N.rows()); ++i)
            N.coeffRef(int(i), int(i)) += opts.shift_rel * diag_scale;
        Eigen::SimplicialLDLT<SparseMat> ldlt(N);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("reconstruct: normal-equation factorization failed");
        w = ldlt.solve(At * rhs);
        w += ldlt.solve(At * (rhs - sys.matrix * w));
        iterations = 1;
        if (!w.allFinite()) throw SolverError("reconstruct: solver diverged");
    }

    ReconstructionResult res;
    res.reg_weight = reg_weight;
    res.iterations = iterations;
    res.data_residual = (sys.matrix * w - rhs).norm();

    auto param_field = [&](int block) {
        ScalarField f(g);
        for (index_t p = 0; p < n; ++p) f.at(p) = w[sys.layout.param_offset(block) + p];
        return f;
    };
    int b_i = 0;
    if (tr.has_mu) res.increments.dmu = param_field(b_i++);
    if (tr.has_rho) res.increments.drho = param_field(b_i++);
    if (tr.has_lambda) res.increments.dlambda = param_field(b_i++);
    if (tr.has_p)
        for (int k = 0; k < sys.layout.n_meas; ++k)
            res.increments.dp_per_meas.push_back(param_field(b_i++));
    for (int k = 0; k < sys.layout.n_meas; ++k) {
        VectorField du(g);
        for (index_t s = 0; s < sys.layout.n_snap; ++s)
            for (int c = 0; c < 3; ++c)
                for (index_t p = 0; p < n; ++p)
                    du.at(p, c, s) = w[sys.layout.du_offset(k, c, s) + p];
        res.increments.du.push_back(std::move(du));
    }
    return res;
}

struct NullspaceProbe {
    std::vector<double> singular_values;          // ascending
    std::vector<Eigen::VectorXd> param_vectors;   // parameter-block restriction
    std::vector<Eigen::VectorXd> full_vectors;
    double sigma_max = 0;
    int kernel_dim = 0;  // count below 1e-6 * sigma_max
};

/// k smallest singular pairs of the assembled system via the sparse normal
/// matrix: power iteration for the top, shifted LDLT inverse iteration
/// plus Rayleigh-Ritz for the bottom. Deterministic for a fixed seed.
inline NullspaceProbe nullspace_probe(const DiscreteLinearizedSystem& sys, int k,
                                      std::uint64_t seed = 12345) {
    const index_t ncols = sys.matrix.cols();
    if (ncols > 30000)
        throw SizeLimitError("nullspace_probe: system too large (" + std::to_string(ncols) +
                             " > 30000 DOFs)");
    require(k >= 1 && index_t(k) < ncols, "nullspace_probe: bad k");

    const SparseMat& A = sys.matrix;
    SparseMat At = A.transpose();
    SparseMat S = At * A;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;

    // largest eigenvalue of S by power iteration
    Eigen::VectorXd v(ncols);
    for (index_t i = 0; i < ncols; ++i) v[i] = gauss(rng);
    v.normalize();
    double lmax = 0;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd w = S * v;
        lmax = v.dot(w);
        const double n = w.norm();
        if (n == 0) break;
        w /= n;
        if ((w - v).norm() < 1e-12) {
            v = w;
            break;
        }
        v = w;
    }
    NullspaceProbe probe;
    probe.sigma_max = std::sqrt(std::max(lmax, 0.0));

    // shifted factorization keeps the (possibly exactly singular) normal
    // matrix positive definite
    const double tau = std::max(lmax, 1.0) * 1e-12;
    SparseMat Sshift = S;
    for (index_t i = 0; i < ncols; ++i) Sshift.coeffRef(int(i), int(i)) += tau;
    Eigen::SimplicialLDLT<SparseMat> ldlt(Sshift);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("nullspace_probe: factorization of the normal matrix failed");

    const int block = std::min<int>(k + 2, int(ncols));
    Eigen::MatrixXd X(ncols, block);
    for (index_t i = 0; i < ncols; ++i)
        for (int j = 0; j < block; ++j) X(i, j) = gauss(rng);
    auto orthonormalize = [&](Eigen::MatrixXd& Y) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
        Y = qr.householderQ() * Eigen::MatrixXd::Identity(Y.rows(), Y.cols());
    };
    orthonormalize(X);
    for (int it = 0; it < 40; ++it) {
        Eigen::MatrixXd Y = ldlt.solve(X);
        orthonormalize(Y);
        X = Y;
    }
    // Rayleigh-Ritz on the converged subspace
    Eigen::MatrixXd SX = S * X;
    Eigen::MatrixXd H = X.transpose() * SX;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    Eigen::MatrixXd V = X * es.eigenvectors();

    const index_t np = sys.layout.param_dofs();
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd vec = V.col(j).normalized();
        const double sv = (A * vec).norm();
        probe.singular_values.push_back(sv);
        probe.full_vectors.push_back(vec);
        probe.param_vectors.push_back(vec.head(np));
    }
    // ascending by the recomputed singular values
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return probe.singular_values[std::size_t(a)] < probe.singular_values[std::size_t(b)];
    });
    NullspaceProbe sorted;
    sorted.sigma_max = probe.sigma_max;
    for (int idx : order) {
        sorted.singular_values.push_back(probe.singular_values[std::size_t(idx)]);
        sorted.param_vectors.push_back(probe.param_vectors[std::size_t(idx)]);
        sorted.full_vectors.push_back(probe.full_vectors[std::size_t(idx)]);
    }
    for (double sv : sorted.singular_values)
        if (sv < 1e-6 * sorted.sigma_max) ++sorted.kernel_dim;
    return sorted;
}

/// L2-project the component along `dir` out of f.
inline ScalarField project_out(const ScalarField& f, const ScalarField& dir) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < f.raw().size(); ++i) {
        num += f.raw()[i] * dir.raw()[i];
        den += dir.raw()[i] * dir.raw()[i];
    }
    ScalarField out = f;
    if (den > 0)
        for (std::size_t i = 0; i < out.raw().size(); ++i)
            out.raw()[i] -= (num / den) * dir.raw()[i];
    return out;
}

struct StabilityStats {
    std::vector<double> ratios;   // per-trial
    double max_ratio = 0;         // max over the individual trials
    double median_ratio = 0;
    /// empirical sup of the ratio over the span of the trial increments
    /// (generalized Rayleigh quotient of the two Gram matrices; the
    /// response map is linear, so the span of responses is exact)
    double span_sup = 0;
};

struct StabilityOptions {
    std::uint64_t seed = 7;
    bool require_ellipticity = true;  // the singular-state experiments disable this
    double condition_threshold = 1e-8;
    /// relative response-Gram eigenvalue cutoff for the span sup
    double span_truncation = 1e-8;
};

namespace detail {

/// All spatial FD derivatives up to order 2 of every component, flattened
/// for fast inner products (the Sobolev-2 Gram is then a plain dot).
template <int NC>
std::vector<double> sobolev2_bundle(const FieldT<NC>& f) {
    const Grid& g = f.grid();
    const std::size_t n = std::size_t(g.points());
    std::vector<double> out;
    out.reserve(n * std::size_t(NC) * 10);
    std::vector<double> d1(n), d2(n);
    for (int c = 0; c < NC; ++c) {
        const double* base = f.component(c);
        out.insert(out.end(), base, base + n);
        for (int a = 0; a < 3; ++a) {
            detail::diff_axis(g, base, d1.data(), a);
            out.insert(out.end(), d1.begin(), d1.end());
            for (int b = a; b < 3; ++b) {
                detail::diff_axis(g, d1.data(), d2.data(), b);
                out.insert(out.end(), d2.begin(), d2.end());
            }
        }
    }
    return out;
}

inline std::vector<double> sobolev1_bundle(const ScalarField& f) {
    const Grid& g = f.grid();
    const std::size_t n = std::size_t(g.points());
    std::vector<double> out;
    out.reserve(n * 4);
    std::vector<double> d1(n);
    const double* base = f.component(0);
    out.insert(out.end(), base, base + n);
    for (int a = 0; a < 3; ++a) {
        detail::diff_axis(g, base, d1.data(), a);
        out.insert(out.end(), d1.begin(), d1.end());
    }
    return out;
}

inline double bundle_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace detail

/// Empirical stability ratios ||dparam|| / sum_k ||du_k|| for random
/// band-limited parameter increments, the displacement response solved
/// from the linearized quasi-static PDE and the known kernel projected
/// out. Norm orders follow the DN numbers (parameter order 1;
/// displacements order 2). Besides the per-trial max/median, span_sup
/// estimates the sup of the ratio over the whole span of the trials.
inline StabilityStats stability_ratio(OperatorKind kind, const ReferenceState& st, int n_trials,
                                      const StabilityOptions& opts = {}) {
    require(kind == OperatorKind::L_mu || kind == OperatorKind::L_p ||
                kind == OperatorKind::L_lambda,
            "stability_ratio supports the quasi-static kinds L_mu, L_p, L_lambda");
    require(!st.dynamic(), "stability_ratio is quasi-static");

    DiagnosticsReport rep = condition_maps(st, opts.condition_threshold);
    if (opts.require_ellipticity) {
        const char* cname = kind == OperatorKind::L_mu ? "mu_det_strain"
                            : kind == OperatorKind::L_lambda ? "lambda_div_u" : "p_none";
        const auto& cond = rep.condition(cname);
        if (cond.available && cond.failing > 0)
            throw Error(std::string("stability_ratio: ellipticity condition fails at ") +
                        std::to_string(cond.failing) + " points");
    }

    StabilityStats stats;
    if (n_trials <= 0) return stats;

    // kernel direction to project out (when a formula exists)
    std::optional<ScalarField> kernel_dir;
    if (kind == OperatorKind::L_mu) {
        bool nonsingular = rep.condition("mu_det_strain").failing == 0;
        if (nonsingular)
            kernel_dir = kernel_element(kernel_vector_field(st.strains[0]).a,
                                        grid_center(st.grid()));
    } else if (kind == OperatorKind::L_p) {
        kernel_dir = ScalarField(st.grid(), 1.0);
    }

    const int r = st.measurements();
    const LinearizedResponseSolver solver(st, kind == OperatorKind::L_lambda);
    std::vector<std::vector<double>> param_bundles, response_bundles;
    for (int trial = 0; trial < n_trials; ++trial) {
        ScalarField dparam = random_band_limited(st.grid(), opts.seed + 1000 * index_t(trial));
        ScalarField projected = kernel_dir ? project_out(dparam, *kernel_dir) : dparam;

        double du_norm_sum = 0;
        std::vector<double> resp_bundle;
        for (int k = 0; k < r; ++k) {
            VectorField source = linearized_source(kind, st, dparam, k);
            source *= -1.0;
            const VectorField du = solver.solve(source);
            du_norm_sum += sobolev_norm(du, 2);
            auto b = detail::sobolev2_bundle(du);
            resp_bundle.insert(resp_bundle.end(), b.begin(), b.end());
        }
        const double pn = sobolev_norm(projected, 1);
        if (du_norm_sum > 0) stats.ratios.push_back(pn / du_norm_sum);
        param_bundles.push_back(detail::sobolev1_bundle(projected));
        response_bundles.push_back(std::move(resp_bundle));
    }
    if (!stats.ratios.empty()) {
        std::vector<double> sorted = stats.ratios;
        std::sort(sorted.begin(), sorted.end());
        stats.max_ratio = sorted.back();
        stats.median_ratio = sorted[sorted.size() / 2];
    }
    // sup over the span: largest generalized eigenvalue of the parameter
    // Gram against the response Gram. Span directions whose response
    // energy falls below the resolvable fraction of the dominant one are
    // excluded (they carry solver noise, not physics).
    const int m = int(param_bundles.size());
    if (m >= 1) {
        Eigen::MatrixXd P(m, m), R(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                P(i, j) = P(j, i) =
                    detail::bundle_dot(param_bundles[std::size_t(i)], param_bundles[std::size_t(j)]);
                R(i, j) = R(j, i) = detail::bundle_dot(response_bundles[std::size_t(i)],
                                                       response_bundles[std::size_t(j)]);
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> res(R);
        const double lmax = res.eigenvalues().maxCoeff();
        std::vector<int> keep;
        for (int i = 0; i < m; ++i)
            if (res.eigenvalues()[i] > opts.span_truncation * lmax) keep.push_back(i);
        if (!keep.empty()) {
            Eigen::MatrixXd Q(m, int(keep.size()));
            for (std::size_t q = 0; q < keep.size(); ++q)
                Q.col(int(q)) = res.eigenvectors().col(keep[q]) /
                                std::sqrt(res.eigenvalues()[keep[q]]);
            Eigen::MatrixXd Pt = Q.transpose() * P * Q;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pes(0.5 * (Pt + Pt.transpose()));
            stats.span_sup = std::sqrt(std::max(0.0, pes.eigenvalues().maxCoeff()));
        }
    }
    return stats;
}

}  // namespace elastostab
