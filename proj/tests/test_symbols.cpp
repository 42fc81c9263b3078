#include <gtest/gtest.h>

#include <random>

#include "elastostab/diagnostics.hpp"
#include "elastostab/symbols.hpp"
#include "support/states.hpp"
#include "support/symbol_oracles.hpp"

using namespace elastostab;
using namespace elastostab::testing;

namespace {

double rel_diff(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return (a - b).norm() / std::max(1.0, a.norm());
}

ReferenceState quasistatic_state(index_t n = 7) {
    Grid g = Grid::unit_box(n);
    AffineStrainState aff;
    return make_reference_state(MaterialParams::constant(g, 0.9, 1.4, 1.1),
                                {aff.displacement(g), second_affine_state().displacement(g)});
}

ReferenceState dynamic_state(index_t n = 6) {
    Grid g({n, n, n}, {1.0 / double(n - 1), 1.0 / double(n - 1), 1.0 / double(n - 1)},
           {0, 0, 0}, 5, 0.05);
    VectorField u = sample<3>(
        g,
        {[](double x1, double x2, double, double t) {
             return std::cos(2 * t) * (0.2 + x1 + 0.3 * x2);
         },
         [](double, double x2, double, double t) { return std::cos(2 * t) * (0.5 + x2); },
         [](double x1, double, double x3, double t) {
             return std::cos(2 * t) * (0.3 + x3 + 0.2 * x1);
         }});
    return make_reference_state(MaterialParams::constant(g, 0.8, 1.2, 1.5), {u});
}

PointData point_data(const ReferenceState& st, index_t pt, index_t snap, int meas = 0) {
    PointData d;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            d.eps(i, j) = st.strains[std::size_t(meas)].at(pt, sym_index(i, j), snap);
    if (st.dynamic())
        for (int i = 0; i < 3; ++i) d.utt[i] = st.accelerations[std::size_t(meas)].at(pt, i, snap);
    d.mu = st.params.mu.at(pt);
    d.rho = st.params.rho.at(pt);
    d.lambda = st.params.lambda.at(pt);
    d.divu = divergence(st.displacements[std::size_t(meas)]).at(pt, 0, snap);
    return d;
}

}  // namespace

TEST(ComputeSigma, WorkedExampleBothChoices) {
    // boundary rows of the worked example: (u1, 0) and (0, grad u2 . nu)
    MatrixDiffOp B(2, 2, 2);
    DiffTerm one;
    B.add_term(0, 0, one);
    DiffTerm d1, d2;
    d1.alpha = {1, 0, 0, 0};
    d1.constant = 0.6;
    d2.alpha = {0, 1, 0, 0};
    d2.constant = 0.8;
    B.add_term(1, 1, d1);
    B.add_term(1, 1, d2);
    EXPECT_EQ(compute_sigma(B, {1, 3}), (std::vector<int>{-1, -1}));
    EXPECT_EQ(compute_sigma(B, {1, 2}), (std::vector<int>{-1, -1}));
}

TEST(ComputeSigma, IdentityRows) {
    MatrixDiffOp B(3, 3, 3);
    for (int i = 0; i < 3; ++i) {
        DiffTerm one;
        B.add_term(i, i, one);
    }
    EXPECT_EQ(compute_sigma(B, {2, 2, 2}), (std::vector<int>{-2, -2, -2}));
}

TEST(ComputeSigma, FirstOrderRow) {
    MatrixDiffOp B(1, 2, 3);
    DiffTerm d;
    d.alpha = {1, 0, 0, 0};
    B.add_term(0, 1, d);
    EXPECT_EQ(compute_sigma(B, {2, 2}), (std::vector<int>{-1}));
}

TEST(ComputeSigma, EmptyRowRejected) {
    MatrixDiffOp B(2, 2, 3);
    DiffTerm one;
    B.add_term(0, 0, one);
    EXPECT_THROW(compute_sigma(B, {1, 1}), DNError);
}

TEST(PrincipalPart, WorkedExampleTwoChoices) {
    ReferenceState st = quasistatic_state(5);
    BuiltOperator b = build_operator(OperatorKind::paper_example, st);
    const std::array<double, 4> xi{0.7, -0.4, 0.0, 0.0};

    MatrixDiffOp p12 = principal_part(b.op, b.dn);  // t=(1,2), s=(0,0,0)
    EXPECT_LE(rel_diff(eval_symbol(p12, 0, xi), oracle_example_t12(xi)), 1e-13);

    MatrixDiffOp p13 = principal_part(b.op, paper_example_dn_alt());  // t=(1,3), s=(-1,0,0)
    EXPECT_LE(rel_diff(eval_symbol(p13, 0, xi), oracle_example_t13(xi)), 1e-13);

    // the zeroth-order u1 entry survives only with the second choice
    EXPECT_TRUE(p12.entry_empty(0, 0));
    EXPECT_FALSE(p13.entry_empty(0, 0));
}

TEST(PrincipalPart, Idempotent) {
    ReferenceState st = quasistatic_state(5);
    for (OperatorKind kind : {OperatorKind::L_p, OperatorKind::L_mu, OperatorKind::L_lambda}) {
        BuiltOperator b = build_operator(kind, st);
        MatrixDiffOp p1 = principal_part(b.op, b.dn);
        MatrixDiffOp p2 = principal_part(p1, b.dn);
        const std::array<double, 4> xi{0.3, 0.9, -0.2, 0.0};
        EXPECT_LE(rel_diff(eval_symbol(p1, 3, xi), eval_symbol(p2, 3, xi)), 1e-14);
    }
}

TEST(PrincipalPart, HomogeneousOperatorUnchanged) {
    ReferenceState st = quasistatic_state(5);
    BuiltOperator b = build_operator(OperatorKind::helmholtz, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    const std::array<double, 4> xi{0.5, 0.1, -0.8, 0.0};
    EXPECT_LE(rel_diff(eval_symbol(p, 0, xi), eval_symbol(b.op, 0, xi)), 1e-14);
}

TEST(PrincipalPart, OrderViolationRejected) {
    MatrixDiffOp op(1, 1, 3);
    DiffTerm d;
    d.alpha = {2, 0, 0, 0};
    op.add_term(0, 0, d);
    DNNumbers dn{{0}, {1}, {}};
    EXPECT_THROW(principal_part(op, dn), DNError);
}

TEST(EvalSymbol, RejectsZeroCovector) {
    ReferenceState st = quasistatic_state(5);
    BuiltOperator b = build_operator(OperatorKind::L_p, st);
    EXPECT_THROW(eval_symbol(b.op, 0, {0, 0, 0, 0}), Error);
}

TEST(EvalSymbol, ZeroOperatorGivesZeroMatrix) {
    MatrixDiffOp op(2, 2, 3);
    EXPECT_LE(eval_symbol(op, 0, {1, 0, 0, 0}).norm(), 1e-300);
}

TEST(SymbolFidelity, AllKindsMatchHandCodedMatrices) {
    ReferenceState qs = quasistatic_state(7);
    ReferenceState dyn = dynamic_state(6);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    auto random_xi = [&](bool with_time) {
        std::array<double, 4> xi{uni(rng), uni(rng), uni(rng), with_time ? uni(rng) : 0.0};
        double n = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2] + xi[3] * xi[3]);
        if (n < 0.1) xi[0] += 1.0;
        return xi;
    };

    for (int trial = 0; trial < 50; ++trial) {
        // quasi-static kinds at a random point of the quasi-static state
        {
            const index_t pt = index_t(rng() % std::uint64_t(qs.grid().points()));
            const auto xi = random_xi(false);
            PointData d = point_data(qs, pt, 0);

            auto check = [&](OperatorKind kind, const Eigen::MatrixXcd& oracle) {
                BuiltOperator b = build_operator(kind, qs);
                Eigen::MatrixXcd sym = eval_symbol(principal_part(b.op, b.dn), pt, xi);
                EXPECT_LE(rel_diff(sym, oracle), 1e-12) << to_string(kind);
            };
            check(OperatorKind::L_p, oracle_princ_LP(d, xi));
            check(OperatorKind::L_mu, oracle_princ_LMu(d, xi, false));
            check(OperatorKind::L_pmu, oracle_princ_symb_spat(d, xi));
            check(OperatorKind::L_lambda, oracle_symb_L(d, xi));
            check(OperatorKind::helmholtz, oracle_helmholtz(xi));
            check(OperatorKind::maxwell, oracle_maxwell(xi));

            BuiltOperator pe = build_operator(OperatorKind::paper_example, qs);
            const std::array<double, 4> xi2{xi[0], xi[1], 0.0, 0.0};
            EXPECT_LE(rel_diff(eval_symbol(principal_part(pe.op, pe.dn), pt, xi2),
                               oracle_example_t12(xi2)),
                      1e-12);
            EXPECT_LE(rel_diff(eval_symbol(principal_part(pe.op, paper_example_dn_alt()), pt, xi2),
                               oracle_example_t13(xi2)),
                      1e-12);
        }
        // dynamic kinds at a random (point, snapshot)
        {
            const index_t pt = index_t(rng() % std::uint64_t(dyn.grid().points()));
            const index_t snap = index_t(rng() % std::uint64_t(dyn.grid().snapshots));
            const auto xi = random_xi(true);
            PointData d = point_data(dyn, pt, snap);

            BuiltOperator rho = build_operator(OperatorKind::L_rho, dyn);
            EXPECT_LE(rel_diff(eval_symbol(principal_part(rho.op, rho.dn), pt, xi, snap),
                               oracle_princ_LRho(d, xi)),
                      1e-12);
            BuiltOperator pmurho = build_operator(OperatorKind::L_pmurho, dyn);
            EXPECT_LE(rel_diff(eval_symbol(principal_part(pmurho.op, pmurho.dn), pt, xi, snap),
                               oracle_princ_symb(d, xi)),
                      1e-12);
            BuiltOperator mu = build_operator(OperatorKind::L_mu, dyn);
            EXPECT_LE(rel_diff(eval_symbol(principal_part(mu.op, mu.dn), pt, xi, snap),
                               oracle_princ_LMu(d, xi, true)),
                      1e-12);
        }
    }
}

TEST(Ellipticity, LpEllipticEverywhere) {
    ReferenceState st = quasistatic_state(7);
    BuiltOperator b = build_operator(OperatorKind::L_p, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    for (index_t pt : {index_t(0), st.grid().points() / 2, st.grid().points() - 1}) {
        EllipticityOptions opts;
        opts.candidates = strain_eigendirections(st.strains[0], pt);
        EXPECT_TRUE(ellipticity_test(p, pt, opts).elliptic);
    }
}

TEST(Ellipticity, LmuSingularStrainCharacteristicDirection) {
    Grid g = Grid::unit_box(7);
    // eps = diag(1,1,0) everywhere: characteristic exactly along e3
    VectorField u = sample_vector(
        g, [](double x1, double, double, double) { return x1; },
        [](double, double x2, double, double) { return x2; },
        [](double, double, double, double) { return 0.0; });
    ReferenceState st =
        make_reference_state(MaterialParams::constant(g, 1.0, 1.0, 1.0), {u});
    BuiltOperator b = build_operator(OperatorKind::L_mu, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    EllipticityOptions opts;
    opts.candidates = strain_eigendirections(st.strains[0], 0);
    EllipticityResult res = ellipticity_test(p, 0, opts);
    EXPECT_FALSE(res.elliptic);
    bool found_e3 = false;
    for (const auto& xi : res.characteristic)
        if (std::abs(std::abs(xi[2]) - 1.0) < 1e-9 && std::abs(xi[0]) < 1e-9 &&
            std::abs(xi[1]) < 1e-9)
            found_e3 = true;
    EXPECT_TRUE(found_e3);
}

TEST(Ellipticity, LmuNonsingularStateElliptic) {
    ReferenceState st = quasistatic_state(7);
    BuiltOperator b = build_operator(OperatorKind::L_mu, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    for (index_t pt : {index_t(1), st.grid().points() / 3, st.grid().points() - 2}) {
        EllipticityOptions opts;
        opts.candidates = strain_eigendirections(st.strains[0], pt);
        EXPECT_TRUE(ellipticity_test(p, pt, opts).elliptic);
    }
}

TEST(Ellipticity, LpmuNeverEllipticWithEigenvectorCertificate) {
    ReferenceState st = quasistatic_state(7);
    BuiltOperator b = build_operator(OperatorKind::L_pmu, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    for (index_t pt : {index_t(0), st.grid().points() / 2, st.grid().points() - 1}) {
        EllipticityOptions opts;
        opts.candidates = strain_eigendirections(st.strains[0], pt);
        EllipticityResult res = ellipticity_test(p, pt, opts);
        ASSERT_FALSE(res.elliptic);
        ASSERT_FALSE(res.characteristic.empty());
        // certificate: a characteristic direction is a strain eigenvector
        bool eigen_like = false;
        Eigen::Matrix3d E;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) E(i, j) = st.strains[0].at(pt, sym_index(i, j));
        for (const auto& xi : res.characteristic) {
            Eigen::Vector3d v(xi[0], xi[1], xi[2]);
            if (v.norm() < 1e-12) continue;
            v.normalize();
            const double kappa = v.dot(E * v);
            if ((E * v - kappa * v).norm() <= 1e-8) eigen_like = true;
        }
        EXPECT_TRUE(eigen_like);
    }
}

TEST(Ellipticity, LrhoDynamicFollowsAcceleration) {
    ReferenceState st = dynamic_state(6);
    BuiltOperator b = build_operator(OperatorKind::L_rho, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    // the manufactured acceleration is nonzero everywhere
    EXPECT_TRUE(ellipticity_test(p, st.grid().points() / 2, {}, 1).elliptic);

    // zero acceleration: drop the time dependence
    Grid g = st.grid();
    VectorField u0 = sample<3>(g, {[](double x1, double, double, double) { return x1; },
                                   [](double, double x2, double, double) { return x2; },
                                   [](double, double, double x3, double) { return x3; }});
    ReferenceState st0 =
        make_reference_state(MaterialParams::constant(g, 1.0, 1.0, 1.0), {u0});
    BuiltOperator b0 = build_operator(OperatorKind::L_rho, st0);
    MatrixDiffOp p0 = principal_part(b0.op, b0.dn);
    EXPECT_FALSE(ellipticity_test(p0, g.points() / 2, {}, 1).elliptic);
}

TEST(Ellipticity, StackedSecondMeasurementRepairs) {
    Grid g = Grid::unit_box(9);
    AffineStrainState aff;
    ReferenceState st = make_reference_state(
        MaterialParams::constant(g, 1.0, 1.0, 1.0),
        {singular_plane_displacement(g), aff.displacement(g)});

    // a point on the singular plane (x3 = 0.5 exists for odd dims)
    const index_t pt = g.flat(4, 4, 4);
    ASSERT_NEAR(g.point(pt)[2], 0.5, 1e-12);

    BuiltOperator single = build_operator(OperatorKind::L_mu, st, 0);
    EllipticityOptions opts;
    opts.candidates = strain_eigendirections(st.strains[0], pt);
    EXPECT_FALSE(
        ellipticity_test(principal_part(single.op, single.dn), pt, opts).elliptic);

    BuiltOperator stacked = build_stacked_operator(OperatorKind::L_mu, st, 2);
    EllipticityOptions opts2;
    opts2.candidates = strain_eigendirections(st.strains[0], pt);
    for (const auto& c : strain_eigendirections(st.strains[1], pt))
        opts2.candidates.push_back(c);
    EXPECT_TRUE(
        ellipticity_test(principal_part(stacked.op, stacked.dn), pt, opts2).elliptic);
}

TEST(ConditionMaps, IdentityMapState) {
    Grid g = Grid::unit_box(7);
    VectorField u = sample_vector(
        g, [](double x1, double, double, double) { return x1; },
        [](double, double x2, double, double) { return x2; },
        [](double, double, double x3, double) { return x3; });
    ReferenceState st = make_reference_state(MaterialParams::constant(g, 1.0, 1.0, 1.0), {u});
    DiagnosticsReport rep = condition_maps(st);
    EXPECT_EQ(rep.condition("mu_det_strain").failing, 0);
    EXPECT_EQ(rep.condition("lambda_div_u").failing, 0);
    EXPECT_FALSE(rep.condition("rho_u_tt").available);
    EXPECT_FALSE(rep.has_bal);
    EXPECT_NEAR(rep.condition("mu_det_strain").max_abs, 1.0, 1e-10);
    EXPECT_NEAR(rep.condition("lambda_div_u").max_abs, 3.0, 1e-10);
}

TEST(ConditionMaps, SingularPlaneDetected) {
    Grid g = Grid::unit_box(9);
    ReferenceState st = make_reference_state(MaterialParams::constant(g, 1.0, 1.0, 1.0),
                                             {singular_plane_displacement(g)});
    DiagnosticsReport rep = condition_maps(st);
    // det eps = x3 - 1/2 vanishes on one grid plane: 9x9 points
    EXPECT_EQ(rep.condition("mu_det_strain").failing, 81);
    EXPECT_FALSE(rep.all_pass());
}

TEST(ConditionMaps, TwoMeasurementsExposeBalMap) {
    ReferenceState st = quasistatic_state(7);
    DiagnosticsReport rep = condition_maps(st);
    EXPECT_TRUE(rep.has_bal);
    EXPECT_GT(rep.bal_map.max_abs(), 0.0);
    auto j = rep.to_json();
    EXPECT_TRUE(j.contains("conditions"));
}

TEST(ConditionMaps, ClosedFormAgreement) {
    // verdict from the rank test matches the sign of the closed-form
    // criterion away from the tolerance band
    Grid g = Grid::unit_box(9);
    ReferenceState st = make_reference_state(MaterialParams::constant(g, 1.0, 1.0, 1.0),
                                             {singular_plane_displacement(g)});
    BuiltOperator b = build_operator(OperatorKind::L_mu, st);
    MatrixDiffOp p = principal_part(b.op, b.dn);
    DiagnosticsReport rep = condition_maps(st);
    const ScalarField& det = rep.condition("mu_det_strain").values[0];
    int agree = 0, total = 0;
    for (index_t pt = 0; pt < g.points(); pt += 7) {
        if (std::abs(det.at(pt)) < 1e-8) continue;  // tolerance band
        EllipticityOptions opts;
        opts.n_samples = 64;
        opts.candidates = strain_eigendirections(st.strains[0], pt);
        const bool elliptic = ellipticity_test(p, pt, opts).elliptic;
        agree += (elliptic == (std::abs(det.at(pt)) > 1e-8)) ? 1 : 0;
        ++total;
    }
    EXPECT_GE(double(agree) / double(total), 0.99);
}
