#pragma once

#include <json.hpp>

#include "elastostab/elasticity.hpp"
#include "elastostab/fd.hpp"
#include "elastostab/io.hpp"

namespace elastostab {

/// Pointwise reference-state condition: per-measurement criterion values
/// and the "at least one measurement passes" verdict at every point.
struct ConditionMap {
    std::string name;
    bool available = true;
    std::vector<ScalarField> values;  // one per measurement
    std::vector<char> pass;           // per (point, snapshot), any-measurement
    index_t failing = 0;

    double min_abs = 0, max_abs = 0;
};

struct DiagnosticsReport {
    double threshold = 0;
    std::vector<ConditionMap> conditions;
    ScalarField bal_map;  // valid when has_bal
    bool has_bal = false;

    const ConditionMap& condition(const std::string& name) const {
        for (const auto& c : conditions)
            if (c.name == name) return c;
        throw Error("no such condition: " + name);
    }

    bool all_pass() const {
        for (const auto& c : conditions)
            if (c.available && c.failing > 0) return false;
        return true;
    }

    nlohmann::ordered_json to_json() const;
};

namespace detail {

inline ConditionMap reduce_condition(std::string name, std::vector<ScalarField> vals,
                                     double tol) {
    ConditionMap m;
    m.name = std::move(name);
    m.values = std::move(vals);
    const Grid& g = m.values.front().grid();
    const index_t total = g.points() * g.snapshot_count();
    m.pass.assign(std::size_t(total), 0);
    m.min_abs = std::numeric_limits<double>::infinity();
    m.max_abs = 0;
    for (index_t s = 0; s < g.snapshot_count(); ++s)
        for (index_t p = 0; p < g.points(); ++p) {
            double best = 0;
            for (const auto& v : m.values) best = std::max(best, std::abs(v.at(p, 0, s)));
            m.min_abs = std::min(m.min_abs, best);
            m.max_abs = std::max(m.max_abs, best);
            const bool ok = best > tol;
            m.pass[std::size_t(p + g.points() * s)] = ok ? 1 : 0;
            if (!ok) ++m.failing;
        }
    return m;
}

}  // namespace detail

/// Pointwise condition maps of the stability analysis: det eps(u_k) for
/// the shear modulus, |u_tt| for the density, div u for the first Lame
/// parameter, plus the two-measurement invertibility determinant when at
/// least two experiments are present. The pressure linearization needs no
/// reference-state condition.
inline DiagnosticsReport condition_maps(const ReferenceState& st, double threshold = 1e-8) {
    require(st.measurements() >= 1, "condition_maps needs at least one experiment");
    const Grid& g = st.grid();
    DiagnosticsReport rep;
    rep.threshold = threshold;

    std::vector<ScalarField> dets, divs, accs;
    for (int k = 0; k < st.measurements(); ++k) {
        ScalarField det(g);
        const auto& eps = st.strains[std::size_t(k)];
        for (index_t s = 0; s < g.snapshot_count(); ++s)
            for (index_t p = 0; p < g.points(); ++p) {
                double c[6];
                for (int q = 0; q < 6; ++q) c[q] = eps.at(p, q, s);
                det.at(p, 0, s) = det3_sym(c);
            }
        dets.push_back(std::move(det));
        divs.push_back(divergence(st.displacements[std::size_t(k)]));
        if (st.dynamic()) {
            ScalarField mag(g);
            const auto& utt = st.accelerations[std::size_t(k)];
            for (index_t s = 0; s < g.snapshot_count(); ++s)
                for (index_t p = 0; p < g.points(); ++p)
                    mag.at(p, 0, s) = std::sqrt(utt.at(p, 0, s) * utt.at(p, 0, s) +
                                                utt.at(p, 1, s) * utt.at(p, 1, s) +
                                                utt.at(p, 2, s) * utt.at(p, 2, s));
            accs.push_back(std::move(mag));
        }
    }
    rep.conditions.push_back(detail::reduce_condition("mu_det_strain", std::move(dets), threshold));
    rep.conditions.push_back(detail::reduce_condition("lambda_div_u", std::move(divs), threshold));
    if (st.dynamic()) {
        rep.conditions.push_back(detail::reduce_condition("rho_u_tt", std::move(accs), threshold));
    } else {
        ConditionMap m;
        m.name = "rho_u_tt";
        m.available = false;
        rep.conditions.push_back(std::move(m));
    }
    ConditionMap p;
    p.name = "p_none";
    p.available = true;  // no condition: passes everywhere
    rep.conditions.push_back(std::move(p));

    if (st.measurements() >= 2) {
        rep.bal_map = bal_condition(st.strains[0], st.strains[1]);
        rep.has_bal = true;
    }
    return rep;
}

inline nlohmann::ordered_json DiagnosticsReport::to_json() const {
    nlohmann::ordered_json j;
    j["threshold"] = threshold;
    for (const auto& c : conditions) {
        nlohmann::ordered_json jc;
        jc["available"] = c.available;
        if (c.available) {
            jc["failing_points"] = c.failing;
            if (!c.values.empty()) {
                jc["min_abs"] = io::round_sig(c.min_abs);
                jc["max_abs"] = io::round_sig(c.max_abs);
            }
        }
        j["conditions"][c.name] = jc;
    }
    j["all_pass"] = all_pass();
    return j;
}

}  // namespace elastostab
