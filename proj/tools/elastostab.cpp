#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "elastostab/config.hpp"
#include "elastostab/diagnostics.hpp"
#include "elastostab/inverse.hpp"
#include "elastostab/kernel.hpp"
#include "elastostab/lopatinskii.hpp"

namespace es = elastostab;
namespace fs = std::filesystem;
using es::io::json;
using es::io::round_sig;

namespace {

// exit codes of the scripting contract
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSolver = 2;
constexpr int kExitCondition = 3;
constexpr int kExitSingularStrain = 4;
constexpr int kExitSizeLimit = 5;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file")->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides [output] dir)");
    cmd->add_option("--seed", args.seed, "seed for randomized internals");
    cmd->add_flag("--dry-run", args.dry_run, "validate the configuration and exit");
}

fs::path resolve_out(const es::Config& cfg, const CommonArgs& args) {
    const std::string dir = !args.out_dir.empty() ? args.out_dir
                                                  : cfg.get_or("output", "dir", "out");
    fs::path p = dir;
    if (p.is_relative()) p = cfg.base_dir() / p;
    fs::create_directories(p);
    return p;
}

struct LoadedState {
    es::Grid grid;
    es::MaterialParams params;
    std::vector<es::VectorField> displacements;
    bool simulated = false;
};

/// Displacements from [state] sections when present, otherwise from
/// simulating the [excitation] sections.
LoadedState load_state(const es::Config& cfg, bool solve_if_needed) {
    es::Grid g = es::grid_from_config(cfg);
    es::MaterialParams params = es::material_from_config(cfg, g);
    LoadedState st{g, params, {}, false};
    st.displacements = es::displacements_from_config(cfg, g);
    if (st.displacements.empty()) {
        const auto secs = cfg.sections_matching("excitation");
        if (secs.empty()) throw es::ConfigError("need [state] or [excitation] sections");
        if (solve_if_needed) {
            for (const auto& sec : secs) {
                es::VectorField F = es::vector_field_from_spec(cfg, g, cfg.get(sec, "F"));
                st.displacements.push_back(es::solve_quasistatic(params, F));
            }
            st.simulated = true;
        }
    }
    return st;
}

json grid_json(const es::Grid& g) {
    json j;
    j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
    j["spacing"] = {round_sig(g.spacing[0]), round_sig(g.spacing[1]), round_sig(g.spacing[2])};
    j["snapshots"] = g.snapshots;
    return j;
}

int cmd_simulate(const CommonArgs& args) {
    es::Config cfg = es::Config::parse_file(args.config_path);
    es::Grid g = es::grid_from_config(cfg);
    es::MaterialParams params = es::material_from_config(cfg, g);
    const auto secs = cfg.sections_matching("excitation");
    if (secs.empty()) throw es::ConfigError("simulate: no [excitation] sections");
    std::vector<es::VectorField> forces;
    for (const auto& sec : secs)
        forces.push_back(es::vector_field_from_spec(cfg, g, cfg.get(sec, "F")));
    if (args.dry_run) return kExitOk;

    const fs::path out = resolve_out(cfg, args);
    es::ReferenceState st = es::simulate_reference_state(params, forces);
    const bool csv = cfg.get_or("output", "csv", "false") == "true";
    json manifest;
    manifest["grid"] = grid_json(g);
    manifest["measurements"] = int(st.measurements());
    for (int k = 0; k < st.measurements(); ++k) {
        const std::string uk = "u" + std::to_string(k) + ".field";
        es::io::write_field(st.displacements[std::size_t(k)], out / uk);
        es::io::write_field(st.strains[std::size_t(k)],
                            out / ("eps" + std::to_string(k) + ".field"));
        es::io::write_field(st.pressures[std::size_t(k)],
                            out / ("p" + std::to_string(k) + ".field"));
        if (csv)
            es::io::write_csv(st.displacements[std::size_t(k)],
                              out / ("u" + std::to_string(k) + ".csv"));
        json m;
        m["u"] = uk;
        m["max_abs_u"] = round_sig(st.displacements[std::size_t(k)].max_abs());
        manifest["experiments"].push_back(m);
    }
    es::io::write_json(manifest, out / "state.json");
    return kExitOk;
}

int cmd_diagnose(const CommonArgs& args) {
    es::Config cfg = es::Config::parse_file(args.config_path);
    LoadedState ls = load_state(cfg, !args.dry_run);
    if (args.dry_run) return kExitOk;
    const fs::path out = resolve_out(cfg, args);
    es::ReferenceState st = es::make_reference_state(ls.params, std::move(ls.displacements));
    const double tol = cfg.has("diagnose", "threshold")
                           ? cfg.get_double("diagnose", "threshold")
                           : 1e-8;
    es::DiagnosticsReport rep = es::condition_maps(st, tol);
    json j = rep.to_json();
    j["seed"] = args.seed;
    es::io::write_json(j, out / "diagnostics.json");
    for (const auto& cond : rep.conditions)
        if (cond.available && !cond.values.empty())
            es::io::write_field(cond.values[0], out / (cond.name + ".field"));
    if (rep.has_bal) es::io::write_field(rep.bal_map, out / "bal.field");

    // requested conditions must pass everywhere
    std::vector<std::string> requested;
    if (cfg.has("diagnose", "conditions"))
        for (const auto& c : cfg.split_list(cfg.get("diagnose", "conditions"), ' '))
            if (!c.empty()) requested.push_back(c);
    bool ok = true;
    if (requested.empty()) {
        ok = rep.all_pass();
    } else {
        for (const auto& name : requested) {
            const auto& c = rep.condition(name);
            if (!c.available || c.failing > 0) ok = false;
        }
    }
    return ok ? kExitOk : kExitCondition;
}

int cmd_kernel(const CommonArgs& args) {
    es::Config cfg = es::Config::parse_file(args.config_path);
    LoadedState ls = load_state(cfg, !args.dry_run);
    if (args.dry_run) return kExitOk;
    const fs::path out = resolve_out(cfg, args);
    es::ReferenceState st = es::make_reference_state(ls.params, std::move(ls.displacements));
    es::KernelCertificate cert = es::build_kernel_certificate(st.strains[0]);
    es::io::write_field(cert.a, out / "a.field");
    es::io::write_field(cert.delta_mu_star, out / "delta_mu_star.field");
    if (cfg.get_or("output", "csv", "false") == "true")
        es::io::write_csv(cert.delta_mu_star, out / "delta_mu_star.csv");
    json j;
    j["base_point"] = {round_sig(cert.base_point[0]), round_sig(cert.base_point[1]),
                       round_sig(cert.base_point[2])};
    j["residual"] = round_sig(cert.residual);
    j["path_independence_defect"] = round_sig(cert.path_independence);
    j["max_strain_condition"] = round_sig(cert.max_condition);
    j["near_singular_points"] = cert.near_singular_points;
    j["seed"] = args.seed;
    es::io::write_json(j, out / "kernel.json");
    return kExitOk;
}

int cmd_lopatinskii(const CommonArgs& args) {
    es::Config cfg = es::Config::parse_file(args.config_path);
    const std::string kind_s = cfg.get_or("operator", "kind", "L_mu");
    const es::OperatorKind kind = es::operator_kind_from(kind_s);
    LoadedState ls = load_state(cfg, !args.dry_run);
    if (args.dry_run) return kExitOk;
    const fs::path out = resolve_out(cfg, args);
    es::ReferenceState st = es::make_reference_state(ls.params, std::move(ls.displacements));
    const es::Grid& g = st.grid();
    const int zeta_samples =
        cfg.has("lopatinskii", "zeta_samples") ? int(cfg.get_int("lopatinskii", "zeta_samples")) : 8;

    // face-center boundary points
    std::vector<std::pair<std::string, es::index_t>> faces;
    const es::index_t ci = g.dims[0] / 2, cj = g.dims[1] / 2, ck = g.dims[2] / 2;
    faces.emplace_back("x1_lo", g.flat(0, cj, ck));
    faces.emplace_back("x1_hi", g.flat(g.dims[0] - 1, cj, ck));
    faces.emplace_back("x2_lo", g.flat(ci, 0, ck));
    faces.emplace_back("x2_hi", g.flat(ci, g.dims[1] - 1, ck));
    faces.emplace_back("x3_lo", g.flat(ci, cj, 0));
    faces.emplace_back("x3_hi", g.flat(ci, cj, g.dims[2] - 1));

    json table = json::array();
    bool any_violated = false;
    for (const auto& [name, pt] : faces) {
        json row;
        row["face"] = name;
        std::string verdict = "satisfied";
        std::vector<std::string> branches;
        for (const auto& frame : es::boundary_frames_from_grid(g, pt, zeta_samples)) {
            if (kind == es::OperatorKind::L_mu) {
                Eigen::Matrix3d E;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        E(i, j) = st.strains[0].at(pt, es::sym_index(i, j));
                const auto r = es::check_L_mu(frame, E);
                branches.push_back(r.detail);
                if (!r.satisfied) verdict = "violated";
            } else if (kind == es::OperatorKind::L_rho) {
                es::require(st.dynamic(), "L_rho verdicts need a dynamic state");
                bool ok_all = true;
                const auto& utt = st.accelerations[0];
                for (es::index_t s = 0; s < g.snapshot_count(); ++s) {
                    Eigen::Vector3d v(utt.at(pt, 0, s), utt.at(pt, 1, s), utt.at(pt, 2, s));
                    ok_all = ok_all && es::check_L_rho(frame, v, utt.max_abs());
                }
                if (!ok_all) verdict = "violated";
            } else if (kind == es::OperatorKind::L_pmu) {
                Eigen::Matrix3d E;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        E(i, j) = st.strains[0].at(pt, es::sym_index(i, j));
                const auto r = es::check_L_pmu(frame, E);
                if (!r.holds && verdict == "satisfied") verdict = "inconclusive";
            } else {
                throw es::ConfigError("lopatinskii: kind must be L_mu, L_rho or L_pmu");
            }
        }
        row["verdict"] = verdict;
        if (!branches.empty()) row["branch"] = branches.front();
        if (verdict == "violated") any_violated = true;
        table.push_back(row);
    }
    json j;
    j["kind"] = kind_s;
    j["faces"] = table;
    j["seed"] = args.seed;
    es::io::write_json(j, out / "lopatinskii.json");
    return any_violated ? kExitCondition : kExitOk;
}

int cmd_reconstruct(const CommonArgs& args) {
    es::Config cfg = es::Config::parse_file(args.config_path);
    const es::OperatorKind kind = es::operator_kind_from(cfg.get_or("reconstruct", "kind", "L_mu"));
    LoadedState ls = load_state(cfg, !args.dry_run);
    if (args.dry_run) return kExitOk;
    const fs::path out = resolve_out(cfg, args);
    es::ReferenceState st = es::make_reference_state(ls.params, std::move(ls.displacements));
    const es::Grid& g = st.grid();

    // ground truth increment (synthesizes the data when no dK files given)
    std::optional<es::ScalarField> truth;
    if (cfg.has("reconstruct", "truth"))
        truth = es::scalar_field_from_spec(cfg, g, cfg.get("reconstruct", "truth"));

    std::vector<es::VectorField> data;
    const auto data_secs = cfg.sections_matching("data");
    for (const auto& sec : data_secs)
        data.push_back(es::vector_field_from_spec(cfg, g, cfg.get(sec, "dK")));
    if (data.empty()) {
        es::require(bool(truth), "reconstruct: need [data] sections or a truth expression");
        if (kind != es::OperatorKind::L_mu && kind != es::OperatorKind::L_p)
            throw es::ConfigError("reconstruct: synthetic data supports L_mu and L_p");
        for (int k = 0; k < st.measurements(); ++k) {
            es::VectorField source = es::linearized_source(kind, st, *truth, k);
            source *= -1.0;
            data.push_back(es::solve_linearized_response(st, source));
        }
    }

    std::vector<double> weights;
    for (const auto& w : cfg.split_list(cfg.get_or("reconstruct", "reg_weights", "1e-4"), ' '))
        if (!w.empty()) weights.push_back(std::stod(w));

    json sweep = json::array();
    std::optional<es::ReconstructionResult> best;
    double best_score = std::numeric_limits<double>::infinity();
    for (double w : weights) {
        es::ReconstructionResult r = es::reconstruct(kind, st, data, w);
        const es::ScalarField* rec = nullptr;
        if (r.increments.dmu) rec = &*r.increments.dmu;
        else if (!r.increments.dp_per_meas.empty()) rec = &r.increments.dp_per_meas[0];
        double score = r.data_residual;
        if (truth && rec) {
            // compare after removing the additive-constant ambiguity for dp
            es::ScalarField diff = *rec;
            diff -= *truth;
            if (kind == es::OperatorKind::L_p) {
                double mean = 0;
                for (double v : diff.raw()) mean += v;
                mean /= double(diff.raw().size());
                for (auto& v : diff.raw()) v -= mean;
            }
            const double tn = es::sobolev_norm(*truth, 0);
            r.rel_error = tn > 0 ? es::sobolev_norm(diff, 0) / tn : 0.0;
            score = *r.rel_error;
        }
        json e;
        e["reg_weight"] = round_sig(w);
        e["data_residual"] = round_sig(r.data_residual);
        e["iterations"] = r.iterations;
        if (r.rel_error) e["rel_error"] = round_sig(*r.rel_error);
        sweep.push_back(e);
        if (score < best_score) {
            best_score = score;
            best = std::move(r);
        }
    }
    es::require(bool(best), "reconstruct: empty regularization sweep");
    if (best->increments.dmu) es::io::write_field(*best->increments.dmu, out / "dmu.field");
    if (!best->increments.dp_per_meas.empty())
        es::io::write_field(best->increments.dp_per_meas[0], out / "dp.field");
    json j;
    j["kind"] = es::to_string(kind);
    j["sweep"] = sweep;
    j["best_reg_weight"] = round_sig(best->reg_weight);
    j["best_data_residual"] = round_sig(best->data_residual);
    if (best->rel_error) j["best_rel_error"] = round_sig(*best->rel_error);
    j["seed"] = args.seed;
    es::io::write_json(j, out / "reconstruct.json");
    return kExitOk;
}

int cmd_svd(const CommonArgs& args) {
    es::Config cfg = es::Config::parse_file(args.config_path);
    const es::OperatorKind kind = es::operator_kind_from(cfg.get_or("svd", "kind", "L_mu"));
    LoadedState ls = load_state(cfg, !args.dry_run);
    if (args.dry_run) return kExitOk;
    const fs::path out = resolve_out(cfg, args);
    es::ReferenceState st = es::make_reference_state(ls.params, std::move(ls.displacements));
    const int n_meas = cfg.has("svd", "measurements") ? int(cfg.get_int("svd", "measurements"))
                                                      : st.measurements();
    const int k = cfg.has("svd", "k") ? int(cfg.get_int("svd", "k")) : 4;
    es::DiscreteLinearizedSystem sys = es::assemble(kind, st, n_meas);
    es::NullspaceProbe probe =
        es::nullspace_probe(sys, k, args.seed == 0 ? 12345 : args.seed);
    json j;
    j["kind"] = es::to_string(kind);
    j["measurements"] = n_meas;
    j["sigma_max"] = round_sig(probe.sigma_max);
    for (double sv : probe.singular_values) j["singular_values"].push_back(round_sig(sv));
    j["kernel_dim"] = probe.kernel_dim;
    j["seed"] = args.seed;
    es::io::write_json(j, out / "svd.json");
    for (std::size_t q = 0; q < probe.param_vectors.size(); ++q) {
        es::ScalarField f(es::Grid({st.grid().dims[0], st.grid().dims[1], st.grid().dims[2]},
                                   st.grid().spacing, st.grid().origin));
        const es::index_t n = st.grid().points();
        for (es::index_t p = 0; p < n && p < probe.param_vectors[q].size(); ++p)
            f.at(p) = probe.param_vectors[q][p];
        es::io::write_field(f, out / ("param_vector" + std::to_string(q) + ".field"));
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("ELASTOSTAB_THREADS")) {
        const int n = std::atoi(threads);
        if (n > 0) Eigen::setNbThreads(n);
    }

    CLI::App app{"stability diagnostics for linearized quantitative elastography"};
    app.require_subcommand(1);
    CommonArgs args;
    std::map<std::string, std::function<int(const CommonArgs&)>> handlers{
        {"simulate", cmd_simulate},   {"diagnose", cmd_diagnose},
        {"kernel", cmd_kernel},       {"lopatinskii", cmd_lopatinskii},
        {"reconstruct", cmd_reconstruct}, {"svd", cmd_svd},
    };
    const std::map<std::string, std::string> descs{
        {"simulate", "solve the quasi-static forward problem per excitation"},
        {"diagnose", "evaluate the reference-state condition maps"},
        {"kernel", "construct the shear-modulus kernel certificate"},
        {"lopatinskii", "boundary covering-condition verdicts per face"},
        {"reconstruct", "regularized least-squares parameter reconstruction"},
        {"svd", "singular-value probe of an assembled linearized system"},
    };
    std::string chosen;
    for (const auto& [name, fn] : handlers) {
        CLI::App* sub = app.add_subcommand(name, descs.at(name));
        add_common(sub, args);
        sub->callback([&chosen, name = name]() { chosen = name; });
    }

    CLI11_PARSE(app, argc, argv);
    try {
        return handlers.at(chosen)(args);
    } catch (const es::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const es::expr::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const es::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const es::SingularStrainError& e) {
        std::cerr << "kernel error: " << e.what() << "\n";
        return kExitSingularStrain;
    } catch (const es::SizeLimitError& e) {
        std::cerr << "svd error: " << e.what() << "\n";
        return kExitSizeLimit;
    } catch (const es::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const es::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
