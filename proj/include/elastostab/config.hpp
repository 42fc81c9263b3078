#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "elastostab/analytic.hpp"
#include "elastostab/elasticity.hpp"
#include "elastostab/expr.hpp"
#include "elastostab/io.hpp"

namespace elastostab {

struct ConfigError : Error {
    using Error::Error;
};

/// Key-value configuration with [section] headers, '#' comments and
/// "[section N]" repetition for per-measurement blocks.
class Config {
  public:
    static Config parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config: " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        Config c = parse_string(ss.str());
        c.base_dir_ = path.parent_path();
        return c;
    }

    static Config parse_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                const auto e = s.find_last_not_of(" \t\r");
                return s.substr(b, e - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("malformed section header at line " +
                                      std::to_string(lineno));
                section = trim(line.substr(1, line.size() - 2));
                cfg.section_order_.push_back(section);
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected key = value at line " + std::to_string(lineno));
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("empty key at line " + std::to_string(lineno));
            cfg.values_[section][key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = values_.find(section);
        return s != values_.end() && s->second.count(key) > 0;
    }
    bool has_section(const std::string& section) const { return values_.count(section) > 0; }

    std::string get(const std::string& section, const std::string& key) const {
        auto s = values_.find(section);
        if (s == values_.end() || !s->second.count(key))
            throw ConfigError("missing config key [" + section + "] " + key);
        return s->second.at(key);
    }
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& dflt) const {
        return has(section, key) ? get(section, key) : dflt;
    }

    double get_double(const std::string& section, const std::string& key) const {
        try {
            return std::stod(get(section, key));
        } catch (const std::exception&) {
            throw ConfigError("not a number: [" + section + "] " + key);
        }
    }
    index_t get_int(const std::string& section, const std::string& key) const {
        try {
            return std::stoll(get(section, key));
        } catch (const std::exception&) {
            throw ConfigError("not an integer: [" + section + "] " + key);
        }
    }

    std::vector<std::string> split_list(const std::string& v, char sep = ',') const {
        std::vector<std::string> out;
        std::string cur;
        int depth = 0;
        for (char c : v) {
            if (c == '(') ++depth;
            if (c == ')') --depth;
            if (c == sep && depth == 0) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        out.push_back(cur);
        for (auto& s : out) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
        }
        return out;
    }

    /// Sections named "base" or "base N", in file order.
    std::vector<std::string> sections_matching(const std::string& base) const {
        std::vector<std::string> out;
        for (const auto& s : section_order_)
            if (s == base || (s.rfind(base + " ", 0) == 0)) out.push_back(s);
        return out;
    }

    const std::filesystem::path& base_dir() const { return base_dir_; }

  private:
    std::map<std::string, std::map<std::string, std::string>> values_;
    std::vector<std::string> section_order_;
    std::filesystem::path base_dir_;
};

/// Grid parsed from [grid]: dims (3 ints), either spacing (3 reals) or
/// extent (3 reals, converted to spacing), origin, snapshots, dt.
inline Grid grid_from_config(const Config& cfg) {
    auto dims_s = cfg.split_list(cfg.get("grid", "dims"), ' ');
    dims_s.erase(std::remove(dims_s.begin(), dims_s.end(), std::string()), dims_s.end());
    if (dims_s.size() == 1) dims_s = {dims_s[0], dims_s[0], dims_s[0]};
    if (dims_s.size() != 3) throw ConfigError("[grid] dims needs 1 or 3 integers");
    std::array<index_t, 3> dims;
    for (int a = 0; a < 3; ++a) dims[std::size_t(a)] = std::stoll(dims_s[std::size_t(a)]);

    std::array<double, 3> spacing;
    if (cfg.has("grid", "spacing")) {
        auto sp = cfg.split_list(cfg.get("grid", "spacing"), ' ');
        sp.erase(std::remove(sp.begin(), sp.end(), std::string()), sp.end());
        if (sp.size() == 1) sp = {sp[0], sp[0], sp[0]};
        if (sp.size() != 3) throw ConfigError("[grid] spacing needs 1 or 3 reals");
        for (int a = 0; a < 3; ++a) spacing[std::size_t(a)] = std::stod(sp[std::size_t(a)]);
    } else {
        auto ex = cfg.split_list(cfg.get_or("grid", "extent", "1 1 1"), ' ');
        ex.erase(std::remove(ex.begin(), ex.end(), std::string()), ex.end());
        if (ex.size() == 1) ex = {ex[0], ex[0], ex[0]};
        for (int a = 0; a < 3; ++a)
            spacing[std::size_t(a)] = std::stod(ex[std::size_t(a)]) / double(dims[std::size_t(a)] - 1);
    }
    std::array<double, 3> origin{0, 0, 0};
    if (cfg.has("grid", "origin")) {
        auto og = cfg.split_list(cfg.get("grid", "origin"), ' ');
        og.erase(std::remove(og.begin(), og.end(), std::string()), og.end());
        for (int a = 0; a < 3 && a < int(og.size()); ++a)
            origin[std::size_t(a)] = std::stod(og[std::size_t(a)]);
    }
    const index_t snaps = cfg.has("grid", "snapshots") ? cfg.get_int("grid", "snapshots") : 0;
    const double dt = cfg.has("grid", "dt") ? cfg.get_double("grid", "dt") : 0.0;
    return Grid(dims, spacing, origin, snaps, dt);
}

/// Scalar field from a spec string: a constant, an expression over
/// x1,x2,x3,t, or "@file" referring to a stored field.
inline ScalarField scalar_field_from_spec(const Config& cfg, const Grid& g,
                                          const std::string& spec) {
    if (!spec.empty() && spec.front() == '@') {
        const std::filesystem::path p = cfg.base_dir() / spec.substr(1);
        if (!std::filesystem::exists(p)) throw ConfigError("field file not found: " + p.string());
        ScalarField f = io::read_field<1>(p);
        require(f.grid() == g, "field file grid mismatch: " + p.string());
        return f;
    }
    expr::ExprPtr e;
    try {
        e = expr::parse(spec);
    } catch (const expr::ParseError& err) {
        throw ConfigError(std::string("bad field expression: ") + err.what());
    }
    return sample_scalar(g, [e](double a, double b, double c, double t) {
        return e->eval(a, b, c, t);
    });
}

inline VectorField vector_field_from_spec(const Config& cfg, const Grid& g,
                                          const std::string& spec) {
    if (!spec.empty() && spec.front() == '@') {
        const std::filesystem::path p = cfg.base_dir() / spec.substr(1);
        if (!std::filesystem::exists(p)) throw ConfigError("field file not found: " + p.string());
        VectorField f = io::read_field<3>(p);
        require(f.grid() == g, "field file grid mismatch: " + p.string());
        return f;
    }
    auto parts = cfg.split_list(spec);
    if (parts.size() != 3) throw ConfigError("vector spec needs 3 comma-separated expressions");
    std::array<expr::ExprPtr, 3> es;
    for (int c = 0; c < 3; ++c) {
        try {
            es[std::size_t(c)] = expr::parse(parts[std::size_t(c)]);
        } catch (const expr::ParseError& err) {
            throw ConfigError(std::string("bad vector expression: ") + err.what());
        }
    }
    return sample_vector(
        g, [e = es[0]](double a, double b, double c, double t) { return e->eval(a, b, c, t); },
        [e = es[1]](double a, double b, double c, double t) { return e->eval(a, b, c, t); },
        [e = es[2]](double a, double b, double c, double t) { return e->eval(a, b, c, t); });
}

inline MaterialParams material_from_config(const Config& cfg, const Grid& g) {
    MaterialParams p{scalar_field_from_spec(cfg, g, cfg.get_or("material", "lambda", "1")),
                     scalar_field_from_spec(cfg, g, cfg.get_or("material", "mu", "1")),
                     scalar_field_from_spec(cfg, g, cfg.get_or("material", "rho", "1"))};
    p.validate();
    return p;
}

/// Displacements either from [state] u = expr triples (one section per
/// measurement) or from field files written by a previous simulate run.
inline std::vector<VectorField> displacements_from_config(const Config& cfg, const Grid& g) {
    std::vector<VectorField> us;
    if (cfg.has_section("state") || !cfg.sections_matching("state").empty()) {
        for (const auto& sec : cfg.sections_matching("state")) {
            if (cfg.has(sec, "u")) us.push_back(vector_field_from_spec(cfg, g, cfg.get(sec, "u")));
            else if (cfg.has(sec, "dir")) {
                const std::filesystem::path dir = cfg.base_dir() / cfg.get(sec, "dir");
                for (int k = 0;; ++k) {
                    const auto p = dir / ("u" + std::to_string(k) + ".field");
                    if (!std::filesystem::exists(p)) break;
                    VectorField u = io::read_field<3>(p);
                    require(u.grid() == g, "stored displacement grid mismatch");
                    us.push_back(std::move(u));
                }
            }
        }
    }
    return us;
}

}  // namespace elastostab
