#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "elastostab/config.hpp"
#include "elastostab/expr.hpp"
#include "elastostab/io.hpp"

using namespace elastostab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("elastostab_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Expr, BasicArithmetic) {
    auto e = expr::parse("1 + 2*3 - 4/2");
    EXPECT_DOUBLE_EQ(e->eval(0, 0, 0, 0), 5.0);
    EXPECT_DOUBLE_EQ(expr::parse("2^3^2")->eval(0, 0, 0, 0), 512.0);  // right assoc
    EXPECT_DOUBLE_EQ(expr::parse("-x1^2")->eval(3, 0, 0, 0), -9.0);
    EXPECT_DOUBLE_EQ(expr::parse("(1+x2)*(x3-2)")->eval(0, 1, 5, 0), 6.0);
}

TEST(Expr, VariablesAndFunctions) {
    auto e = expr::parse("sin(x1) + cos(x2)*exp(x3) - t");
    EXPECT_NEAR(e->eval(0.5, 0.25, 0.1, 2.0),
                std::sin(0.5) + std::cos(0.25) * std::exp(0.1) - 2.0, 1e-15);
}

TEST(Expr, ScientificNumbers) {
    EXPECT_DOUBLE_EQ(expr::parse("1.5e-3 + 2E2")->eval(0, 0, 0, 0), 0.0015 + 200.0);
}

TEST(Expr, ParseErrors) {
    EXPECT_THROW(expr::parse("1 +"), expr::ParseError);
    EXPECT_THROW(expr::parse("foo(3)"), expr::ParseError);
    EXPECT_THROW(expr::parse("x4"), expr::ParseError);
    EXPECT_THROW(expr::parse("sin 3"), expr::ParseError);
    EXPECT_THROW(expr::parse("(1+2"), expr::ParseError);
    EXPECT_THROW(expr::parse(""), expr::ParseError);
}

TEST(Config, SectionsAndValues) {
    Config cfg = Config::parse_string(R"(
# comment
[grid]
dims = 8
extent = 1 1 1

[material]
mu = 1 + 0.5*sin(x1)   # inline comment

[excitation 1]
F = 0, 0, -1
[excitation 2]
F = sin(x1), 0, 0
)");
    EXPECT_TRUE(cfg.has("grid", "dims"));
    EXPECT_EQ(cfg.get("material", "mu"), "1 + 0.5*sin(x1)");
    EXPECT_EQ(cfg.sections_matching("excitation").size(), 2u);
    EXPECT_THROW(cfg.get("grid", "missing"), ConfigError);
    EXPECT_THROW(Config::parse_string("novalue\n"), ConfigError);
}

TEST(Config, GridAndMaterialConstruction) {
    Config cfg = Config::parse_string(R"(
[grid]
dims = 6 7 8
extent = 1 2 1

[material]
lambda = 0.5
mu = 1 + x1
rho = 2
)");
    Grid g = grid_from_config(cfg);
    EXPECT_EQ(g.dims[1], 7);
    EXPECT_NEAR(g.spacing[1], 2.0 / 6.0, 1e-15);
    MaterialParams p = material_from_config(cfg, g);
    EXPECT_DOUBLE_EQ(p.rho.at(0), 2.0);
    EXPECT_NEAR(p.mu.at(g.flat(5, 0, 0)), 2.0, 1e-12);
}

TEST(Config, VectorSpecRespectsParentheses) {
    Config cfg;
    auto parts = cfg.split_list("sin(x1), (1+x2)*(x3-1), 0");
    ASSERT_EQ(parts.size(), 3u);
    EXPECT_EQ(parts[1], "(1+x2)*(x3-1)");
}

TEST(FieldIo, RoundTripAllKinds) {
    TempDir tmp;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    Grid g({4, 5, 6}, {0.1, 0.2, 0.3}, {-1, 0, 2}, 4, 0.05);

    ScalarField s(g);
    for (auto& v : s.raw()) v = gauss(rng);
    io::write_field(s, tmp.path / "s.field");
    ScalarField s2 = io::read_field<1>(tmp.path / "s.field");
    EXPECT_TRUE(s2.grid() == g);
    for (std::size_t i = 0; i < s.raw().size(); ++i)
        EXPECT_DOUBLE_EQ(s.raw()[i], s2.raw()[i]);  // bit-exact payload

    SymTensorField t(g);
    for (auto& v : t.raw()) v = gauss(rng);
    io::write_field(t, tmp.path / "t.field");
    SymTensorField t2 = io::read_field<6>(tmp.path / "t.field");
    for (std::size_t i = 0; i < t.raw().size(); ++i) EXPECT_DOUBLE_EQ(t.raw()[i], t2.raw()[i]);

    // kind mismatch is rejected
    EXPECT_THROW(io::read_field<3>(tmp.path / "s.field"), IoError);
    EXPECT_THROW(io::read_field<1>(tmp.path / "missing.field"), IoError);
}

TEST(FieldIo, TruncatedFileRejected) {
    TempDir tmp;
    Grid g = Grid::unit_box(4);
    ScalarField s(g, 1.0);
    io::write_field(s, tmp.path / "s.field");
    // chop the payload
    const auto full = fs::file_size(tmp.path / "s.field");
    fs::resize_file(tmp.path / "s.field", full - 16);
    EXPECT_THROW(io::read_field<1>(tmp.path / "s.field"), IoError);
}

TEST(FieldIo, CsvExportShape) {
    TempDir tmp;
    Grid g = Grid::unit_box(3);
    VectorField v(g);
    v.fill(1.25);
    io::write_csv(v, tmp.path / "v.csv");
    std::ifstream in(tmp.path / "v.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x1,x2,x3,v0,v1,v2");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 27);
}

TEST(RoundSig, TwelveDigitStability) {
    EXPECT_EQ(io::round_sig(1.0 / 3.0), io::round_sig(io::round_sig(1.0 / 3.0)));
    EXPECT_DOUBLE_EQ(io::round_sig(0.0), 0.0);
    EXPECT_DOUBLE_EQ(io::round_sig(-2.5), -2.5);
    const double x = 1.23456789012345e-7;
    EXPECT_NEAR(io::round_sig(x), x, 1e-18);
}

TEST(ScalarFieldSpec, FileReferenceAndExpression) {
    TempDir tmp;
    Grid g = Grid::unit_box(4);
    ScalarField s(g, 3.5);
    io::write_field(s, tmp.path / "f.field");
    std::ofstream(tmp.path / "c.cfg") << "[grid]\ndims = 4\nextent = 1\n";
    Config cfg = Config::parse_file(tmp.path / "c.cfg");
    ScalarField loaded = scalar_field_from_spec(cfg, g, "@f.field");
    EXPECT_DOUBLE_EQ(loaded.at(5), 3.5);
    ScalarField expr_field = scalar_field_from_spec(cfg, g, "x1 + 1");
    EXPECT_NEAR(expr_field.at(g.flat(3, 0, 0)), 2.0, 1e-14);
    EXPECT_THROW(scalar_field_from_spec(cfg, g, "@missing.field"), ConfigError);
    EXPECT_THROW(scalar_field_from_spec(cfg, g, "x1 +"), ConfigError);
}
