#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace elastostab {

using index_t = std::int64_t;

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct GridError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

/// Regular 3D sampling lattice, optionally carrying a series of time
/// snapshots. snapshots == 0 means a single quasi-static state.
struct Grid {
    std::array<index_t, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{0, 0, 0};
    std::array<double, 3> origin{0, 0, 0};
    index_t snapshots = 0;
    double dt = 0.0;

    Grid() = default;
    Grid(std::array<index_t, 3> d, std::array<double, 3> h,
         std::array<double, 3> o = {0, 0, 0}, index_t snaps = 0, double step = 0.0)
        : dims(d), spacing(h), origin(o), snapshots(snaps), dt(step) {
        validate();
    }

    /// Unit box [0,1]^3 with n points per axis.
    static Grid unit_box(index_t n, index_t snaps = 0, double step = 0.0) {
        double h = 1.0 / double(n - 1);
        return Grid({n, n, n}, {h, h, h}, {0, 0, 0}, snaps, step);
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 3) throw GridError("grid dims must be >= 3 per axis");
            if (!(spacing[a] > 0)) throw GridError("grid spacing must be positive");
        }
        if (snapshots < 0) throw GridError("snapshot count must be nonnegative");
        if (snapshots >= 3 && !(dt > 0)) throw GridError("dt must be positive with >= 3 snapshots");
    }

    index_t points() const { return dims[0] * dims[1] * dims[2]; }
    index_t snapshot_count() const { return snapshots == 0 ? 1 : snapshots; }
    bool dynamic() const { return snapshots >= 3; }

    index_t flat(index_t i, index_t j, index_t k) const {
        return i + dims[0] * (j + dims[1] * k);
    }
    std::array<index_t, 3> unflat(index_t p) const {
        index_t i = p % dims[0];
        index_t j = (p / dims[0]) % dims[1];
        index_t k = p / (dims[0] * dims[1]);
        return {i, j, k};
    }

    std::array<double, 3> point(index_t i, index_t j, index_t k) const {
        return {origin[0] + spacing[0] * double(i), origin[1] + spacing[1] * double(j),
                origin[2] + spacing[2] * double(k)};
    }
    std::array<double, 3> point(index_t p) const {
        auto ijk = unflat(p);
        return point(ijk[0], ijk[1], ijk[2]);
    }
    double time_of(index_t snap) const { return dt * double(snap); }

    bool on_boundary(index_t i, index_t j, index_t k) const {
        return i == 0 || j == 0 || k == 0 || i == dims[0] - 1 || j == dims[1] - 1 ||
               k == dims[2] - 1;
    }
    bool on_boundary(index_t p) const {
        auto ijk = unflat(p);
        return on_boundary(ijk[0], ijk[1], ijk[2]);
    }

    double cell_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

    /// True if physical coordinates lie inside the grid box (small slack
    /// for roundoff at the faces).
    bool contains(const std::array<double, 3>& x) const {
        for (int a = 0; a < 3; ++a) {
            double lo = origin[a], hi = origin[a] + spacing[a] * double(dims[a] - 1);
            double slack = 1e-12 * (hi - lo);
            if (x[a] < lo - slack || x[a] > hi + slack) return false;
        }
        return true;
    }

    bool operator==(const Grid& o) const {
        return dims == o.dims && spacing == o.spacing && origin == o.origin &&
               snapshots == o.snapshots && dt == o.dt;
    }
    bool operator!=(const Grid& o) const { return !(*this == o); }
};

/// Index of the (i,j) entry of a symmetric 3x3 tensor in the packed order
/// (11,22,33,12,13,23).
inline int sym_index(int i, int j) {
    if (i == j) return i;
    int a = i < j ? i : j, b = i < j ? j : i;
    if (a == 0 && b == 1) return 3;
    if (a == 0 && b == 2) return 4;
    return 5;
}

/// Grid-sampled field with NC components per point. Layout: the flat data
/// array runs x fastest, then y, z, then component, then snapshot.
template <int NC>
class FieldT {
  public:
    static constexpr int components = NC;

    FieldT() = default;
    explicit FieldT(const Grid& g, double init = 0.0)
        : grid_(g), data_(std::size_t(g.points() * NC * g.snapshot_count()), init) {}

    const Grid& grid() const { return grid_; }
    index_t size() const { return index_t(data_.size()); }

    double& at(index_t pt, int comp = 0, index_t snap = 0) {
        return data_[std::size_t(offset(pt, comp, snap))];
    }
    double at(index_t pt, int comp = 0, index_t snap = 0) const {
        return data_[std::size_t(offset(pt, comp, snap))];
    }
    double& at3(index_t i, index_t j, index_t k, int comp = 0, index_t snap = 0) {
        return at(grid_.flat(i, j, k), comp, snap);
    }
    double at3(index_t i, index_t j, index_t k, int comp = 0, index_t snap = 0) const {
        return at(grid_.flat(i, j, k), comp, snap);
    }

    /// Pointer to the contiguous block of one component at one snapshot.
    double* component(int comp, index_t snap = 0) {
        return data_.data() + offset(0, comp, snap);
    }
    const double* component(int comp, index_t snap = 0) const {
        return data_.data() + offset(0, comp, snap);
    }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    FieldT& operator*=(double c) {
        for (auto& v : data_) v *= c;
        return *this;
    }
    FieldT& operator+=(const FieldT& o) {
        require(grid_ == o.grid_, "field grid mismatch");
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
        return *this;
    }
    FieldT& operator-=(const FieldT& o) {
        require(grid_ == o.grid_, "field grid mismatch");
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= o.data_[n];
        return *this;
    }

    double max_abs() const {
        double m = 0;
        for (double v : data_) m = std::abs(v) > m ? std::abs(v) : m;
        return m;
    }

  private:
    index_t offset(index_t pt, int comp, index_t snap) const {
        return pt + grid_.points() * (index_t(comp) + NC * snap);
    }

    Grid grid_;
    std::vector<double> data_;
};

using ScalarField = FieldT<1>;
using VectorField = FieldT<3>;
using SymTensorField = FieldT<6>;

/// Pointwise product of a scalar field with a multi-component field.
template <int NC>
FieldT<NC> scaled_by(const FieldT<NC>& f, const ScalarField& s) {
    require(f.grid() == s.grid(), "field grid mismatch");
    FieldT<NC> out(f.grid());
    const index_t n = f.grid().points();
    for (index_t snap = 0; snap < f.grid().snapshot_count(); ++snap)
        for (int c = 0; c < NC; ++c)
            for (index_t p = 0; p < n; ++p)
                out.at(p, c, snap) = f.at(p, c, snap) * s.at(p, 0, snap);
    return out;
}

}  // namespace elastostab
