#pragma once

#include <functional>

#include "elastostab/grid.hpp"

namespace elastostab {

/// Sample an analytic function of (x1,x2,x3,t) onto every grid point and
/// snapshot of one field component.
using SpaceTimeFn = std::function<double(double, double, double, double)>;

template <int NC>
FieldT<NC> sample(const Grid& g, const std::array<SpaceTimeFn, std::size_t(NC)>& fns) {
    FieldT<NC> f(g);
    for (index_t s = 0; s < g.snapshot_count(); ++s) {
        const double t = g.time_of(s);
        for (index_t p = 0; p < g.points(); ++p) {
            auto x = g.point(p);
            for (int c = 0; c < NC; ++c) f.at(p, c, s) = fns[std::size_t(c)](x[0], x[1], x[2], t);
        }
    }
    return f;
}

inline ScalarField sample_scalar(const Grid& g, const SpaceTimeFn& f) {
    return sample<1>(g, {f});
}

inline VectorField sample_vector(const Grid& g, const SpaceTimeFn& f1, const SpaceTimeFn& f2,
                                 const SpaceTimeFn& f3) {
    return sample<3>(g, {f1, f2, f3});
}

}  // namespace elastostab
