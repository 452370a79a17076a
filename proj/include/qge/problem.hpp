/// @file problem.hpp
/// @brief Problem data for -Lap u = lambda*c*u + mu(x)*|grad u|^2 + h(x)
///        with zero Dirichlet data, and its standing assumptions.
///
/// Standing assumptions checked at construction: c >= 0 with c not
/// identically zero, and 0 < mu1 <= mu(x) <= mu2 at every node.

#pragma once

#include <optional>
#include <string>
#include <variant>

#include "qge/errors.hpp"
#include "qge/grid.hpp"

namespace qge {

/// Constant gradient coefficient.
struct MuConstant {
    double value = 1.0;
};

/// Nodewise gradient coefficient pinched between explicit bounds.
struct MuField {
    GridFunction field;
    double mu1;
    double mu2;
};

using MuSpec = std::variant<MuConstant, MuField>;

/// Validated problem data tuple (grid, c, h, mu).
class ProblemSpec {
public:
    ProblemSpec(Grid grid, GridFunction c, GridFunction h, MuSpec mu)
        : grid_(std::move(grid)), c_(std::move(c)), h_(std::move(h)), mu_(std::move(mu)) {
        if (c_.grid() != grid_ || h_.grid() != grid_)
            throw shape_error("ProblemSpec: coefficient grids do not match the problem grid");
        if (c_.min_val() < 0.0)
            throw validation_error("ProblemSpec: c must be nonnegative (min " + format_double(c_.min_val()) + ")");
        if (c_.max_val() <= 0.0) throw validation_error("ProblemSpec: c must be positive somewhere");
        if (const auto* mc = std::get_if<MuConstant>(&mu_)) {
            if (!(mc->value > 0.0)) throw validation_error("ProblemSpec: constant mu must be positive");
        } else {
            const auto& mf = std::get<MuField>(mu_);
            if (mf.field.grid() != grid_) throw shape_error("ProblemSpec: mu field lives on a different grid");
            if (!(mf.mu1 > 0.0)) throw validation_error("ProblemSpec: mu1 must be positive");
            if (!(mf.mu1 <= mf.mu2)) throw validation_error("ProblemSpec: mu bounds must satisfy mu1 <= mu2");
            if (mf.field.min_val() < mf.mu1 || mf.field.max_val() > mf.mu2)
                throw validation_error("ProblemSpec: mu(x) leaves its declared bounds [mu1, mu2]");
        }
    }

    const Grid& grid() const { return grid_; }
    const GridFunction& c() const { return c_; }
    const GridFunction& h() const { return h_; }
    const MuSpec& mu() const { return mu_; }

    bool mu_is_constant() const { return std::holds_alternative<MuConstant>(mu_); }

    /// Constant mu value; throws if mu is a field.
    double mu_value() const {
        if (const auto* mc = std::get_if<MuConstant>(&mu_)) return mc->value;
        throw validation_error("ProblemSpec: operation requires constant mu");
    }

    double mu1() const {
        if (const auto* mc = std::get_if<MuConstant>(&mu_)) return mc->value;
        return std::get<MuField>(mu_).mu1;
    }
    double mu2() const {
        if (const auto* mc = std::get_if<MuConstant>(&mu_)) return mc->value;
        return std::get<MuField>(mu_).mu2;
    }

    /// mu as a nodewise field regardless of representation.
    GridFunction mu_field() const {
        if (const auto* mc = std::get_if<MuConstant>(&mu_)) return GridFunction(grid_, mc->value);
        return std::get<MuField>(mu_).field;
    }

    GridFunction h_plus() const { return h_.pos_part(); }
    GridFunction h_minus() const { return h_.neg_part(); }

    /// Same data with h replaced (grids must match).
    ProblemSpec with_h(GridFunction new_h) const { return ProblemSpec(grid_, c_, std::move(new_h), mu_); }

private:
    Grid grid_;
    GridFunction c_;
    GridFunction h_;
    MuSpec mu_;
};

} // namespace qge
