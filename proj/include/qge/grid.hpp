/// @file grid.hpp
/// @brief Uniform Dirichlet grids on intervals and rectangles, plus the
///        nodal functions living on them.
///
/// Interior nodes only: boundary values are identically zero and never
/// stored. 1D intervals are centered (x in ]-L/2, L/2[); rectangles sit at
/// ]0,Lx[ x ]0,Ly[. 2D node ordering is lexicographic with x fastest:
/// k = iy*n + ix.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qge/errors.hpp"

namespace qge {

/// Centered open interval ]-length/2, length/2[.
struct Interval {
    double length = 1.0;
};

/// Open rectangle ]0,lx[ x ]0,ly[.
struct Rectangle {
    double lx = 1.0;
    double ly = 1.0;
};

using Domain = std::variant<Interval, Rectangle>;

/// Uniform grid of interior nodes with n nodes per axis.
///
/// Spacing is length/(n+1) per axis; for squares (and all 1D grids) the two
/// spacings coincide and spacing() returns the common value.
class Grid {
public:
    Grid(Domain domain, int n) : domain_(domain), n_(n) {
        if (n < 3) throw validation_error("Grid: need at least 3 interior nodes per axis, got " + std::to_string(n));
        if (const auto* iv = std::get_if<Interval>(&domain_)) {
            if (!(iv->length > 0.0)) throw validation_error("Grid: interval length must be positive");
            dim_ = 1;
            hx_ = iv->length / (n_ + 1);
            hy_ = hx_;
        } else {
            const auto& rc = std::get<Rectangle>(domain_);
            if (!(rc.lx > 0.0) || !(rc.ly > 0.0)) throw validation_error("Grid: rectangle side lengths must be positive");
            dim_ = 2;
            hx_ = rc.lx / (n_ + 1);
            hy_ = rc.ly / (n_ + 1);
        }
    }

    int n() const { return n_; }
    int dim() const { return dim_; }
    Eigen::Index size() const { return dim_ == 1 ? n_ : Eigen::Index(n_) * n_; }
    double hx() const { return hx_; }
    double hy() const { return hy_; }

    /// Common spacing; only meaningful when the two axis spacings agree.
    double spacing() const { return hx_; }

    const Domain& domain() const { return domain_; }

    /// Node coordinates for flat index k.
    double x(Eigen::Index k) const {
        if (dim_ == 1) return -std::get<Interval>(domain_).length / 2.0 + (double(k) + 1.0) * hx_;
        return (double(k % n_) + 1.0) * hx_;
    }
    double y(Eigen::Index k) const {
        if (dim_ == 1) throw validation_error("Grid: y coordinate requested on a 1D grid");
        return (double(k / n_) + 1.0) * hy_;
    }

    bool operator==(const Grid& other) const {
        if (dim_ != other.dim_ || n_ != other.n_) return false;
        if (dim_ == 1)
            return std::get<Interval>(domain_).length == std::get<Interval>(other.domain_).length;
        const auto& a = std::get<Rectangle>(domain_);
        const auto& b = std::get<Rectangle>(other.domain_);
        return a.lx == b.lx && a.ly == b.ly;
    }
    bool operator!=(const Grid& other) const { return !(*this == other); }

private:
    Domain domain_;
    int n_;
    int dim_;
    double hx_, hy_;
};

/// Nodal function over the interior nodes of a grid (zero on the boundary).
class GridFunction {
public:
    explicit GridFunction(const Grid& grid, double constant = 0.0)
        : grid_(grid), v_(Eigen::VectorXd::Constant(grid.size(), constant)) {}

    GridFunction(const Grid& grid, Eigen::VectorXd values) : grid_(grid), v_(std::move(values)) {
        if (v_.size() != grid_.size())
            throw shape_error("GridFunction: value vector has " + std::to_string(v_.size()) +
                              " entries, grid has " + std::to_string(grid_.size()) + " nodes");
    }

    /// Tabulate f(x) on a 1D grid.
    GridFunction(const Grid& grid, const std::function<double(double)>& f) : grid_(grid), v_(grid.size()) {
        if (grid_.dim() != 1) throw validation_error("GridFunction: single-variable callable needs a 1D grid");
        for (Eigen::Index k = 0; k < v_.size(); ++k) v_[k] = f(grid_.x(k));
    }

    /// Tabulate f(x,y) on a 2D grid.
    GridFunction(const Grid& grid, const std::function<double(double, double)>& f) : grid_(grid), v_(grid.size()) {
        if (grid_.dim() != 2) throw validation_error("GridFunction: two-variable callable needs a 2D grid");
        for (Eigen::Index k = 0; k < v_.size(); ++k) v_[k] = f(grid_.x(k), grid_.y(k));
    }

    const Grid& grid() const { return grid_; }
    const Eigen::VectorXd& values() const { return v_; }
    Eigen::VectorXd& values() { return v_; }
    Eigen::Index size() const { return v_.size(); }
    double operator[](Eigen::Index k) const { return v_[k]; }
    double& operator[](Eigen::Index k) { return v_[k]; }

    double sup_norm() const { return v_.size() ? v_.cwiseAbs().maxCoeff() : 0.0; }
    double min_val() const { return v_.minCoeff(); }
    double max_val() const { return v_.maxCoeff(); }

    /// Positive part max(u,0).
    GridFunction pos_part() const { return GridFunction(grid_, v_.cwiseMax(0.0)); }
    /// Negative part max(-u,0), so that u = pos_part() - neg_part().
    GridFunction neg_part() const { return GridFunction(grid_, (-v_).cwiseMax(0.0)); }

    /// Nodewise map by a scalar function.
    GridFunction map(const std::function<double(double)>& f) const {
        Eigen::VectorXd out(v_.size());
        for (Eigen::Index k = 0; k < v_.size(); ++k) out[k] = f(v_[k]);
        return GridFunction(grid_, std::move(out));
    }

    GridFunction operator-() const { return GridFunction(grid_, -v_); }

    GridFunction& operator+=(const GridFunction& o) {
        check_same_grid(o);
        v_ += o.v_;
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o) {
        check_same_grid(o);
        v_ -= o.v_;
        return *this;
    }
    GridFunction& operator*=(double s) {
        v_ *= s;
        return *this;
    }

    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
    friend GridFunction operator*(GridFunction a, double s) { return a *= s; }

    /// Nodewise product.
    GridFunction cwise_mul(const GridFunction& o) const {
        check_same_grid(o);
        return GridFunction(grid_, v_.cwiseProduct(o.v_));
    }

    void check_same_grid(const GridFunction& o) const {
        if (grid_ != o.grid_) throw shape_error("GridFunction: operands live on different grids");
    }

private:
    Grid grid_;
    Eigen::VectorXd v_;
};

/// Trapezoid quadrature with the zero boundary rows folded in: weight h per
/// interior node (hx*hy in 2D). Exact for constants up to the boundary cells.
inline double integrate(const GridFunction& u) {
    const Grid& g = u.grid();
    const double w = g.dim() == 1 ? g.hx() : g.hx() * g.hy();
    return w * u.values().sum();
}

/// Squared gradient magnitude by central differences, using the zero
/// boundary values at the first/last interior nodes. Second-order accurate.
inline GridFunction gradient_sq(const GridFunction& u) {
    const Grid& g = u.grid();
    const Eigen::VectorXd& v = u.values();
    Eigen::VectorXd out(v.size());
    const int n = g.n();
    if (g.dim() == 1) {
        const double inv2h = 1.0 / (2.0 * g.hx());
        for (int i = 0; i < n; ++i) {
            const double left = i > 0 ? v[i - 1] : 0.0;
            const double right = i < n - 1 ? v[i + 1] : 0.0;
            const double d = (right - left) * inv2h;
            out[i] = d * d;
        }
    } else {
        const double inv2hx = 1.0 / (2.0 * g.hx());
        const double inv2hy = 1.0 / (2.0 * g.hy());
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                const Eigen::Index k = Eigen::Index(iy) * n + ix;
                const double xl = ix > 0 ? v[k - 1] : 0.0;
                const double xr = ix < n - 1 ? v[k + 1] : 0.0;
                const double yl = iy > 0 ? v[k - n] : 0.0;
                const double yr = iy < n - 1 ? v[k + n] : 0.0;
                const double dx = (xr - xl) * inv2hx;
                const double dy = (yr - yl) * inv2hy;
                out[k] = dx * dx + dy * dy;
            }
        }
    }
    return GridFunction(g, std::move(out));
}

/// Result of the strict-ordering test u << v (v - u >= eps * phi1).
struct StrictOrder {
    double epsilon = 0.0; ///< largest eps >= 0 with v - u >= eps*phi1 nodewise
    bool holds = false;   ///< true iff v - u is strictly above 0 in the phi1 gauge
};

/// Largest eps >= 0 with v - u >= eps*phi1 at every node; holds iff the
/// un-clamped ratio is strictly positive (so a single node with v <= u
/// reports eps = 0, holds = false).
inline StrictOrder strictly_below(const GridFunction& u, const GridFunction& v, const GridFunction& phi1) {
    u.check_same_grid(v);
    u.check_same_grid(phi1);
    if (phi1.min_val() <= 0.0) throw validation_error("strictly_below: gauge function must be positive at every node");
    double ratio_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < u.size(); ++k) ratio_min = std::min(ratio_min, (v[k] - u[k]) / phi1[k]);
    StrictOrder res;
    res.epsilon = std::max(0.0, ratio_min);
    res.holds = ratio_min > 0.0;
    return res;
}

/// Shortest-width decimal formatting that round-trips doubles exactly.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

/// Write "index,x[,y],value" rows (17 significant digits, LF endings).
inline void write_csv(const std::string& path, const GridFunction& u) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("write_csv: cannot open '" + path + "' for writing");
    const Grid& g = u.grid();
    if (g.dim() == 1) {
        out << "index,x,value\n";
        for (Eigen::Index k = 0; k < u.size(); ++k)
            out << k << ',' << format_double(g.x(k)) << ',' << format_double(u[k]) << '\n';
    } else {
        out << "index,x,y,value\n";
        for (Eigen::Index k = 0; k < u.size(); ++k)
            out << k << ',' << format_double(g.x(k)) << ',' << format_double(g.y(k)) << ',' << format_double(u[k]) << '\n';
    }
    if (!out) throw validation_error("write_csv: write to '" + path + "' failed");
}

/// Read a GridFunction written by write_csv; validates the header, the index
/// sequence and the node coordinates against the expected grid.
inline GridFunction read_csv(const Grid& grid, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("read_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw validation_error("read_csv: '" + path + "' is empty");
    const std::string want_header = grid.dim() == 1 ? "index,x,value" : "index,x,y,value";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != want_header)
        throw validation_error("read_csv: '" + path + "' header is '" + line + "', expected '" + want_header + "'");
    Eigen::VectorXd v(grid.size());
    Eigen::Index row = 0;
    const double coord_tol = 1e-12 * (1.0 + std::abs(grid.x(grid.size() - 1)));
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row >= grid.size()) throw validation_error("read_csv: '" + path + "' has more rows than grid nodes");
        std::istringstream ss(line);
        std::string field;
        auto next = [&]() {
            if (!std::getline(ss, field, ',')) throw validation_error("read_csv: short row in '" + path + "'");
            return field;
        };
        const long idx = std::stol(next());
        if (idx != row) throw validation_error("read_csv: '" + path + "' index " + std::to_string(idx) +
                                               " out of order at row " + std::to_string(row));
        const double xv = std::stod(next());
        if (std::abs(xv - grid.x(row)) > coord_tol)
            throw validation_error("read_csv: '" + path + "' x coordinate mismatch at row " + std::to_string(row) +
                                   " (file " + format_double(xv) + ", grid " + format_double(grid.x(row)) + ")");
        if (grid.dim() == 2) {
            const double yv = std::stod(next());
            if (std::abs(yv - grid.y(row)) > coord_tol)
                throw validation_error("read_csv: '" + path + "' y coordinate mismatch at row " + std::to_string(row));
        }
        const double val = std::stod(next());
        if (!std::isfinite(val)) throw validation_error("read_csv: non-finite value at row " + std::to_string(row));
        v[row] = val;
        ++row;
    }
    if (row != grid.size())
        throw validation_error("read_csv: '" + path + "' has " + std::to_string(row) + " rows, grid needs " +
                               std::to_string(grid.size()));
    return GridFunction(grid, std::move(v));
}

} // namespace qge
