#pragma once

#include "mmot/common.hpp"

#include <algorithm>
#include <vector>

namespace mmot {

// Ordered 1-D state space. Points are strictly increasing; the diameter is
// hi - lo and is used as the domain constant D throughout.
class Grid {
   public:
    Grid() = default;

    explicit Grid(std::vector<double> pts) : points_(std::move(pts)) {
        if (points_.size() < 2) throw InvalidBounds("grid needs at least 2 points");
        for (size_t i = 1; i < points_.size(); ++i)
            if (!(points_[i] > points_[i - 1]))
                throw InvalidBounds("grid points must be strictly increasing");
    }

    const std::vector<double>& points() const { return points_; }
    int size() const { return static_cast<int>(points_.size()); }
    double lo() const { return points_.front(); }
    double hi() const { return points_.back(); }
    double diameter() const { return hi() - lo(); }
    double operator[](int i) const { return points_[static_cast<size_t>(i)]; }

    VectorXd as_vector() const {
        return Eigen::Map<const VectorXd>(points_.data(), static_cast<Eigen::Index>(points_.size()));
    }

    // width of the cell around point i (half-gaps to neighbours, one-sided at the ends)
    double cell_width(int i) const {
        const int m = size();
        if (m == 2) return 0.5 * diameter();
        if (i == 0) return 0.5 * (points_[1] - points_[0]);
        if (i == m - 1) return 0.5 * (points_[m - 1] - points_[m - 2]);
        return 0.5 * (points_[static_cast<size_t>(i) + 1] - points_[static_cast<size_t>(i) - 1]);
    }

    bool operator==(const Grid& o) const { return points_ == o.points_; }

   private:
    std::vector<double> points_;
};

inline Grid make_uniform(double lo, double hi, int m) {
    if (!(lo < hi)) throw InvalidBounds("make_uniform: lo must be < hi");
    if (m < 2) throw InvalidBounds("make_uniform: need at least 2 points");
    std::vector<double> pts(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i)
        pts[static_cast<size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (m - 1);
    pts.front() = lo;
    pts.back() = hi;
    return Grid(std::move(pts));
}

struct SparseGridConfig {
    double threshold = 0.0;  // tau; a cell is split iff score(cell) > tau
    int max_depth = 10;

    void validate() const {
        if (threshold < 0.0) throw InvalidBounds("sparse grid: threshold must be >= 0");
        if (max_depth < 0) throw InvalidBounds("sparse grid: max_depth must be >= 0");
        if (max_depth > 30) throw InvalidBounds("sparse grid: max_depth capped at 30");
    }
};

}  // namespace mmot
