#include <catch2/catch_amalgamated.hpp>

#include "mmot/grid.hpp"
#include "mmot/marginal.hpp"
#include "mmot/sparse_grid.hpp"
#include "mmot/studies.hpp"

#include <memory>

using namespace mmot;

TEST_CASE("uniform grid basics") {
    Grid g = make_uniform(0.0, 1.0, 3);
    REQUIRE(g.points() == std::vector<double>{0.0, 0.5, 1.0});

    Grid g2 = make_uniform(100.0, 300.0, 2);
    REQUIRE(g2.points() == std::vector<double>{100.0, 300.0});
    REQUIRE(g2.diameter() == 200.0);
}

TEST_CASE("uniform grid spacing adds up") {
    // independent check: the gaps of a 150-point grid over [5000, 7000] must
    // sum to the diameter and each equal 2000/149
    Grid g = make_uniform(5000.0, 7000.0, 150);
    REQUIRE(g.size() == 150);
    double gap_sum = 0.0;
    double expect = 2000.0 / 149.0;
    for (int i = 0; i + 1 < g.size(); ++i) {
        double gap = g[i + 1] - g[i];
        gap_sum += gap;
        REQUIRE(gap == Catch::Approx(expect).margin(1e-9));
    }
    REQUIRE(gap_sum == Catch::Approx(2000.0).margin(1e-9));
}

TEST_CASE("uniform grid rejects bad bounds") {
    REQUIRE_THROWS_AS(make_uniform(1.0, 1.0, 5), InvalidBounds);
    REQUIRE_THROWS_AS(make_uniform(2.0, 1.0, 5), InvalidBounds);
    REQUIRE_THROWS_AS(make_uniform(0.0, 1.0, 1), InvalidBounds);
}

namespace {

MarginalSequence two_identical(std::shared_ptr<const Grid> grid, const VectorXd& w) {
    std::vector<Marginal> ms{Marginal(grid, w), Marginal(grid, w)};
    return MarginalSequence(std::move(ms), {0.0, 1.0});
}

}  // namespace

TEST_CASE("sparse grid: nothing passes an infinite threshold") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, 11));
    VectorXd w = VectorXd::Constant(11, 1.0 / 11.0);
    MarginalSequence seq = two_identical(grid, w);
    SparseGridConfig cfg{std::numeric_limits<double>::infinity(), 5};
    REQUIRE_THROWS_AS(make_sparse(seq, cfg), EmptyGrid);
}

TEST_CASE("sparse grid: hand-expanded tree for a central point mass") {
    // 101 points on [0,1]; all mass at 0.5. Cells are right-open, so the atom
    // always lands in the right child; cells without mass score zero and a
    // zero score does not beat tau = 0 (strict inequality).
    //   depth 1: [0,.5) leaf, [.5,1] split
    //   depth 2: [.5,.75) split, [.75,1] leaf
    //   depth 3: [.5,.625), [.625,.75) leaves (depth cap)
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, 101));
    VectorXd w = VectorXd::Zero(101);
    w[50] = 1.0;  // x = 0.5
    MarginalSequence seq = two_identical(grid, w);
    SparseGridConfig cfg{0.0, 3};
    Grid sparse = make_sparse(seq, cfg);
    REQUIRE(sparse.points() == std::vector<double>{0.25, 0.5625, 0.6875, 0.875});
}

TEST_CASE("sparse grid: concentrated mass needs far fewer points than uniform") {
    // 95% of the mass in a band of width D/20; the leaf count must come out
    // at most M/(k/4) = M/5 with slack factor 4 on the complexity claim
    const int m = 400;
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, m));
    VectorXd w(m);
    for (int i = 0; i < m; ++i) {
        double x = (*grid)[i];
        bool in_band = (x >= 0.475 && x < 0.525);
        w[i] = in_band ? 0.95 / 20.0 : 0.05 / 380.0;
    }
    w /= w.sum();
    MarginalSequence seq = two_identical(grid, w);
    SparseGridConfig cfg{4e-3, 12};
    Grid sparse = make_sparse(seq, cfg);
    REQUIRE(sparse.size() >= 2);
    REQUIRE(sparse.size() <= m / 5);
}

TEST_CASE("sparse grid: refinement is nested in the threshold") {
    // lowering tau only adds splits: every leaf boundary of the coarse tree
    // must appear among the boundaries of the finer tree
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, 64));
    MarginalSequence seq = random_convex_sequence(grid, 2, 99);

    auto boundaries = [&](double tau) {
        SparseGridConfig cfg{tau, 8};
        std::vector<double> bounds;
        for (const auto& c : sparse_leaf_cells(seq, cfg)) bounds.push_back(c.lo);
        return bounds;
    };

    auto coarse = boundaries(2e-2);
    auto fine = boundaries(2e-3);
    for (double b : coarse) {
        bool found = false;
        for (double f : fine)
            if (std::abs(f - b) < 1e-12) found = true;
        REQUIRE(found);
    }
    REQUIRE(coarse.size() <= fine.size());
}

TEST_CASE("sparse grid config validation") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, 8));
    VectorXd w = VectorXd::Constant(8, 0.125);
    MarginalSequence seq = two_identical(grid, w);
    REQUIRE_THROWS_AS(make_sparse(seq, SparseGridConfig{-1.0, 3}), InvalidBounds);
    REQUIRE_THROWS_AS(make_sparse(seq, SparseGridConfig{0.0, 31}), InvalidBounds);
}
