#include <catch2/catch_amalgamated.hpp>

#include "mmot/marginal.hpp"
#include "mmot/studies.hpp"

#include <cmath>
#include <memory>

using namespace mmot;

namespace {

// discretized lognormal with unit mean, exact after tilting
Marginal lognormal_marginal(std::shared_ptr<const Grid> grid, double sig) {
    const Grid& g = *grid;
    VectorXd w(g.size());
    double mu = -0.5 * sig * sig;
    for (int i = 0; i < g.size(); ++i) {
        double x = g[i];
        double z = (std::log(x) - mu) / sig;
        w[i] = std::exp(-0.5 * z * z) / x * g.cell_width(i);
    }
    w /= w.sum();
    return Marginal(grid, w).tilted_to_mean(1.0);
}

}  // namespace

TEST_CASE("marginal basics and validation") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, 3));
    VectorXd w(3);
    w << 0.25, 0.5, 0.25;
    Marginal m(grid, w);
    REQUIRE(m.mean() == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(m.call_price(0.5) == Catch::Approx(0.125).margin(1e-15));

    VectorXd bad(3);
    bad << 0.5, -0.1, 0.6;
    REQUIRE_THROWS_AS(Marginal(grid, bad), ValidationError);
    VectorXd wrong(2);
    wrong << 0.5, 0.5;
    REQUIRE_THROWS_AS(Marginal(grid, wrong), GridMismatch);
}

TEST_CASE("convex order: identical marginals pass") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 2.0, 21));
    VectorXd w = VectorXd::Constant(21, 1.0 / 21.0);
    std::vector<Marginal> ms{Marginal(grid, w), Marginal(grid, w)};
    MarginalSequence seq(std::move(ms), {0.0, 1.0});
    REQUIRE(check_convex_order(seq, 1e-12).ok);
}

TEST_CASE("convex order: lognormal family with growing variance passes") {
    auto grid = std::make_shared<Grid>(make_uniform(0.4, 2.0, 50));
    std::vector<Marginal> ms{lognormal_marginal(grid, 0.10), lognormal_marginal(grid, 0.16),
                             lognormal_marginal(grid, 0.22)};
    MarginalSequence seq(std::move(ms), {0.1, 0.2, 0.3});
    ConvexOrderReport rep = check_convex_order(seq, 1e-10);
    CAPTURE(rep.worst_violation, rep.worst_strike);
    REQUIRE(rep.ok);
}

TEST_CASE("convex order: collapsing to a point mass fails") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 2.0, 21));
    VectorXd spread = VectorXd::Zero(21), point = VectorXd::Zero(21);
    spread[5] = 0.5;
    spread[15] = 0.5;  // mean = 1.0
    point[10] = 1.0;   // point mass at the mean
    std::vector<Marginal> ms{Marginal(grid, spread), Marginal(grid, point)};
    MarginalSequence seq(std::move(ms), {0.0, 1.0});
    ConvexOrderReport rep = check_convex_order(seq, 1e-10);
    REQUIRE_FALSE(rep.ok);
    REQUIRE(rep.worst_violation > 0.1);
}

TEST_CASE("convex order: unequal means are flagged") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 2.0, 21));
    VectorXd a = VectorXd::Zero(21), b = VectorXd::Zero(21);
    a[10] = 1.0;
    b[12] = 1.0;
    std::vector<Marginal> ms{Marginal(grid, a), Marginal(grid, b)};
    MarginalSequence seq(std::move(ms), {0.0, 1.0});
    REQUIRE_FALSE(check_convex_order(seq, 1e-10).ok);
}

TEST_CASE("wasserstein1 closed form") {
    auto grid = std::make_shared<Grid>(make_uniform(0.0, 1.0, 2));
    VectorXd d0(2), d1(2);
    d0 << 1.0, 0.0;
    d1 << 0.0, 1.0;
    Marginal a(grid, d0), b(grid, d1);
    REQUIRE(wasserstein1(a, a) == 0.0);
    REQUIRE(wasserstein1(a, b) == Catch::Approx(1.0).margin(1e-15));

    auto other = std::make_shared<Grid>(make_uniform(0.0, 1.0, 3));
    VectorXd w3 = VectorXd::Constant(3, 1.0 / 3.0);
    REQUIRE_THROWS_AS(wasserstein1(a, Marginal(other, w3)), GridMismatch);
}

TEST_CASE("wasserstein1 is translation-consistent across resolutions") {
    // uniform on (0,1) vs uniform on (0.1, 1.1): W1 = 0.1 up to grid error
    for (int m : {40, 80, 160}) {
        auto grid = std::make_shared<Grid>(make_uniform(-0.1, 1.2, m));
        const Grid& g = *grid;
        VectorXd a = VectorXd::Zero(m), b = VectorXd::Zero(m);
        for (int i = 0; i < m; ++i) {
            if (g[i] > 0.0 && g[i] < 1.0) a[i] = g.cell_width(i);
            if (g[i] > 0.1 && g[i] < 1.1) b[i] = g.cell_width(i);
        }
        a /= a.sum();
        b /= b.sum();
        double w = wasserstein1(Marginal(grid, a), Marginal(grid, b));
        REQUIRE(w == Catch::Approx(0.1).margin(2.0 * 1.3 / m));
    }
}

TEST_CASE("tilting fixes the mean exactly and keeps support") {
    auto grid = std::make_shared<Grid>(make_uniform(0.5, 1.5, 30));
    VectorXd w = VectorXd::Constant(30, 1.0 / 30.0);
    Marginal m(grid, w);
    Marginal t = m.tilted_to_mean(1.07);
    REQUIRE(t.mean() == Catch::Approx(1.07).margin(1e-12));
    for (int i = 0; i < 30; ++i) REQUIRE(t.weight(i) > 0.0);
    // tilting an already-centered marginal is a no-op up to float noise
    Marginal t2 = t.tilted_to_mean(1.07);
    REQUIRE((t2.weights() - t.weights()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE_THROWS_AS(m.tilted_to_mean(2.0), Infeasible);
}

TEST_CASE("rebin preserves means and convex order") {
    auto fine = std::make_shared<Grid>(make_uniform(0.0, 1.0, 120));
    MarginalSequence seq = random_convex_sequence(fine, 3, 4242);
    std::vector<double> pts;
    for (int i = 0; i <= 16; ++i) pts.push_back(i / 16.0);
    auto coarse = std::make_shared<Grid>(pts);
    std::vector<Marginal> ms;
    for (int t = 0; t <= 3; ++t) {
        Marginal r = rebin(seq.at(t), coarse);
        REQUIRE(r.mean() == Catch::Approx(seq.at(t).mean()).margin(1e-12));
        ms.push_back(r);
    }
    MarginalSequence rebinned(std::move(ms), seq.times());
    ConvexOrderReport rep = check_convex_order(rebinned, 1e-10);
    CAPTURE(rep.worst_violation);
    REQUIRE(rep.ok);
}
