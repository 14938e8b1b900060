#include <catch2/catch_amalgamated.hpp>

#include "mmot/reference.hpp"

#include <memory>

using namespace mmot;

TEST_CASE("exponential tilt closed forms") {
    // symmetric weights around the target: no tilt needed
    ArrayXd d(3), lw(3);
    d << -1.0, 0.0, 1.0;
    lw << std::log(0.2), std::log(0.6), std::log(0.2);
    TiltResult r = solve_exponential_tilt(d, lw);
    REQUIRE(r.theta == Catch::Approx(0.0).margin(1e-12));
    REQUIRE_FALSE(r.clamped);

    // quarter mass at -1/2, three quarters at +1/2: root at -ln 3
    ArrayXd d2(2), lw2(2);
    d2 << -0.5, 0.5;
    lw2 << std::log(0.25), std::log(0.75);
    TiltResult r2 = solve_exponential_tilt(d2, lw2, 1e-14);
    REQUIRE(r2.theta == Catch::Approx(-std::log(3.0)).margin(1e-10));

    // point mass exactly at the target
    ArrayXd d3(1), lw3(1);
    d3 << 0.0;
    lw3 << 0.0;
    REQUIRE(solve_exponential_tilt(d3, lw3).theta == 0.0);

    // empty support
    ArrayXd lw4(2);
    lw4 << kNegInf, kNegInf;
    REQUIRE_THROWS_AS(solve_exponential_tilt(d2, lw4), TiltDiverged);
}

TEST_CASE("one-sided tilt walks to the achievable edge and flags the row") {
    ArrayXd d(3), lw(3);
    d << 0.0, 0.5, 1.0;  // target at the support minimum
    lw << std::log(0.5), std::log(0.3), std::log(0.2);
    TiltResult r = solve_exponential_tilt(d, lw, 1e-12, 100, 1e5);
    REQUIRE(r.clamped);
    REQUIRE(std::abs(r.residual) <= 1e-12);
    REQUIRE(r.theta < 0.0);
}

TEST_CASE("reference chain rows are martingale in the interior") {
    auto grid = std::make_shared<Grid>(make_uniform(0.6, 1.4, 60));
    std::vector<double> times{0.0, 0.1, 0.2};
    ReferenceChain ref = build_reference(grid, times, 0.2, 1e-9);
    REQUIRE(ref.steps() == 2);
    const VectorXd x = grid->as_vector();
    double sdt = 0.2 * std::sqrt(0.1);
    for (int s = 0; s < 2; ++s) {
        const MatrixXd& k = ref.kernels[static_cast<size_t>(s)];
        for (int i = 0; i < grid->size(); ++i) {
            REQUIRE(k.row(i).sum() == Catch::Approx(1.0).margin(1e-12));
            for (int j = 0; j < grid->size(); ++j) REQUIRE(k(i, j) > 0.0);
            bool interior =
                (x[i] - grid->lo() >= 3.0 * sdt) && (grid->hi() - x[i] >= 3.0 * sdt);
            double mean = k.row(i).dot(x);
            if (interior) REQUIRE(std::abs(mean - x[i]) <= 1e-10);
        }
    }
}

TEST_CASE("boundary rows report a defect instead of failing") {
    auto grid = std::make_shared<Grid>(make_uniform(0.8, 1.2, 20));
    ReferenceChain ref = build_reference(grid, {0.0, 0.25}, 0.2, 1e-8);
    REQUIRE_FALSE(ref.boundary_defects.empty());
    double spacing = 0.4 / 19.0;
    for (const auto& bd : ref.boundary_defects) REQUIRE(bd.defect <= spacing);
}

TEST_CASE("pre-tilt rows are floored; tilting is idempotent") {
    auto grid = std::make_shared<Grid>(make_uniform(0.5, 1.5, 40));
    ReferenceChain ref = build_reference(grid, {0.0, 0.1}, 0.2, 1e-7);
    const MatrixXd& k = ref.kernels[0];
    const VectorXd x = grid->as_vector();
    // an interior symmetric row keeps every floored entry
    int mid = 20;
    for (int j = 0; j < grid->size(); ++j) REQUIRE(k(mid, j) >= 1e-7 * 0.5);
    // re-tilting a martingale row is a no-op
    ArrayXd lw = k.row(mid).array().log();
    ArrayXd dev = x.array() - x[mid];
    TiltResult r = solve_exponential_tilt(dev, lw, 1e-13);
    ArrayXd lt = lw + r.theta * dev;
    ArrayXd w2 = (lt - lt.maxCoeff()).exp();
    w2 /= w2.sum();
    REQUIRE((w2 - k.row(mid).array().transpose()).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("reference builder validates inputs") {
    auto grid = std::make_shared<Grid>(make_uniform(0.5, 1.5, 10));
    REQUIRE_THROWS_AS(build_reference(grid, {0.0, 0.1}, 0.0), ValidationError);
    REQUIRE_THROWS_AS(build_reference(grid, {0.0, 0.1}, 0.2, 1e-3), ValidationError);
    REQUIRE_THROWS_AS(build_reference(grid, {0.1}, 0.2), ValidationError);
    REQUIRE_THROWS_AS(build_reference(grid, {0.1, 0.1}, 0.2), ValidationError);
}
