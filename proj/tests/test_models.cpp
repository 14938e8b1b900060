#include <catch2/catch_amalgamated.hpp>

#include "mmot/models.hpp"

#include <cmath>
#include <memory>

using namespace mmot;

namespace {

std::shared_ptr<const Grid> price_grid(double s0, double sigma, double t_max, int m,
                                       double span_sigmas = 5.0) {
    double span = span_sigmas * sigma * std::sqrt(t_max) * s0;
    return std::make_shared<Grid>(make_uniform(s0 - span, s0 + span, m));
}

double excess_kurtosis_of_log(const Marginal& m, double s0) {
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
    for (int i = 0; i < m.size(); ++i) {
        double r = std::log(m.grid()[i] / s0);
        double w = m.weight(i);
        m1 += w * r;
    }
    for (int i = 0; i < m.size(); ++i) {
        double r = std::log(m.grid()[i] / s0) - m1;
        double w = m.weight(i);
        m2 += w * r * r;
        m3 += w * r * r * r;
        m4 += w * r * r * r * r;
    }
    (void)m3;
    return m4 / (m2 * m2) - 3.0;
}

}  // namespace

TEST_CASE("gbm marginal has the exact forward mean") {
    ModelParams p;
    p.model = Model::GBM;
    p.spot = 100.0;
    p.rate = 0.0;
    p.sigma = 0.2;
    p.horizon = 0.2;
    auto grid = price_grid(100.0, 0.2, 0.2, 80);
    MarginalSequence seq = generate(p, {0.1, 0.2}, grid);
    REQUIRE(seq.at(0).mean() == Catch::Approx(100.0).margin(1e-6));
    REQUIRE(seq.at(1).mean() == Catch::Approx(100.0).margin(1e-6));
    REQUIRE(seq.at(1).variance() > seq.at(0).variance());
}

TEST_CASE("gbm marginals stay in convex order for a range of vols") {
    for (double sigma : {0.15, 0.2, 0.3}) {
        ModelParams p;
        p.model = Model::GBM;
        p.spot = 1.0;
        p.sigma = sigma;
        p.horizon = 0.5;
        auto grid = price_grid(1.0, sigma, 0.5, 120, 5.5);
        MarginalSequence seq = generate(p, {0.1, 0.2, 0.3, 0.4, 0.5}, grid);
        REQUIRE(check_convex_order(seq, 1e-8).ok);
    }
}

TEST_CASE("merton has a heavier left tail than gbm at equal sigma") {
    auto grid = price_grid(100.0, 0.2, 0.25, 120, 8.0);
    ModelParams gbm;
    gbm.model = Model::GBM;
    gbm.spot = 100.0;
    gbm.sigma = 0.2;
    gbm.horizon = 0.25;
    ModelParams mer = gbm;
    mer.model = Model::Merton;
    mer.jump_intensity = 5.0;
    mer.jump_mean = -0.1;
    mer.jump_sd = 0.1;
    mer.paths = 20000;
    mer.seed = 7;

    MarginalSequence sg = generate(gbm, {0.125, 0.25}, grid);
    MarginalSequence sm = generate(mer, {0.125, 0.25}, grid);
    REQUIRE(sm.at(1).mean() == Catch::Approx(100.0).margin(1e-8));
    REQUIRE(sm.at(1).quantile(0.01) < sg.at(1).quantile(0.01));
}

TEST_CASE("heston log-returns show positive excess kurtosis") {
    ModelParams h;
    h.model = Model::Heston;
    h.spot = 100.0;
    h.sigma = 0.2;
    h.kappa = 2.0;
    h.theta = 0.04;
    h.sigma_v = 0.3;
    h.rho_corr = -0.5;
    h.v0 = 0.04;
    h.horizon = 0.5;
    h.paths = 10000;
    h.seed = 11;
    auto grid = price_grid(100.0, 0.2, 0.5, 140, 7.0);
    MarginalSequence seq = generate(h, {0.25, 0.5}, grid);
    REQUIRE(seq.at(1).mean() == Catch::Approx(100.0).margin(1e-8));
    REQUIRE(excess_kurtosis_of_log(seq.at(1), 100.0) > 0.0);
}

TEST_CASE("kde bandwidth follows the fixed fraction of the sample std") {
    std::vector<double> sample{1.0, 2.0, 3.0, 4.0};
    // population std of {1,2,3,4} is sqrt(1.25)
    REQUIRE(kde_bandwidth(sample) == Catch::Approx(0.05 * std::sqrt(1.25)).margin(1e-15));
}

TEST_CASE("generate validates its inputs") {
    ModelParams p;
    p.horizon = 0.2;
    auto grid = price_grid(100.0, 0.2, 0.2, 40);
    REQUIRE_THROWS_AS(generate(p, {}, grid), ValidationError);
    REQUIRE_THROWS_AS(generate(p, {0.2, 0.1}, grid), ValidationError);
    REQUIRE_THROWS_AS(generate(p, {0.5}, grid), ValidationError);  // beyond horizon

    ModelParams bad = p;
    bad.v0 = 0.0;
    REQUIRE_THROWS_AS(generate(bad, {0.1}, grid), ValidationError);

    ModelParams wide = p;
    wide.sigma = 0.6;
    wide.horizon = 0.05;
    std::vector<std::string> warnings;
    auto g2 = price_grid(100.0, 0.6, 0.05, 60);
    generate(wide, {0.05}, g2, &warnings);
    REQUIRE(warnings.size() == 1);
}

TEST_CASE("mc generation is reproducible and thread-count independent") {
    ModelParams p;
    p.model = Model::Merton;
    p.spot = 100.0;
    p.sigma = 0.2;
    p.horizon = 0.2;
    p.paths = 4000;
    p.seed = 3;
    auto grid = price_grid(100.0, 0.2, 0.2, 60, 8.0);
    MarginalSequence a = generate(p, {0.1, 0.2}, grid);
    int saved = thread_cap();
    set_thread_cap(2);
    MarginalSequence b = generate(p, {0.1, 0.2}, grid);
    set_thread_cap(saved);
    REQUIRE((a.at(1).weights() - b.at(1).weights()).cwiseAbs().maxCoeff() == 0.0);
}
