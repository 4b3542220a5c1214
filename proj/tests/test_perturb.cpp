#include <cmath>
#include <set>

#include "common.hpp"
#include "doctest.h"
#include "zorro/metrics.hpp"
#include "zorro/perturb.hpp"

using namespace zorro;
using namespace zorro::testing;

TEST_CASE("full mask reproduces the input exactly") {
    auto g = toy_graph();
    auto x = toy_features_three();
    auto y = perturb(x, full_explanation(4, 1), RngStream(0));
    CHECK(y == x.values);
}

TEST_CASE("empty mask with a degenerate pool gives the pool value everywhere") {
    Matrix x(3, 2, 1.5);
    auto fm = make_features(std::move(x));
    fm.column_pools = std::make_shared<const std::vector<std::vector<double>>>(
        std::vector<std::vector<double>>{{0.0}, {0.0}});
    auto y = perturb(fm, Explanation{}, RngStream(1));
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("perturb pins exactly the masked entries") {
    auto x = toy_features_three();
    Explanation e{{0, 2}, {0}};
    auto y = perturb(x, e, RngStream(2));
    CHECK(y(0, 0) == 3.0);
    CHECK(y(2, 0) == 2.0);
    const auto domain = toy_domain();
    for (size_t i : {1, 3}) {
        CHECK(std::find(domain.begin(), domain.end(), y(i, 0)) != domain.end());
    }
}

TEST_CASE("perturbation locality holds for random masks") {
    auto rng = RngStream(3);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 2 + rng.index(6), d = 1 + rng.index(4);
        auto fm = make_features(random_matrix(n, d, rng));
        Explanation e;
        for (uint32_t i = 0; i < n; ++i) {
            if (rng.uniform01() < 0.5) e.nodes.push_back(i);
        }
        for (uint32_t j = 0; j < d; ++j) {
            if (rng.uniform01() < 0.5) e.features.push_back(j);
        }
        auto y = perturb(fm, e, RngStream(trial));
        for (uint32_t i : e.nodes) {
            for (uint32_t j : e.features) CHECK(y(i, j) == fm.values(i, j));
        }
    }
}

TEST_CASE("identical seeds give identical draws and estimates") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto x = toy_features_unit();
    auto model = make_rule_sum(0.0, 2);
    Explanation e{{0}, {0}};

    CHECK(perturb(x, e, RngStream(9)) == perturb(x, e, RngStream(9)));
    auto a = rdt_fidelity(model, cg, x, e, 500, RngStream(11));
    auto b = rdt_fidelity(model, cg, x, e, 500, RngStream(11));
    CHECK(a.value == b.value);
}

TEST_CASE("sample-parallel estimation is independent of the worker count") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto x = toy_features_unit();
    auto model = make_rule_sum(0.0, 2);
    Explanation e{{0}, {0}};
    auto seq = rdt_fidelity(model, cg, x, e, 400, RngStream(13), 1);
    auto par = rdt_fidelity(model, cg, x, e, 400, RngStream(13), 3);
    CHECK(seq.value == par.value);
}

TEST_CASE("toy exact fidelity: {v1, v3} leaves one failing assignment of 36") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto x = toy_features_unit();
    auto model = make_rule_sum(0.0, 2);

    SUBCASE("full mask is exact") {
        CHECK(exact_fidelity(model, cg, x, full_explanation(4, 1), {toy_domain()}) == 1.0);
    }
    SUBCASE("{v1, v3} has fidelity 35/36") {
        CHECK(exact_fidelity(model, cg, x, Explanation{{0, 2}, {0}}, {toy_domain()}) ==
              doctest::Approx(35.0 / 36.0).epsilon(1e-12));
    }
    SUBCASE("empty explanation on a constant model is exact") {
        auto constant = make_gcn2(1, 2, 2, RngStream(0));
        for (auto& w : constant.weights) w.fill(0.0);
        CHECK(exact_fidelity(constant, cg, x, Explanation{}, {toy_domain()}) == 1.0);
    }
    SUBCASE("budget is enforced") {
        Matrix wide(4, 12, 0.0);
        auto fm = make_features(std::move(wide));
        fm.column_pools = std::make_shared<const std::vector<std::vector<double>>>(
            std::vector<std::vector<double>>(12, toy_domain()));
        auto big = make_rule_sum(0.0, 2);
        CHECK_THROWS_AS(
            exact_fidelity(big, cg, fm, Explanation{}, std::vector<std::vector<double>>(12, toy_domain())),
            std::runtime_error);
    }
}

TEST_CASE("Monte-Carlo fidelity concentrates on the exact value") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto x = toy_features_unit();
    auto model = make_rule_sum(0.0, 2);

    SUBCASE("full mask is exactly one at any sample count") {
        for (size_t samples : {1u, 10u, 100u}) {
            CHECK(rdt_fidelity(model, cg, x, full_explanation(4, 1), samples, RngStream(5)).value ==
                  1.0);
        }
    }
    SUBCASE("all nodes and the single feature give one") {
        CHECK(rdt_fidelity(model, cg, x, Explanation{{0, 1, 2, 3}, {0}}, 200, RngStream(7)).value ==
              1.0);
    }
    SUBCASE("{v1, v3} estimate lands within three standard errors of 35/36") {
        auto est = rdt_fidelity(model, cg, x, Explanation{{0, 2}, {0}}, 1000, RngStream(17));
        const double exact = 35.0 / 36.0;
        const double band = 3.0 * std::sqrt(exact * (1.0 - exact) / 1000.0);
        CHECK(std::abs(est.value - exact) <= band);
        CHECK(est.std_error == doctest::Approx(std::sqrt(est.value * (1 - est.value) / 1000.0)));
    }
}

TEST_CASE("fidelity stays in [0,1] and the full mask is exact for random instances") {
    auto rng = RngStream(23);
    for (int trial = 0; trial < 10; ++trial) {
        const size_t n = 3 + rng.index(5), d = 1 + rng.index(3);
        auto g = random_graph(n, 0.4, rng);
        auto cg = computational_graph(g, static_cast<NodeId>(rng.index(n)), 2);
        auto fm = make_features(random_matrix(cg.size(), d, rng));
        auto model = make_gcn2(d, 4, 3, RngStream(trial + 40));
        auto full = rdt_fidelity(model, cg, fm, full_explanation(cg.size(), d), 50, RngStream(trial));
        CHECK(full.value == 1.0);
        Explanation partial{{0}, {0}};
        auto est = rdt_fidelity(model, cg, fm, partial, 50, RngStream(trial));
        CHECK(est.value >= 0.0);
        CHECK(est.value <= 1.0);
    }
}

TEST_CASE("oracle agreement on small discrete instances") {
    auto rng = RngStream(29);
    int within = 0, total = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 2 + rng.index(3), d = 1 + rng.index(2);  // <= 8 entries
        auto g = random_graph(n, 0.5, rng);
        auto cg = computational_graph(g, static_cast<NodeId>(rng.index(n)), 2);

        const size_t domain_size = 2 + rng.index(4);
        std::vector<double> domain;
        for (size_t k = 0; k < domain_size; ++k) domain.push_back(static_cast<double>(k) - 1.5);
        std::vector<std::vector<double>> domains(d, domain);

        Matrix x(cg.size(), d);
        for (double& v : x.data) v = domain[rng.index(domain.size())];
        auto fm = make_features(std::move(x));
        fm.column_pools =
            std::make_shared<const std::vector<std::vector<double>>>(domains);

        Explanation e;
        for (uint32_t i = 0; i < cg.size(); ++i) {
            if (rng.uniform01() < 0.4) e.nodes.push_back(i);
        }
        for (uint32_t j = 0; j < d; ++j) {
            if (rng.uniform01() < 0.6) e.features.push_back(j);
        }

        auto model = make_gcn2(d, 3, 2, RngStream(trial + 7));
        const double exact = exact_fidelity(model, cg, fm, e, domains);
        auto est = rdt_fidelity(model, cg, fm, e, 5000, RngStream(trial));
        ++total;
        if (std::abs(est.value - exact) <= 4.0 * est.std_error + 1e-12) ++within;
    }
    CHECK(within >= total * 99 / 100);
}

TEST_CASE("stability formula") {
    CHECK(stability(1.0) == 1.0);
    CHECK(stability(0.0) == 1.0);
    CHECK(stability(0.5) == doctest::Approx(0.8));
    for (double p = 0.0; p <= 1.0; p += 0.01) {
        CHECK(stability(p) >= 0.8 - 1e-12);
    }
    // unique minimum at p = 0.5
    CHECK(stability(0.5) < stability(0.49));
    CHECK(stability(0.5) < stability(0.51));
    CHECK_THROWS_AS(stability(1.5), std::invalid_argument);
}
