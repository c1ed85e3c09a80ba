/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include "icqr/cdf_npmle.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace icqr;
using oracle::covariates;

namespace {

Dataset exact_sample(std::initializer_list<double> ts) {
    Dataset d;
    for (double t : ts) d.observations.push_back(Observation::exact_at(t, covariates({0.0})));
    return d;
}

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

}  // namespace

TEST_CASE("support grid") {
    CHECK(support_grid(exact_sample({2, 1, 2})).points == std::vector<double>{1, 2});
    Dataset mixed;
    mixed.observations = {Observation::censored(0.5, 2.0, covariates({0})), Observation::exact_at(1.0, covariates({0}))};
    CHECK(support_grid(mixed).points == std::vector<double>{0.5, 1.0, 2.0});
    Dataset left;
    left.observations = {Observation::censored(-kInf, 1.3, covariates({0}))};
    CHECK(support_grid(left).points == std::vector<double>{1.3});
}

TEST_CASE("Nadaraya-Watson weights") {
    Dataset same = exact_sample({1, 2, 3, 4});
    KernelSpec spec{{{KernelKind::Gaussian, 0.5, 0.1}}};
    for (double b : nw_weights(covariates({0.0}), same, spec)) CHECK(b == doctest::Approx(0.25));

    Dataset two;
    two.observations = {Observation::exact_at(1, covariates({0.0})), Observation::exact_at(2, covariates({3.0}))};
    KernelSpec h{{{KernelKind::Gaussian, 0.3, 0.1}}};  // second point sits 10 bandwidths away
    const auto B = nw_weights(covariates({0.0}), two, h);
    const double ratio = std::exp(-50.0);
    CHECK(std::abs(B[0] - 1.0 / (1.0 + ratio)) < 1e-15);
    CHECK(std::abs(B[0] - 1.0) < 1e-8);
    CHECK(std::abs(B[1]) < 1e-8);

    std::mt19937_64 gen(5);
    auto d = oracle::random_pic(gen, 30, 0.5);
    const auto w1 = nw_weights(d[3].x, d, h);
    double s = 0;
    for (double b : w1) s += b;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    auto perm = d;
    std::reverse(perm.observations.begin(), perm.observations.end());
    const auto w2 = nw_weights(d[3].x, perm, h);
    for (std::size_t i = 0; i < w1.size(); ++i) CHECK(w1[i] == doctest::Approx(w2[w1.size() - 1 - i]).epsilon(1e-14));

    Dataset far;
    far.observations = {Observation::exact_at(1, covariates({100.0})), Observation::exact_at(2, covariates({200.0}))};
    CHECK_THROWS_AS(nw_weights(covariates({0.0}), far, KernelSpec{{{KernelKind::Gaussian, 0.01, 0.1}}}), NumericalError);
}

TEST_CASE("indicator kernel for binary covariates") {
    Dataset d;
    d.observations = {Observation::exact_at(1, covariates({0.2, 0.0})), Observation::exact_at(2, covariates({0.2, 1.0})),
                      Observation::exact_at(3, covariates({0.9, 0.0}))};
    const auto spec = kernel_with_bandwidths(d, std::vector<double>{0.5});
    REQUIRE(spec.components.size() == 2);
    CHECK(spec.components[1].kind == KernelKind::Indicator);
    const auto B = nw_weights(covariates({0.2, 0.0}), d, spec);
    CHECK(B[1] / B[0] == doctest::Approx(0.1));
}

TEST_CASE("normal-scale bandwidth") {
    Dataset d;
    const double a = std::sqrt(199.0 / 200.0);  // sample SD exactly 1, IQR/1.349 larger
    for (int i = 0; i < 200; ++i) d.observations.push_back(Observation::exact_at(i, covariates({i % 2 ? a : -a})));
    const double expected = 1.06 * std::exp(-0.2 * std::log(200.0));
    CHECK(silverman_bandwidth(d, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.3672).epsilon(1e-3));  // quoted to four figures

    Dataset scaled = d;
    for (auto& o : scaled.observations) o.x(1) *= 3.5;
    CHECK(silverman_bandwidth(scaled, 1) == doctest::Approx(3.5 * expected).epsilon(1e-12));

    CHECK_THROWS_AS(silverman_bandwidth(exact_sample({1.0}), 1), ValidationError);
    CHECK_THROWS_AS(silverman_bandwidth(exact_sample({1.0, 2.0}), 1), ValidationError);
}

TEST_CASE("effective time") {
    CHECK(effective_time(Observation::exact_at(1.5, covariates({}))) == 1.5);
    CHECK(effective_time(Observation::censored(0.5, 2.0, covariates({}))) == 2.0);
    CHECK(effective_time(Observation::censored(0.7, kInf, covariates({}))) == 0.7);
}

TEST_CASE("E-step terms") {
    Dataset d = exact_sample({1.0, 2.0, 3.0});
    auto grid = std::make_shared<const SupportGrid>(support_grid(d));
    HazardIncrements inc{grid, {0.2, 0.3, 0.4}};
    const auto xi = em_e_step(d, 1, inc);
    CHECK(xi[0] == 0.0);
    CHECK(xi[1] == 1.0);
    CHECK(xi[2] == doctest::Approx(0.4));  // beyond T~: tail term

    Dataset iv;
    iv.observations = {Observation::censored(0.0, 1.0, covariates({0})), Observation::exact_at(0.0, covariates({0}))};
    auto g2 = std::make_shared<const SupportGrid>(support_grid(iv));
    HazardIncrements inc2{g2, {0.5, 0.3}};
    const auto x2 = em_e_step(iv, 0, inc2);
    CHECK(x2[0] == 0.0);
    CHECK(x2[1] == doctest::Approx(0.3 / (1 - std::exp(-0.3))));
    CHECK(x2[1] == doctest::Approx(1.15749).epsilon(1e-5));

    HazardIncrements zero{g2, {0.5, 0.0}};
    CHECK_THROWS_AS(em_e_step(iv, 0, zero), NumericalError);
}

TEST_CASE("M-step closed form") {
    Dataset d;
    d.observations = {Observation::exact_at(1.0, covariates({0})), Observation::censored(1.0, kInf, covariates({0}))};
    auto grid = std::make_shared<const SupportGrid>(support_grid(d));
    HazardIncrements inc{grid, {1.0}};
    std::vector<std::vector<double>> xi = {em_e_step(d, 0, inc), em_e_step(d, 1, inc)};
    const auto B = uniform_weights(2);
    CHECK(em_m_step(xi, B, d, grid).d_lambda[0] == doctest::Approx(0.5));

    const Dataset ex = exact_sample({0.3, 1.1, 1.1, 2.0, 2.7, 0.3, 4.0});
    auto g = std::make_shared<const SupportGrid>(support_grid(ex));
    HazardIncrements start{g, std::vector<double>(g->size(), 0.25)};
    std::vector<std::vector<double>> table;
    for (std::size_t i = 0; i < ex.size(); ++i) table.push_back(em_e_step(ex, i, start));
    const auto na = oracle::nelson_aalen_increments({0.3, 1.1, 1.1, 2.0, 2.7, 0.3, 4.0});
    const auto step = em_m_step(table, uniform_weights(ex.size()), ex, g);
    std::size_t j = 0;
    for (const auto& [t, inc_na] : na) CHECK(step.d_lambda[j++] == doctest::Approx(inc_na).epsilon(1e-14));

    std::vector<double> scaled(ex.size(), 7.0);
    const auto step2 = em_m_step(table, scaled, ex, g);
    for (std::size_t k = 0; k < g->size(); ++k) CHECK(step2.d_lambda[k] == doctest::Approx(step.d_lambda[k]).epsilon(1e-14));
}

TEST_CASE("fast EM engine matches the dense reference iterations") {
    std::mt19937_64 gen(99);
    const auto d = oracle::random_pic(gen, 40, 0.3);
    const EmIndex index(d);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<double> B(d.size());
    for (double& b : B) b = u(gen);
    double tot = 0;
    for (double b : B) tot += b;
    for (double& b : B) b /= tot;

    HazardIncrements inc = index.initial_increments(B);
    for (std::size_t it = 1; it <= 6; ++it) {
        std::vector<std::vector<double>> xi;
        for (std::size_t i = 0; i < d.size(); ++i) xi.push_back(em_e_step(d, i, inc));
        inc = em_m_step(xi, B, d, index.grid());
        EmOptions opt;
        opt.tol = 0.0;
        opt.max_iter = it;
        opt.accelerate = false;
        const auto fast = index.run(B, opt);
        CHECK(fast.iterations == it);
        for (std::size_t j = 0; j < inc.d_lambda.size(); ++j)
            CHECK(fast.increments().d_lambda[j] == doctest::Approx(inc.d_lambda[j]).epsilon(1e-11));
    }
}

TEST_CASE("local fit on exact data") {
    const auto one = fit_local_cdf(covariates({0.0}), exact_sample({1.0}), KernelSpec{{{KernelKind::Gaussian, 1.0, 0.1}}});
    CHECK(one.converged);
    CHECK(one(0.999) == 0.0);
    CHECK(one(1.0) == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-12));

    const std::vector<double> ts = {0.4, 1.2, 1.2, 2.5, 0.9, 3.1, 2.2, 0.4};
    Dataset d;
    for (double t : ts) d.observations.push_back(Observation::exact_at(t, covariates({0.0})));
    const KernelSpec flat{{{KernelKind::Gaussian, 1e6, 0.1}}};
    EmOptions pl;
    pl.link = CdfLink::ProductLimit;
    const auto km = oracle::kaplan_meier_cdf(ts);
    const auto na = oracle::nelson_aalen_increments(ts);
    const auto fit_pl = fit_local_cdf(covariates({0.0}), d, flat, pl);
    const auto fit_exp = fit_local_cdf(covariates({0.0}), d, flat);
    double cum = 0;
    for (const auto& [t, f] : km) {
        CHECK(std::abs(fit_pl(t) - f) < 1e-6);
        cum += na.at(t);
        CHECK(fit_exp(t) == doctest::Approx(1 - std::exp(-cum)).epsilon(1e-12));
    }
}

TEST_CASE("EM ascent, monotone output and determinism on censored data") {
    std::mt19937_64 gen(123);
    for (int rep = 0; rep < 10; ++rep) {
        const auto d = oracle::random_pic(gen, 80, 0.2);
        const KernelSpec spec{{{KernelKind::Gaussian, 0.4, 0.1}}};
        const EmIndex index(d);
        const auto B = nw_weights(d[0].x, d, spec);
        const auto a = index.run(B, EmOptions{}, true);
        for (std::size_t k = 1; k < a.log_likelihood.size(); ++k) CHECK(a.log_likelihood[k] >= a.log_likelihood[k - 1] - 1e-10);
        for (std::size_t j = 1; j < a.values().size(); ++j) CHECK(a.values()[j] >= a.values()[j - 1]);
        for (double v : a.increments().d_lambda) CHECK(v >= 0.0);
        const auto b = index.run(B, EmOptions{}, true);
        CHECK(a.values() == b.values());
        CHECK(a(-kInf) == 0.0);
        CHECK(a(kInf) == 1.0);
    }
}

TEST_CASE("kernel provider satisfies the CDF contract and caches per covariate") {
    std::mt19937_64 gen(8);
    const auto d = oracle::random_pic(gen, 50, 0.4);
    KernelCdfProvider provider(d, KernelSpec{{{KernelKind::Gaussian, 0.5, 0.1}}});
    double prev = 0.0;
    for (double t = -4; t <= 4; t += 0.05) {
        const double f = provider.cdf(t, d[2].x);
        CHECK(f >= prev);
        CHECK(f <= 1.0);
        prev = f;
    }
    CHECK(&provider.curve(d[2].x) == &provider.curve(d[2].x));
    const EmIndex index(d);
    const auto table = kernel_endpoint_cdfs(d, index, KernelSpec{{{KernelKind::Gaussian, 0.5, 0.1}}}, EmOptions{});
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(table.values[i].at_left == provider.cdf(d[i].left, d[i].x));
        if (!d[i].exact) CHECK(table.values[i].at_right == provider.cdf(d[i].right, d[i].x));
    }
    const auto threaded = kernel_endpoint_cdfs(d, index, KernelSpec{{{KernelKind::Gaussian, 0.5, 0.1}}}, EmOptions{}, {}, 4);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(threaded.values[i].at_left == table.values[i].at_left);
}

TEST_CASE("Turnbull estimator") {
    const Dataset ex = exact_sample({0.5, 1.5, 1.5, 3.0});
    const auto tb = turnbull(ex);
    CHECK(std::abs(tb(0.5) - 0.25) <= 1e-10);
    CHECK(std::abs(tb(1.5) - 0.75) <= 1e-10);
    CHECK(std::abs(tb(3.0) - 1.0) <= 1e-10);
    CHECK(tb(0.1) == 0.0);

    Dataset two;
    two.observations = {Observation::exact_at(1.0, covariates({0})), Observation::censored(0.0, 2.0, covariates({0}))};
    const auto t2 = turnbull(two);
    CHECK(t2.converged);
    CHECK(self_consistency_residual(two, t2) < 1e-5);
    CHECK(t2(2.0) == doctest::Approx(1.0));

    std::mt19937_64 gen(17);
    const auto d = oracle::random_pic(gen, 60, 0.3);
    const auto base = turnbull(d);
    Dataset doubled = d;
    for (const auto& o : d.observations) doubled.observations.push_back(o);
    const auto dbl = turnbull(doubled);
    for (double t = -3; t <= 3; t += 0.1) CHECK(std::abs(base(t) - dbl(t)) < 1e-9);
    std::vector<double> twos(d.size(), 2.0);
    const auto weighted = turnbull(d, {}, twos);
    for (double t = -3; t <= 3; t += 0.1) CHECK(std::abs(base(t) - weighted(t)) < 1e-12);
    CHECK(self_consistency_residual(d, base) <= 1e-4);
}

TEST_CASE("EM support and terminal atom") {
    Dataset d;
    d.observations = {Observation::censored(0.0, 2.0, covariates({0})), Observation::censored(1.0, 3.0, covariates({0})),
                      Observation::exact_at(0.5, covariates({0}))};
    const EmIndex index(d);
    CHECK(index.grid()->points == std::vector<double>{0.0, 0.5, 1.0, 2.0, 3.0});
    CHECK(index.support() == std::vector<char>{0, 1, 0, 1, 0});
    const std::vector<double> B(3, 1.0 / 3.0);
    const auto init = index.initial_increments(B);
    CHECK(init.d_lambda[1] == 0.5);
    CHECK(std::isinf(init.d_lambda[3]));
    const auto fit = index.run(B, EmOptions{});
    CHECK(fit.converged);
    CHECK(fit(2.0) == 1.0);
    CHECK(fit(0.4) == 0.0);

    // a subject known to outlive the last support point keeps the hazard finite
    Dataset r = d;
    r.observations.push_back(Observation::censored(2.5, kInf, covariates({0})));
    const EmIndex open(r);
    const std::vector<double> B4(4, 0.25);
    CHECK(std::isfinite(open.initial_increments(B4).d_lambda[3]));
    CHECK(open.run(B4, EmOptions{})(2.0) < 1.0);
}

TEST_CASE("accelerated and plain EM reach the same maximizer") {
    std::mt19937_64 gen(31);
    const auto d = oracle::random_pic(gen, 60, 0.5);
    const EmIndex index(d);
    const std::vector<double> B(d.size(), 1.0);
    EmOptions plain;
    plain.accelerate = false;
    plain.max_iter = 20000;
    plain.tol = 1e-10;
    EmOptions fast = plain;
    fast.accelerate = true;
    const auto a = index.run(B, plain);
    const auto b = index.run(B, fast);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK(b.iterations < a.iterations);
    for (std::size_t j = 0; j < a.values().size(); ++j) CHECK(std::abs(a.values()[j] - b.values()[j]) < 1e-6);
    CHECK(index.log_likelihood(B, b.increments().d_lambda) >= index.log_likelihood(B, a.increments().d_lambda) - 1e-9);
}
