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

#include "doctest.h"
#include "oracles.hpp"

#include "icqr/pipeline.hpp"
#include "icqr/qr_solver.hpp"
#include "icqr/simbench.hpp"

#include <random>

using namespace icqr;

namespace {

// F = 0 at -inf, `level` on the finite line, 1 at +inf.
class FlatCdf final : public CdfProvider {
public:
    explicit FlatCdf(double level) : level_(level) {}
    double cdf(double t, const Eigen::VectorXd&) const override {
        if (t == -kInf) return 0.0;
        if (t == kInf) return 1.0;
        return level_;
    }

private:
    double level_;
};

class LogisticCdf final : public CdfProvider {
public:
    double cdf(double t, const Eigen::VectorXd& x) const override {
        if (t == -kInf) return 0.0;
        if (t == kInf) return 1.0;
        return 1.0 / (1.0 + std::exp(-(t - 0.5 * x(1))));
    }
};

Eigen::VectorXd cov(double x1) { return Eigen::Vector2d(1.0, x1); }

Dataset random_exact(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = z(gen);
        d.observations.push_back(Observation::exact_at(1.0 + x + z(gen), cov(x)));
    }
    return d;
}

Dataset random_mixed(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.2, 1.5);
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = z(gen);
        const double t = 1.0 + x + z(gen);
        if (i % 3 == 0) {
            d.observations.push_back(Observation::exact_at(t, cov(x)));
        } else {
            const double l = t - u(gen);
            const double r = t + u(gen);
            d.observations.push_back(Observation::censored(i % 7 == 1 ? -kInf : l, i % 11 == 2 ? kInf : r, cov(x)));
        }
    }
    return d;
}

EstimatorSpec plugin(std::shared_ptr<const CdfProvider> p, double tau) {
    EstimatorSpec s;
    s.kind = EstimatorKind::IcqrPlugin;
    s.provider = std::move(p);
    s.tau = tau;
    return s;
}

}  // namespace

TEST_CASE("all-exact data reduce to ordinary quantile regression") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset d = random_exact(9, seed);
        EstimatorSpec spec;
        spec.tau = 0.3;
        const auto r = fit(d, spec);
        CheckLossProblem P;
        P.X.resize(9, 2);
        P.t.resize(9);
        P.w = Eigen::VectorXd::Ones(9);
        P.tau = 0.3;
        for (Eigen::Index i = 0; i < 9; ++i) {
            P.X.row(i) = d[static_cast<std::size_t>(i)].x.transpose();
            P.t(i) = d[static_cast<std::size_t>(i)].time();
        }
        const double best = oracle::brute_force_min(P);
        CHECK(std::abs(r.fit.objective - best) <= 1e-8 * std::max(1.0, best));
        CHECK(r.indeterminate == 0);
    }
}

TEST_CASE("left weight one turns intervals into their left endpoints") {
    Dataset d = random_mixed(30, 3);
    for (auto& o : d.observations)
        if (!o.exact) {
            if (!std::isfinite(o.right)) o.right = o.left + 1.0;
            if (!std::isfinite(o.left)) o.left = o.right - 1.0;
        }
    Dataset pseudo;
    for (const auto& o : d.observations) pseudo.observations.push_back(Observation::exact_at(o.left, o.x));
    const auto a = fit(d, plugin(std::make_shared<FlatCdf>(0.8), 0.5));
    EstimatorSpec exact_spec;
    const auto b = fit(pseudo, exact_spec);
    CHECK(a.fit.objective == doctest::Approx(b.fit.objective).epsilon(1e-10));
    CHECK((a.fit.beta - b.fit.beta).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zfd and the redistribution estimator agree without indeterminate subjects") {
    const Dataset d = random_mixed(40, 5);
    EstimatorSpec ks;
    ks.tau = 0.4;
    EstimatorSpec zfd = ks;
    zfd.kind = EstimatorKind::Zfd;
    const auto pk = prepare(d, ks);
    const auto pz = prepare(d, zfd);
    CHECK(shares_endpoints(pk, pz));
    // Every censored subject is order-determinate at tau = 0.4.
    std::vector<EndpointCdf> ends(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i].exact) ends[i] = {0.3, 0.3};
        else ends[i] = i % 2 ? EndpointCdf{0.5, 0.9} : EndpointCdf{0.1, 0.35};
        if (!d[i].exact && !std::isfinite(d[i].left)) ends[i] = {0.0, 0.2};
        if (!d[i].exact && !std::isfinite(d[i].right)) ends[i] = {0.45, 1.0};
    }
    const auto a = fit_from_endpoints(d, pk, ends, 0.4);
    const auto b = fit_from_endpoints(d, pz, ends, 0.4);
    CHECK(a.beta == b.beta);
    CHECK(a.objective == b.objective);

    // One indeterminate subject changes the zfd objective only.
    std::size_t k = 1;
    while (d[k].exact || !std::isfinite(d[k].left) || !std::isfinite(d[k].right)) ++k;
    ends[k] = {0.2, 0.6};
    const auto c = fit_from_endpoints(d, pz, ends, 0.4);
    const auto e = fit_from_endpoints(d, pk, ends, 0.4);
    CHECK(c.n_used < e.n_used);
}

TEST_CASE("zfd reports too few usable rows") {
    Dataset d;
    for (int i = 0; i < 6; ++i) d.observations.push_back(Observation::censored(i, i + 2.0, cov(0.1 * i)));
    EstimatorSpec zfd;
    zfd.kind = EstimatorKind::Zfd;
    const auto p = prepare(d, zfd);
    std::vector<EndpointCdf> ends(d.size(), EndpointCdf{0.2, 0.8});
    CHECK_THROWS_AS(fit_from_endpoints(d, p, ends, 0.5), ValidationError);
}

TEST_CASE("common row multipliers leave the estimate unchanged") {
    const Dataset d = random_mixed(50, 8);
    const auto p = prepare(d, plugin(std::make_shared<LogisticCdf>(), 0.6));
    const auto ends = evaluate_endpoints(d, LogisticCdf());
    const auto a = fit_from_endpoints(d, p, ends, 0.6);
    const std::vector<double> c(d.size(), 3.5);
    const auto b = fit_from_endpoints(d, p, ends, 0.6, c);
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("the estimating function is small at the fit") {
    const Dataset d = random_mixed(60, 9);
    const auto spec = plugin(std::make_shared<LogisticCdf>(), 0.5);
    const auto r = fit(d, spec);
    const auto rows = augment(d, evaluate_endpoints(d, LogisticCdf()), QuantileLevel(0.5), r.m_star);
    const auto P = CheckLossProblem::from_rows(rows, QuantileLevel(0.5), static_cast<double>(d.size()));
    CHECK(r.fit.subgradient_norm <= vertex_subgradient_bound(P) + 1e-12);
    CHECK(r.fit.objective == doctest::Approx(objective(P, r.fit.beta)).epsilon(1e-12));
}

TEST_CASE("kernel fit reports its EM runs and is thread-count invariant") {
    SimScenario sc;
    sc.n = 80;
    sc.seed = 4;
    const auto sim = generate(sc, 0);
    EstimatorSpec spec;
    const auto a = fit(sim.data, spec, 1);
    const auto b = fit(sim.data, spec, 4);
    CHECK(a.em.runs == 80);
    CHECK(a.em.converged <= a.em.runs);
    CHECK(a.fit.beta == b.fit.beta);
    CHECK(a.kernel.components.size() == 2);
    CHECK(a.kernel.components[1].kind == KernelKind::Indicator);
    CHECK(a.m_star > 0.0);
}

TEST_CASE("simulated data give estimates near the truth") {
    SimScenario sc;
    sc.seed = 17;
    const auto sim = generate(sc, 0);
    const auto r = fit(sim.data, EstimatorSpec{});
    CHECK((r.fit.beta - sc.beta0()).cwiseAbs().maxCoeff() < 0.8);
}

TEST_CASE("quantile process") {
    SUBCASE("single level matches fit") {
        const Dataset d = random_mixed(40, 12);
        EstimatorSpec spec;
        spec.tau = 0.35;
        const std::vector<double> taus = {0.35};
        const auto proc = quantile_process(d, spec, taus);
        REQUIRE(proc.size() == 1);
        REQUIRE(proc[0].fit);
        CHECK(proc[0].fit->beta == fit(d, spec).fit.beta);
    }
    SUBCASE("intercept-only exact data give a nondecreasing path") {
        Dataset d;
        std::mt19937_64 gen(2);
        std::normal_distribution<double> z;
        for (int i = 0; i < 25; ++i) d.observations.push_back(Observation::exact_at(z(gen), Eigen::VectorXd::Ones(1)));
        const std::vector<double> taus = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        const auto proc = quantile_process(d, EstimatorSpec{}, taus, 3);
        for (std::size_t k = 1; k < proc.size(); ++k) CHECK(proc[k].fit->beta(0) >= proc[k - 1].fit->beta(0));
    }
    SUBCASE("grid must increase") {
        const Dataset d = random_exact(10, 1);
        const std::vector<double> bad = {0.3, 0.3};
        CHECK_THROWS_AS(quantile_process(d, EstimatorSpec{}, bad), ValidationError);
        const std::vector<double> out = {0.3, 1.2};
        CHECK_THROWS_AS(quantile_process(d, EstimatorSpec{}, out), ValidationError);
    }
}

TEST_CASE("plug-in estimator needs a provider") {
    const Dataset d = random_exact(10, 1);
    EstimatorSpec s;
    s.kind = EstimatorKind::IcqrPlugin;
    CHECK_THROWS_AS(fit(d, s), ValidationError);
}
