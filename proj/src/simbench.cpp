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

#include "icqr/simbench.hpp"

#include "icqr/inference.hpp"
#include "icqr/parallel.hpp"
#include "icqr/rng.hpp"
#include "icqr/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace icqr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Everything about one subject except the Delta decision threshold.
struct Draw {
    double x1 = 0.0;
    double x2 = 0.0;
    double t = 0.0;
    double c = 0.0;
    double u_delta = 0.0;
    std::vector<double> inspections;  // log scale, increasing
};

Draw draw_subject(const SimScenario& sc, double e_tau, CounterRng& rng) {
    Draw d;
    d.x1 = rng.uniform(-1.0, 1.0);
    d.x2 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double e = error_quantile(sc.law, rng.uniform()) - e_tau;
    d.t = 1.5 + d.x1 + d.x2 + sigma(sc.hetero, d.x1) * e;
    const double ec = rng.uniform(30.0, 50.0);
    d.c = std::log(ec);
    double raw = 0.0;
    for (;;) {
        raw += rng.uniform(0.1, 1.0);
        if (raw > ec) break;
        d.inspections.push_back(std::log(raw));
    }
    d.u_delta = rng.uniform();
    return d;
}

double exact_probability(double p0, double x2) { return std::clamp(p0 - 0.1 * x2, 0.0, 1.0); }

bool observed_exactly(const SimScenario& sc, const Draw& d) {
    return sc.scheme == Scheme::PIC && d.u_delta < exact_probability(sc.p0, d.x2) && d.t < d.c;
}

Observation to_observation(const SimScenario& sc, const Draw& d) {
    Eigen::VectorXd x(3);
    x << 1.0, d.x1, d.x2;
    if (observed_exactly(sc, d)) return Observation::exact_at(d.t, x);
    const auto it = std::lower_bound(d.inspections.begin(), d.inspections.end(), d.t);  // first U_k >= T
    const double left = it == d.inspections.begin() ? -kInf : *(it - 1);
    const double right = it == d.inspections.end() ? kInf : *it;
    return Observation::censored(left, right, x);
}

void check_scenario(const SimScenario& sc) {
    if (sc.n < 10) throw ValidationError(fmt::format("scenario n must be at least 10, got {}", sc.n));
    (void)QuantileLevel(sc.tau);
    if (!(sc.p0 > 0.0 && sc.p0 < 1.0)) throw ValidationError(fmt::format("p0 must lie in (0,1), got {}", sc.p0));
}

}  // namespace

std::string to_string(ErrorLaw law) {
    switch (law) {
    case ErrorLaw::EV: return "ev";
    case ErrorLaw::Logistic: return "logistic";
    case ErrorLaw::ChiSq3: return "chisq3";
    }
    return "?";
}

std::string to_string(Hetero h) { return h == Hetero::M1 ? "m1" : "m2"; }

std::string to_string(Scheme s) { return s == Scheme::PIC ? "pic" : "ic"; }

double error_quantile(ErrorLaw law, double u) {
    if (!(u > 0.0 && u < 1.0)) throw ValidationError(fmt::format("error_quantile needs u in (0,1), got {}", u));
    switch (law) {
    case ErrorLaw::EV: return -1.0 + std::log(-std::log1p(-u));
    case ErrorLaw::Logistic: return -2.0 + std::log(u / (1.0 - u));
    case ErrorLaw::ChiSq3: return 2.0 * boost::math::gamma_p_inv(1.5, u);
    }
    return kNaN;
}

Eigen::VectorXd SimScenario::beta0() const { return Eigen::Vector3d(1.5, 1.0, 1.0); }

double sigma(Hetero h, double x1) {
    const double a = h == Hetero::M1 ? 0.3 : 0.5;
    return 1.0 + a * (1.0 - x1) * (1.0 - x1);
}

SimData generate(const SimScenario& sc, std::uint64_t replicate) {
    check_scenario(sc);
    CounterRng rng(sc.seed, stream_id(StreamPurpose::Data, replicate));
    const double e_tau = error_quantile(sc.law, sc.tau);
    SimData out;
    out.data.covariate_names = {"x1", "x2"};
    out.data.observations.reserve(sc.n);
    out.true_times.reserve(sc.n);
    for (std::size_t i = 0; i < sc.n; ++i) {
        const auto d = draw_subject(sc, e_tau, rng);
        out.data.observations.push_back(to_observation(sc, d));
        out.true_times.push_back(d.t);
    }
    return out;
}

double censored_fraction(const Dataset& data) {
    if (data.size() == 0) return 0.0;
    std::size_t censored = 0;
    for (const auto& o : data.observations) censored += o.exact ? 0 : 1;
    return static_cast<double>(censored) / static_cast<double>(data.size());
}

double calibrate_p0(const SimScenario& scenario, double target, std::size_t pilot_n) {
    if (!(target > 0.0 && target < 1.0))
        throw ValidationError(fmt::format("censoring rate {} cannot be calibrated through p0 (use the IC scheme for 1)", target));
    SimScenario sc = scenario;
    sc.scheme = Scheme::PIC;
    CounterRng rng(sc.seed, stream_id(StreamPurpose::Calibration, 0));
    const double e_tau = error_quantile(sc.law, sc.tau);
    std::vector<Draw> pilot;
    pilot.reserve(pilot_n);
    for (std::size_t i = 0; i < pilot_n; ++i) pilot.push_back(draw_subject(sc, e_tau, rng));
    auto rate = [&](double p0) {
        sc.p0 = p0;
        std::size_t censored = 0;
        for (const auto& d : pilot) censored += observed_exactly(sc, d) ? 0 : 1;
        return static_cast<double>(censored) / static_cast<double>(pilot_n);
    };
    double lo = 1e-9, hi = 1.0 - 1e-9;  // rate decreases in p0
    if (rate(hi) > target || rate(lo) < target)
        throw ValidationError(fmt::format("censoring rate {} is outside the achievable range [{}, {}]", target, rate(hi), rate(lo)));
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (rate(mid) > target) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double relative_efficiency(double mse_a, double mse_b) { return mse_b / mse_a; }

EstimatorMetrics summarize(const std::string& name, const Eigen::MatrixXd& est, const Eigen::MatrixXd& se,
                           const Eigen::VectorXd& beta0, double ci_level) {
    EstimatorMetrics m;
    m.name = name;
    m.estimates = est;
    m.used = static_cast<std::size_t>(est.rows());
    const auto R = static_cast<std::size_t>(est.rows());
    const double z = stats::normal_quantile(0.5 + 0.5 * ci_level);
    std::vector<double> sq_norm(R, 0.0);
    for (Eigen::Index k = 0; k < est.cols(); ++k) {
        std::vector<double> b(R), sq(R), s(R), cover(R);
        for (std::size_t r = 0; r < R; ++r) {
            const auto ri = static_cast<Eigen::Index>(r);
            b[r] = est(ri, k);
            const double err = est(ri, k) - beta0(k);
            sq[r] = err * err;
            sq_norm[r] += sq[r];
            if (se.size() > 0) {
                s[r] = se(ri, k);
                cover[r] = std::abs(err) <= z * se(ri, k) ? 1.0 : 0.0;
            }
        }
        CoefficientMetrics c;
        c.bias = stats::mean(b) - beta0(k);
        c.ese = stats::sample_sd(b);
        c.mse = stats::mean(sq);
        c.bse = se.size() > 0 ? stats::mean(s) : kNaN;
        c.cp = se.size() > 0 ? stats::mean(cover) : kNaN;
        m.coefficients.push_back(c);
    }
    m.total_mse = stats::mean(sq_norm);
    return m;
}

StudyResult run_study(const SimScenario& scenario, std::span<const EstimatorConfig> estimators, const StudyOptions& options) {
    check_scenario(scenario);
    if (options.replicates < 2) throw ValidationError("a study needs at least 2 replicates");
    if (estimators.empty()) throw ValidationError("a study needs at least one estimator");
    const std::size_t R = options.replicates;
    const std::size_t E = estimators.size();
    const Eigen::VectorXd beta0 = scenario.beta0();
    const auto p = beta0.size();

    struct Slot {
        std::optional<Eigen::VectorXd> beta;
        Eigen::VectorXd se;
    };
    std::vector<std::vector<Slot>> slots(E, std::vector<Slot>(R));
    std::vector<double> fractions(R);

    parallel_for(R, options.threads, [&](std::size_t r) {
        const auto sim = generate(scenario, r);
        fractions[r] = censored_fraction(sim.data);
        std::vector<EstimatorSpec> specs(E);
        for (std::size_t e = 0; e < E; ++e) {
            specs[e].kind = estimators[e].kind;
            specs[e].tau = scenario.tau;
            if (estimators[e].bandwidths) specs[e].kernel = kernel_with_bandwidths(sim.data, *estimators[e].bandwidths);
        }
        if (options.bootstrap > 0) {
            BootstrapConfig cfg;
            cfg.n_replicates = options.bootstrap;
            cfg.seed = splitmix64(scenario.seed ^ splitmix64(r));
            cfg.ci_level = options.ci_level;
            cfg.ci_kind = CiKind::Wald;
            try {
                const auto res = bootstrap_many(sim.data, specs, cfg);
                for (std::size_t e = 0; e < E; ++e) slots[e][r] = {res[e].beta_hat, res[e].se};
                return;
            } catch (const std::exception&) {
                // fall through: estimators are retried one at a time
            }
            for (std::size_t e = 0; e < E; ++e) {
                try {
                    const auto res = bootstrap(sim.data, specs[e], cfg);
                    slots[e][r] = {res.beta_hat, res.se};
                } catch (const std::exception&) {
                }
            }
            return;
        }
        const EmIndex index(sim.data);
        std::vector<PreparedSpec> prepared;
        std::vector<std::optional<EndpointTable>> tables(E);
        for (std::size_t e = 0; e < E; ++e) {
            try {
                prepared.push_back(prepare(sim.data, specs[e]));
                std::size_t g = e;
                for (std::size_t j = 0; j < e; ++j)
                    if (tables[j] && shares_endpoints(prepared[j], prepared[e])) g = j;
                if (g == e) tables[e] = endpoint_table(sim.data, index, prepared[e]);
                slots[e][r].beta = fit_from_endpoints(sim.data, prepared[e], tables[g]->values, scenario.tau).beta;
            } catch (const std::exception&) {
                if (prepared.size() == e) prepared.push_back(PreparedSpec{});
            }
        }
    });

    StudyResult out;
    out.scenario = scenario;
    out.censored_fraction = stats::mean(fractions);
    for (std::size_t e = 0; e < E; ++e) {
        std::size_t kept = 0;
        for (const auto& s : slots[e]) kept += s.beta ? 1 : 0;
        const std::size_t dropped = R - kept;
        if (20 * dropped > R)
            throw NumericalError(fmt::format("study: estimator {} failed in {} of {} replicates", estimators[e].name, dropped, R));
        Eigen::MatrixXd est(static_cast<Eigen::Index>(kept), p);
        Eigen::MatrixXd se = options.bootstrap > 0 ? Eigen::MatrixXd(static_cast<Eigen::Index>(kept), p) : Eigen::MatrixXd();
        Eigen::Index row = 0;
        for (const auto& s : slots[e]) {
            if (!s.beta) continue;
            est.row(row) = s.beta->transpose();
            if (options.bootstrap > 0) se.row(row) = s.se.transpose();
            ++row;
        }
        auto m = summarize(estimators[e].name, est, se, beta0, options.ci_level);
        m.dropped = dropped;
        out.estimators.push_back(std::move(m));
    }
    return out;
}

std::vector<SweepRow> censoring_sweep(const SimScenario& scenario, std::span<const EstimatorConfig> estimators,
                                      std::span<const double> rates, const StudyOptions& options) {
    std::vector<SweepRow> rows;
    for (double rate : rates) {
        if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError(fmt::format("censoring rate {} is outside (0,1]", rate));
        SweepRow row;
        row.rate = rate;
        SimScenario sc = scenario;
        if (rate >= 1.0) {
            sc.scheme = Scheme::IC;
            row.p0 = kNaN;
        } else {
            sc.scheme = Scheme::PIC;
            sc.p0 = row.p0 = calibrate_p0(scenario, rate);
        }
        row.study = run_study(sc, estimators, options);
        for (const auto& m : row.study.estimators) row.log_mse.push_back(std::log(m.total_mse * 100.0));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace icqr
