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

#include "icqr/inference.hpp"

#include "icqr/parallel.hpp"
#include "icqr/rng.hpp"
#include "icqr/stats.hpp"

#include <fmt/format.h>

#include <optional>

namespace icqr {

std::vector<double> perturbation_multipliers(std::uint64_t seed, std::size_t replicate, std::size_t n) {
    CounterRng rng(seed, stream_id(StreamPurpose::Bootstrap, replicate));
    std::vector<double> eta(n);
    for (double& e : eta) e = rng.exponential();
    return eta;
}

QuantileFit perturb_fit(const Dataset& dataset, const EstimatorSpec& spec, std::span<const double> multipliers) {
    validate(dataset);
    if (multipliers.size() != dataset.size()) throw ValidationError("multiplier count does not match the dataset");
    for (double e : multipliers)
        if (!(e > 0.0) || !std::isfinite(e)) throw ValidationError(fmt::format("perturbation multipliers must be positive, got {}", e));
    const auto prepared = prepare(dataset, spec);
    const EmIndex index(dataset);
    const auto table = endpoint_table(dataset, index, prepared, multipliers);
    return fit_from_endpoints(dataset, prepared, table.values, spec.tau, multipliers);
}

void fill_intervals(InferenceResult& r, double ci_level, CiKind kind) {
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError(fmt::format("confidence level must lie in (0,1), got {}", ci_level));
    const auto p = r.beta_hat.size();
    r.se.resize(p);
    r.ci_lower.resize(p);
    r.ci_upper.resize(p);
    const double z = stats::normal_quantile(0.5 + 0.5 * ci_level);
    for (Eigen::Index k = 0; k < p; ++k) {
        std::vector<double> col(static_cast<std::size_t>(r.replicates.rows()));
        for (Eigen::Index b = 0; b < r.replicates.rows(); ++b) col[static_cast<std::size_t>(b)] = r.replicates(b, k);
        r.se(k) = stats::sample_sd(col);
        if (kind == CiKind::Wald) {
            r.ci_lower(k) = r.beta_hat(k) - z * r.se(k);
            r.ci_upper(k) = r.beta_hat(k) + z * r.se(k);
        } else {
            r.ci_lower(k) = stats::order_statistic_quantile(col, 0.5 - 0.5 * ci_level);
            r.ci_upper(k) = stats::order_statistic_quantile(col, 0.5 + 0.5 * ci_level);
        }
    }
}

std::vector<InferenceResult> bootstrap_many(const Dataset& dataset, std::span<const EstimatorSpec> specs,
                                            const BootstrapConfig& config) {
    if (config.n_replicates < 2) throw ValidationError("bootstrap needs at least 2 replicates");
    validate(dataset);
    const std::size_t n = dataset.size();
    const EmIndex index(dataset);

    std::vector<PreparedSpec> prepared;
    std::vector<std::size_t> group;  // index of the first spec sharing the endpoint table
    for (const auto& s : specs) {
        prepared.push_back(prepare(dataset, s));
        std::size_t g = prepared.size() - 1;
        for (std::size_t j = 0; j + 1 < prepared.size(); ++j)
            if (group[j] == j && shares_endpoints(prepared[j], prepared.back())) {
                g = j;
                break;
            }
        group.push_back(g);
    }

    std::vector<InferenceResult> out(specs.size());
    {
        std::vector<EndpointTable> tables(specs.size());
        for (std::size_t s = 0; s < specs.size(); ++s) {
            if (group[s] == s) tables[s] = endpoint_table(dataset, index, prepared[s], {}, config.threads);
            out[s].beta_hat = fit_from_endpoints(dataset, prepared[s], tables[group[s]].values, specs[s].tau).beta;
        }
    }

    const std::size_t B = config.n_replicates;
    std::vector<std::vector<std::optional<Eigen::VectorXd>>> draws(specs.size(), std::vector<std::optional<Eigen::VectorXd>>(B));
    parallel_for(B, config.threads, [&](std::size_t b) {
        const auto eta = perturbation_multipliers(config.seed, b, n);
        std::vector<std::optional<EndpointTable>> tables(specs.size());
        for (std::size_t s = 0; s < specs.size(); ++s) {
            try {
                auto& t = tables[group[s]];
                if (!t) t = endpoint_table(dataset, index, prepared[group[s]], eta);
                draws[s][b] = fit_from_endpoints(dataset, prepared[s], t->values, specs[s].tau, eta).beta;
            } catch (const std::exception&) {
                // counted below
            }
        }
    });

    for (std::size_t s = 0; s < specs.size(); ++s) {
        auto& r = out[s];
        std::size_t kept = 0;
        for (const auto& d : draws[s]) kept += d ? 1 : 0;
        r.dropped = B - kept;
        if (10 * r.dropped > B)
            throw NumericalError(fmt::format("bootstrap: {} of {} replicates failed for estimator {}", r.dropped, B, to_string(specs[s].kind)));
        r.replicates.resize(static_cast<Eigen::Index>(kept), r.beta_hat.size());
        Eigen::Index row = 0;
        for (const auto& d : draws[s])
            if (d) r.replicates.row(row++) = d->transpose();
        fill_intervals(r, config.ci_level, config.ci_kind);
    }
    return out;
}

InferenceResult bootstrap(const Dataset& dataset, const EstimatorSpec& spec, const BootstrapConfig& config) {
    return bootstrap_many(dataset, std::span<const EstimatorSpec>(&spec, 1), config).front();
}

}  // namespace icqr
