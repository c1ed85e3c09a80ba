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

#include "icqr/pipeline.hpp"

#include "icqr/parallel.hpp"
#include "icqr/qr_solver.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace icqr {

std::string to_string(EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::IcqrKernel: return "ks";
    case EstimatorKind::Zfd: return "zfd";
    case EstimatorKind::IcqrPlugin: return "plugin";
    }
    return "?";
}

PreparedSpec prepare(const Dataset& dataset, const EstimatorSpec& spec) {
    (void)QuantileLevel(spec.tau);
    PreparedSpec out;
    out.spec = spec;
    if (spec.kind == EstimatorKind::IcqrPlugin) {
        if (!spec.provider) throw ValidationError("plug-in estimator requires a CDF provider");
    } else {
        out.kernel = spec.kernel ? *spec.kernel : auto_kernel(dataset);
        if (out.kernel.components.size() + 1 != dataset.dim())
            throw ValidationError(fmt::format("kernel has {} components for {} covariates", out.kernel.components.size(), dataset.dim() - 1));
        for (const auto& c : out.kernel.components)
            if (c.kind == KernelKind::Gaussian && !(c.bandwidth > 0.0 && std::isfinite(c.bandwidth)))
                throw ValidationError(fmt::format("bandwidth must be positive, got {}", c.bandwidth));
    }
    out.m_star = spec.m_star ? *spec.m_star : default_m_star(dataset);
    return out;
}

bool shares_endpoints(const PreparedSpec& a, const PreparedSpec& b) {
    const bool a_plugin = a.spec.kind == EstimatorKind::IcqrPlugin;
    const bool b_plugin = b.spec.kind == EstimatorKind::IcqrPlugin;
    if (a_plugin || b_plugin) return a_plugin && b_plugin && a.spec.provider == b.spec.provider;
    return a.kernel == b.kernel && a.spec.em.tol == b.spec.em.tol && a.spec.em.max_iter == b.spec.em.max_iter &&
           a.spec.em.link == b.spec.em.link && a.spec.em.accelerate == b.spec.em.accelerate;
}

EndpointTable endpoint_table(const Dataset& dataset, const EmIndex& index, const PreparedSpec& prepared,
                             std::span<const double> multipliers, std::size_t threads) {
    if (prepared.spec.kind == EstimatorKind::IcqrPlugin) {
        EndpointTable table;
        table.values = evaluate_endpoints(dataset, *prepared.spec.provider);
        return table;
    }
    return kernel_endpoint_cdfs(dataset, index, prepared.kernel, prepared.spec.em, multipliers, threads);
}

QuantileFit fit_from_endpoints(const Dataset& dataset, const PreparedSpec& prepared, std::span<const EndpointCdf> endpoints,
                               double tau, std::span<const double> row_multipliers) {
    const auto scheme = prepared.spec.kind == EstimatorKind::Zfd ? WeightScheme::ZeroIndeterminate : WeightScheme::Redistribute;
    auto rows = augment(dataset, endpoints, QuantileLevel(tau), prepared.m_star, scheme);
    if (!row_multipliers.empty()) {
        if (row_multipliers.size() != dataset.size()) throw ValidationError("multiplier count does not match the dataset");
        for (auto& r : rows) r.weight *= row_multipliers[r.origin];
    }
    if (scheme == WeightScheme::ZeroIndeterminate) {
        const auto usable = std::count_if(rows.begin(), rows.end(), [](const AugmentedRow& r) { return r.weight >= 1e-12; });
        if (static_cast<std::size_t>(usable) < dataset.dim())
            throw ValidationError(fmt::format("zfd: dropping order-indeterminate subjects leaves {} usable rows for {} coefficients",
                                              usable, dataset.dim()));
    }
    return solve(CheckLossProblem::from_rows(rows, QuantileLevel(tau), static_cast<double>(dataset.size())));
}

FitResult fit(const Dataset& dataset, const EstimatorSpec& spec, std::size_t threads) {
    validate(dataset);
    const auto prepared = prepare(dataset, spec);
    const EmIndex index(dataset);
    FitResult out;
    out.em = endpoint_table(dataset, index, prepared, {}, threads);
    out.fit = fit_from_endpoints(dataset, prepared, out.em.values, spec.tau);
    out.kernel = prepared.kernel;
    out.m_star = prepared.m_star;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& f = out.em.values[i];
        if (is_indeterminate(f.at_left, f.at_right, spec.tau, classify(dataset[i]))) ++out.indeterminate;
    }
    return out;
}

std::vector<ProcessEntry> quantile_process(const Dataset& dataset, const EstimatorSpec& spec, std::span<const double> taus,
                                           std::size_t threads) {
    if (taus.empty()) throw ValidationError("quantile grid is empty");
    for (std::size_t k = 0; k < taus.size(); ++k) {
        (void)QuantileLevel(taus[k]);
        if (k > 0 && !(taus[k] > taus[k - 1])) throw ValidationError("quantile grid must be strictly increasing");
    }
    validate(dataset);
    const auto prepared = prepare(dataset, spec);
    const EmIndex index(dataset);
    const auto table = endpoint_table(dataset, index, prepared, {}, threads);
    std::vector<ProcessEntry> out(taus.size());
    parallel_for(taus.size(), threads, [&](std::size_t k) {
        out[k].tau = taus[k];
        try {
            out[k].fit = fit_from_endpoints(dataset, prepared, table.values, taus[k]);
        } catch (const std::exception& e) {
            out[k].error = e.what();
        }
    });
    return out;
}

}  // namespace icqr
