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

#pragma once

#include "icqr/core.hpp"
#include "icqr/pipeline.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace icqr {

enum class CiKind { Percentile, Wald };

struct BootstrapConfig {
    std::size_t n_replicates = 200;
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    CiKind ci_kind = CiKind::Percentile;
    std::size_t threads = 1;
};

struct InferenceResult {
    Eigen::VectorXd beta_hat;
    Eigen::VectorXd se;
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
    Eigen::MatrixXd replicates;  // one row per retained replicate, in replicate order
    std::size_t dropped = 0;
};

/// Standard exponential multipliers for replicate b; a function of (seed, b) only.
std::vector<double> perturbation_multipliers(std::uint64_t seed, std::size_t replicate, std::size_t n);

/// Refit with subject i's kernel weight and pseudo-row weights scaled by eta_i.
QuantileFit perturb_fit(const Dataset& dataset, const EstimatorSpec& spec, std::span<const double> multipliers);

InferenceResult bootstrap(const Dataset& dataset, const EstimatorSpec& spec, const BootstrapConfig& config);

/// Bootstrap for several estimators on common multipliers; estimators that
/// share an endpoint table (same kernel) share its EM runs.
std::vector<InferenceResult> bootstrap_many(const Dataset& dataset, std::span<const EstimatorSpec> specs,
                                            const BootstrapConfig& config);

/// Intervals from a replicate matrix, as used by bootstrap().
void fill_intervals(InferenceResult& result, double ci_level, CiKind kind);

}  // namespace icqr
