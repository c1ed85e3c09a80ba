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

#include "icqr/cdf_npmle.hpp"
#include "icqr/core.hpp"
#include "icqr/weighting.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icqr {

enum class EstimatorKind {
    IcqrKernel,  // redistribution weights from the local kernel NPMLE
    Zfd,         // same CDF estimate, order-indeterminate subjects dropped
    IcqrPlugin,  // redistribution weights from a caller-supplied CdfProvider
};

std::string to_string(EstimatorKind kind);

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::IcqrKernel;
    std::optional<KernelSpec> kernel;  // empty: normal-scale bandwidths
    double tau = 0.5;
    std::optional<double> m_star;      // empty: default_m_star
    std::shared_ptr<const CdfProvider> provider;  // IcqrPlugin only
    EmOptions em;
};

/// An EstimatorSpec with the data-dependent choices (kernel, M*) fixed.
struct PreparedSpec {
    EstimatorSpec spec;
    KernelSpec kernel;
    double m_star = 0.0;
};

PreparedSpec prepare(const Dataset& dataset, const EstimatorSpec& spec);

/// True when both specs evaluate F at the endpoints identically, so one
/// endpoint table serves both.
bool shares_endpoints(const PreparedSpec& a, const PreparedSpec& b);

/// F(L_i|x_i), F(R_i|x_i) for every subject. `multipliers` perturb the kernel
/// weights (ignored for plug-in providers).
EndpointTable endpoint_table(const Dataset& dataset, const EmIndex& index, const PreparedSpec& prepared,
                             std::span<const double> multipliers = {}, std::size_t threads = 1);

/// Weights, augmentation and solve from a precomputed endpoint table.
/// `row_multipliers` scale every pseudo-row of subject i by eta_i.
QuantileFit fit_from_endpoints(const Dataset& dataset, const PreparedSpec& prepared, std::span<const EndpointCdf> endpoints,
                               double tau, std::span<const double> row_multipliers = {});

struct FitResult {
    QuantileFit fit;
    KernelSpec kernel;
    double m_star = 0.0;
    std::size_t indeterminate = 0;  // censored subjects with F(L) < tau < F(R)
    EndpointTable em;               // per-subject EM diagnostics (empty for plug-in)
};

FitResult fit(const Dataset& dataset, const EstimatorSpec& spec, std::size_t threads = 1);

struct ProcessEntry {
    double tau = 0.0;
    std::optional<QuantileFit> fit;
    std::string error;
};

/// Independent fits over an increasing tau grid on one shared endpoint table.
std::vector<ProcessEntry> quantile_process(const Dataset& dataset, const EstimatorSpec& spec, std::span<const double> taus,
                                           std::size_t threads = 1);

}  // namespace icqr
