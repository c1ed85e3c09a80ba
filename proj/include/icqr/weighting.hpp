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

#include <cstddef>
#include <span>
#include <vector>

namespace icqr {

/// Evaluator of F(t | x). Implementations must be non-decreasing in t, return
/// 0 at -inf and 1 at +inf, and be safe for concurrent calls.
class CdfProvider {
public:
    virtual ~CdfProvider() = default;
    virtual double cdf(double t, const Eigen::VectorXd& x) const = 0;
};

/// F(L_i | x_i) and F(R_i | x_i) for one subject. Exact rows carry F(T_i | x_i) in both.
struct EndpointCdf {
    double at_left = 0.0;
    double at_right = 1.0;
};

enum class RowSide { Exact, Left, Right };

struct AugmentedRow {
    double t = 0.0;
    Eigen::VectorXd x;
    double weight = 1.0;
    std::size_t origin = 0;
    RowSide side = RowSide::Exact;
};

/// Redistribution-of-mass weight placed on the left pseudo-row of a censored
/// subject. For left-censored rows `at_left` is ignored (taken as 0), for
/// right-censored rows `at_right` is ignored (taken as 1).
double local_weight(double at_left, double at_right, double tau, CensoringClass cls);

/// True when the subject is order-indeterminate at tau: F(L) < tau < F(R) with
/// the one-sided conventions of local_weight.
bool is_indeterminate(double at_left, double at_right, double tau, CensoringClass cls);

/// 10 * (max finite |endpoint| + max_i ||x_i|| * beta_radius).
double default_m_star(const Dataset& dataset, double beta_radius = 10.0);

std::vector<EndpointCdf> evaluate_endpoints(const Dataset& dataset, const CdfProvider& cdf);

enum class WeightScheme { Redistribute, ZeroIndeterminate };

/// Builds the pseudo-data from precomputed endpoint CDF values. Exact subjects
/// give one row of weight 1, censored subjects two rows with weights w and 1-w
/// (both zero for indeterminate subjects under ZeroIndeterminate). Rows of
/// weight 0 are kept.
std::vector<AugmentedRow> augment(const Dataset& dataset, std::span<const EndpointCdf> endpoints, QuantileLevel tau,
                                  double m_star, WeightScheme scheme = WeightScheme::Redistribute);

std::vector<AugmentedRow> build_augmented(const Dataset& dataset, const CdfProvider& cdf, QuantileLevel tau, double m_star);

/// Baseline that discards the order-indeterminate subjects.
std::vector<AugmentedRow> zfd_weights(const Dataset& dataset, const CdfProvider& cdf, QuantileLevel tau, double m_star);

}  // namespace icqr
