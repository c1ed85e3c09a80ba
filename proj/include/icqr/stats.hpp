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

#include <cstddef>
#include <span>
#include <vector>

namespace icqr::stats {

/// Pairwise (cascade) summation; the result depends only on the order of `v`.
double pairwise_sum(std::span<const double> v);

double mean(std::span<const double> v);

/// Sample standard deviation with the n-1 denominator; 0 for fewer than two values.
double sample_sd(std::span<const double> v);

/// Linear-interpolation sample quantile (Hyndman-Fan type 7).
double quantile_type7(std::vector<double> v, double prob);

/// Inverse empirical CDF (type 1): always returns one of the order statistics.
double order_statistic_quantile(std::vector<double> v, double prob);

/// Standard normal quantile function.
double normal_quantile(double p);

double normal_cdf(double x);

}  // namespace icqr::stats
