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
#include "icqr/weighting.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace icqr {

/// Weighted quantile check-loss minimization problem:
///   minimize  sum_i w_i rho_tau(t_i - x_i' beta).
struct CheckLossProblem {
    Eigen::MatrixXd X;  // rows x p
    Eigen::VectorXd t;
    Eigen::VectorXd w;
    double tau = 0.5;
    double n_subjects = 0.0;  // normalizer of the estimating function; 0 means "number of rows"

    std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }

    static CheckLossProblem from_rows(std::span<const AugmentedRow> rows, QuantileLevel tau, double n_subjects = 0.0);
};

double objective(const CheckLossProblem& problem, const Eigen::VectorXd& beta);

/// n^{-1} sum_i w_i x_i (tau - I(t_i - x_i' beta <= 0)).
Eigen::VectorXd subgradient(const CheckLossProblem& problem, const Eigen::VectorXd& beta);

/// Bound on |subgradient| componentwise at any LP vertex:
/// p * max_i |x_ij| * max_i w_i / n.
double vertex_subgradient_bound(const CheckLossProblem& problem);

/// Exact minimizer; returns a vertex of the LP (p rows with zero residual).
/// Rows with weight below 1e-12 are ignored. Throws ValidationError when the
/// positive-weight design is rank deficient.
QuantileFit solve(const CheckLossProblem& problem);

}  // namespace icqr
