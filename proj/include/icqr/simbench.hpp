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
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icqr {

enum class ErrorLaw { EV, Logistic, ChiSq3 };
enum class Hetero { M1, M2 };
enum class Scheme { PIC, IC };

std::string to_string(ErrorLaw law);
std::string to_string(Hetero h);
std::string to_string(Scheme s);

/// Quantile function of the raw error epsilon: EV is minimum-type with
/// location -1, Logistic has location -2, ChiSq3 has 3 degrees of freedom.
double error_quantile(ErrorLaw law, double u);

struct SimScenario {
    std::size_t n = 200;
    double tau = 0.5;
    ErrorLaw law = ErrorLaw::EV;
    Hetero hetero = Hetero::M1;
    Scheme scheme = Scheme::PIC;
    double p0 = 0.55;
    std::uint64_t seed = 1;

    Eigen::VectorXd beta0() const;  // (1.5, 1, 1)
};

double sigma(Hetero h, double x1);

struct SimData {
    Dataset data;
    std::vector<double> true_times;  // log-scale T_i
};

/// Replicate r of the scenario; a function of (seed, r) only.
SimData generate(const SimScenario& scenario, std::uint64_t replicate);

/// Fraction of non-exact rows.
double censored_fraction(const Dataset& data);

/// p0 giving the target censored fraction, by bisection on a pilot sample of
/// size `pilot_n` drawn with common random numbers. A target of 1 needs no
/// calibration and is served by the IC scheme.
double calibrate_p0(const SimScenario& scenario, double target, std::size_t pilot_n = 20000);

struct EstimatorConfig {
    std::string name;
    EstimatorKind kind = EstimatorKind::IcqrKernel;
    std::optional<std::vector<double>> bandwidths;  // continuous covariates; empty = normal-scale rule
};

struct StudyOptions {
    std::size_t replicates = 200;
    std::size_t bootstrap = 100;  // 0 disables BSE and CP
    double ci_level = 0.95;
    std::size_t threads = 1;
};

struct CoefficientMetrics {
    double bias = 0.0;
    double ese = 0.0;
    double bse = 0.0;  // NaN without bootstrap
    double cp = 0.0;   // NaN without bootstrap
    double mse = 0.0;
};

struct EstimatorMetrics {
    std::string name;
    std::vector<CoefficientMetrics> coefficients;
    double total_mse = 0.0;  // mean of ||beta_hat - beta0||^2
    std::size_t used = 0;
    std::size_t dropped = 0;
    Eigen::MatrixXd estimates;  // one row per used replicate
};

struct StudyResult {
    SimScenario scenario;
    double censored_fraction = 0.0;  // mean over replicates
    std::vector<EstimatorMetrics> estimators;
};

/// Metrics from replicate estimates (rows) and optional bootstrap SEs.
EstimatorMetrics summarize(const std::string& name, const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& se,
                           const Eigen::VectorXd& beta0, double ci_level);

StudyResult run_study(const SimScenario& scenario, std::span<const EstimatorConfig> estimators, const StudyOptions& options);

/// RE(A over B) = mse_B / mse_A.
double relative_efficiency(double mse_a, double mse_b);

struct SweepRow {
    double rate = 0.0;
    double p0 = 0.0;  // NaN for the IC scheme
    StudyResult study;
    std::vector<double> log_mse;  // log(E||beta_hat - beta0||^2 * 100) per estimator
};

std::vector<SweepRow> censoring_sweep(const SimScenario& scenario, std::span<const EstimatorConfig> estimators,
                                      std::span<const double> rates, const StudyOptions& options);

}  // namespace icqr
