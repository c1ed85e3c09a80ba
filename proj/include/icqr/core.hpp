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

#include <Eigen/Core>

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icqr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Bad input: malformed observations, schema violations, misuse. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The data were fine but a numerical routine could not produce a result. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CensoringClass { Exact, Interval, LeftCensored, RightCensored };

std::string_view to_string(CensoringClass c);

/// One subject's censoring record on the log-time scale.
///
/// Exact rows store the event time in left/right as well. Censored rows keep
/// IEEE infinities for open ends; the finite M* substitution only happens when
/// the augmented pseudo-data are built.
struct Observation {
    bool exact = false;
    double left = -kInf;
    double right = kInf;
    Eigen::VectorXd x;  // x(0) == 1 (intercept)

    double time() const { return left; }

    static Observation exact_at(double t, Eigen::VectorXd x);
    static Observation censored(double left, double right, Eigen::VectorXd x);
};

/// Throws ValidationError for L >= R on a censored row or a non-finite exact time.
CensoringClass classify(const Observation& obs);

class QuantileLevel {
public:
    explicit QuantileLevel(double tau);
    double value() const { return tau_; }
    operator double() const { return tau_; }

private:
    double tau_;
};

struct Dataset {
    std::vector<Observation> observations;
    std::vector<std::string> covariate_names;  // excludes the intercept; may be empty

    std::size_t size() const { return observations.size(); }
    std::size_t dim() const { return observations.empty() ? 0 : static_cast<std::size_t>(observations.front().x.size()); }
    const Observation& operator[](std::size_t i) const { return observations[i]; }
};

/// Returns the dataset unchanged when every row is valid. The first offending
/// row is named in the ValidationError message (0-based index).
const Dataset& validate(const Dataset& dataset);

struct QuantileFit {
    Eigen::VectorXd beta;
    double tau = 0.5;
    double objective = 0.0;         // sum of weight * rho_tau(residual) over the rows
    double subgradient_norm = 0.0;  // max-norm of the estimating function at beta
    std::size_t n_used = 0;         // rows with positive weight
    std::size_t iterations = 0;
};

// rho_tau(u) = u (tau - I(u <= 0))
inline double check_loss(double u, double tau) { return u > 0.0 ? tau * u : (tau - 1.0) * u; }

}  // namespace icqr
