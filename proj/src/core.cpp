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

#include "icqr/core.hpp"

#include <fmt/format.h>

#include <cmath>

namespace icqr {

std::string_view to_string(CensoringClass c) {
    switch (c) {
    case CensoringClass::Exact: return "exact";
    case CensoringClass::Interval: return "interval";
    case CensoringClass::LeftCensored: return "left-censored";
    case CensoringClass::RightCensored: return "right-censored";
    }
    return "unknown";
}

Observation Observation::exact_at(double t, Eigen::VectorXd x) {
    Observation o;
    o.exact = true;
    o.left = t;
    o.right = t;
    o.x = std::move(x);
    return o;
}

Observation Observation::censored(double left, double right, Eigen::VectorXd x) {
    Observation o;
    o.exact = false;
    o.left = left;
    o.right = right;
    o.x = std::move(x);
    return o;
}

CensoringClass classify(const Observation& obs) {
    if (obs.exact) {
        if (!std::isfinite(obs.left) || obs.left != obs.right)
            throw ValidationError("exact observation needs a finite time with left == right == time");
        return CensoringClass::Exact;
    }
    if (std::isnan(obs.left) || std::isnan(obs.right))
        throw ValidationError("censored observation has a NaN endpoint");
    if (!(obs.left < obs.right))
        throw ValidationError(fmt::format("censored observation needs left < right (got {} >= {})", obs.left, obs.right));
    const bool lo_open = std::isinf(obs.left);
    const bool hi_open = std::isinf(obs.right);
    if (lo_open && obs.left > 0) throw ValidationError("left endpoint cannot be +inf");
    if (hi_open && obs.right < 0) throw ValidationError("right endpoint cannot be -inf");
    if (lo_open && hi_open)
        throw ValidationError("fully uninformative observation (left = -inf and right = +inf)");
    if (lo_open) return CensoringClass::LeftCensored;
    if (hi_open) return CensoringClass::RightCensored;
    return CensoringClass::Interval;
}

QuantileLevel::QuantileLevel(double tau) : tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError(fmt::format("quantile level must lie in (0,1), got {}", tau));
}

const Dataset& validate(const Dataset& dataset) {
    if (dataset.observations.empty()) throw ValidationError("dataset is empty");
    const auto p = dataset.observations.front().x.size();
    if (p < 1) throw ValidationError("row 0: covariate vector is empty");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& o = dataset[i];
        if (o.x.size() != p)
            throw ValidationError(fmt::format("row {}: covariate dimension {} differs from {}", i, o.x.size(), p));
        if (!o.x.allFinite()) throw ValidationError(fmt::format("row {}: non-finite covariate", i));
        if (o.x(0) != 1.0) throw ValidationError(fmt::format("row {}: first covariate must be the intercept 1.0", i));
        try {
            classify(o);
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("row {}: {}", i, e.what()));
        }
    }
    return dataset;
}

}  // namespace icqr
