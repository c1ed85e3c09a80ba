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

#include "icqr/weighting.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace icqr {

namespace {

constexpr double kDegenerate = 1e-12;

void check_probability(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("{} = {} is not a probability", what, v));
}

}  // namespace

double local_weight(double at_left, double at_right, double tau, CensoringClass cls) {
    switch (cls) {
    case CensoringClass::Exact:
        throw ValidationError("local_weight is undefined for exact observations");
    case CensoringClass::Interval: {
        check_probability(at_left, "F(L|x)");
        check_probability(at_right, "F(R|x)");
        if (at_left > at_right) throw ValidationError(fmt::format("F(L|x) = {} exceeds F(R|x) = {}", at_left, at_right));
        if (at_left >= tau) return 1.0;
        if (at_right <= tau) return 0.0;
        if (at_right - at_left < kDegenerate) return tau <= 0.5 * (at_left + at_right) ? 1.0 : 0.0;
        return (tau - at_left) / (at_right - at_left);
    }
    case CensoringClass::LeftCensored:
        check_probability(at_right, "F(R|x)");
        if (at_right < kDegenerate) return 1.0;
        return std::min(1.0, tau / at_right);
    case CensoringClass::RightCensored:
        check_probability(at_left, "F(L|x)");
        if (at_left >= tau) return 1.0;
        return std::clamp((tau - at_left) / (1.0 - at_left), 0.0, 1.0);
    }
    return 1.0;
}

bool is_indeterminate(double at_left, double at_right, double tau, CensoringClass cls) {
    switch (cls) {
    case CensoringClass::Exact: return false;
    case CensoringClass::Interval: return at_left < tau && tau < at_right;
    case CensoringClass::LeftCensored: return tau < at_right;
    case CensoringClass::RightCensored: return at_left < tau;
    }
    return false;
}

double default_m_star(const Dataset& dataset, double beta_radius) {
    double max_end = 0.0;
    double max_norm = 0.0;
    for (const auto& o : dataset.observations) {
        for (double e : {o.left, o.right})
            if (std::isfinite(e)) max_end = std::max(max_end, std::abs(e));
        max_norm = std::max(max_norm, o.x.norm());
    }
    return 10.0 * (max_end + max_norm * beta_radius);
}

std::vector<EndpointCdf> evaluate_endpoints(const Dataset& dataset, const CdfProvider& cdf) {
    std::vector<EndpointCdf> out(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& o = dataset[i];
        const double fl = cdf.cdf(o.left, o.x);
        out[i] = {fl, o.exact ? fl : cdf.cdf(o.right, o.x)};
    }
    return out;
}

std::vector<AugmentedRow> augment(const Dataset& dataset, std::span<const EndpointCdf> endpoints, QuantileLevel tau,
                                  double m_star, WeightScheme scheme) {
    if (!(m_star > 0.0) || !std::isfinite(m_star)) throw ValidationError(fmt::format("M* must be positive and finite, got {}", m_star));
    if (endpoints.size() != dataset.size()) throw ValidationError("endpoint CDF table does not match the dataset");
    std::vector<AugmentedRow> rows;
    rows.reserve(2 * dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& o = dataset[i];
        const auto cls = classify(o);
        if (cls == CensoringClass::Exact) {
            rows.push_back({o.time(), o.x, 1.0, i, RowSide::Exact});
            continue;
        }
        const auto& f = endpoints[i];
        double w = local_weight(f.at_left, f.at_right, tau, cls);
        double w_right = 1.0 - w;
        if (scheme == WeightScheme::ZeroIndeterminate && is_indeterminate(f.at_left, f.at_right, tau, cls)) w = w_right = 0.0;
        const double lo = std::isfinite(o.left) ? o.left : -m_star;
        const double hi = std::isfinite(o.right) ? o.right : m_star;
        rows.push_back({lo, o.x, w, i, RowSide::Left});
        rows.push_back({hi, o.x, w_right, i, RowSide::Right});
    }
    return rows;
}

std::vector<AugmentedRow> build_augmented(const Dataset& dataset, const CdfProvider& cdf, QuantileLevel tau, double m_star) {
    const auto ends = evaluate_endpoints(dataset, cdf);
    return augment(dataset, ends, tau, m_star, WeightScheme::Redistribute);
}

std::vector<AugmentedRow> zfd_weights(const Dataset& dataset, const CdfProvider& cdf, QuantileLevel tau, double m_star) {
    const auto ends = evaluate_endpoints(dataset, cdf);
    return augment(dataset, ends, tau, m_star, WeightScheme::ZeroIndeterminate);
}

}  // namespace icqr
