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

#include "icqr/cdf_npmle.hpp"

#include "icqr/parallel.hpp"
#include "icqr/stats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

namespace icqr {

namespace {

std::size_t count_le(const std::vector<double>& g, double v) {
    return static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), v) - g.begin());
}

std::size_t index_of(const std::vector<double>& g, double v) {
    const auto it = std::lower_bound(g.begin(), g.end(), v);
    if (it == g.end() || *it != v) throw NumericalError(fmt::format("value {} is not on the support grid", v));
    return static_cast<std::size_t>(it - g.begin());
}

bool is_binary(const Dataset& dataset, std::size_t k) {
    return std::all_of(dataset.observations.begin(), dataset.observations.end(),
                       [k](const Observation& o) { return o.x(k) == 0.0 || o.x(k) == 1.0; });
}

}  // namespace

SupportGrid support_grid(const Dataset& dataset) {
    SupportGrid grid;
    grid.points.reserve(2 * dataset.size());
    for (const auto& o : dataset.observations) {
        if (std::isfinite(o.left)) grid.points.push_back(o.left);
        if (!o.exact && std::isfinite(o.right)) grid.points.push_back(o.right);
    }
    if (grid.points.empty()) throw ValidationError("no finite endpoints: the support grid is empty");
    std::sort(grid.points.begin(), grid.points.end());
    grid.points.erase(std::unique(grid.points.begin(), grid.points.end()), grid.points.end());
    return grid;
}

double silverman_bandwidth(const Dataset& dataset, std::size_t k) {
    const std::size_t n = dataset.size();
    if (n < 2) throw ValidationError("normal-scale bandwidth needs at least two observations");
    if (k == 0 || k >= dataset.dim()) throw ValidationError(fmt::format("covariate index {} out of range", k));
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = dataset[i].x(k);
    const double sd = stats::sample_sd(col);
    const double iqr = stats::quantile_type7(col, 0.75) - stats::quantile_type7(col, 0.25);
    const double scale = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
    if (!(scale > 0.0))
        throw ValidationError(fmt::format("covariate {} has zero spread; supply a bandwidth explicitly", k));
    return 1.06 * scale * std::pow(static_cast<double>(n), -0.2);
}

KernelSpec auto_kernel(const Dataset& dataset, double mismatch) {
    KernelSpec spec;
    for (std::size_t k = 1; k < dataset.dim(); ++k) {
        if (is_binary(dataset, k))
            spec.components.push_back({KernelKind::Indicator, 1.0, mismatch});
        else
            spec.components.push_back({KernelKind::Gaussian, silverman_bandwidth(dataset, k), mismatch});
    }
    return spec;
}

KernelSpec kernel_with_bandwidths(const Dataset& dataset, std::span<const double> bandwidths, double mismatch) {
    KernelSpec spec;
    std::size_t used = 0;
    for (std::size_t k = 1; k < dataset.dim(); ++k) {
        if (is_binary(dataset, k)) {
            spec.components.push_back({KernelKind::Indicator, 1.0, mismatch});
            continue;
        }
        if (used >= bandwidths.size())
            throw ValidationError(fmt::format("{} bandwidth(s) given but covariate {} also needs one", bandwidths.size(), k));
        const double h = bandwidths[used++];
        if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError(fmt::format("bandwidth must be positive, got {}", h));
        spec.components.push_back({KernelKind::Gaussian, h, mismatch});
    }
    if (used != bandwidths.size())
        throw ValidationError(fmt::format("{} bandwidth(s) given for {} continuous covariate(s)", bandwidths.size(), used));
    return spec;
}

std::vector<double> nw_weights(const Eigen::VectorXd& x0, const Dataset& dataset, const KernelSpec& spec,
                               std::span<const double> multipliers) {
    const std::size_t n = dataset.size();
    if (spec.components.size() + 1 != dataset.dim())
        throw ValidationError(fmt::format("kernel has {} components for {} covariates", spec.components.size(), dataset.dim() - 1));
    if (!multipliers.empty() && multipliers.size() != n) throw ValidationError("multiplier count differs from the sample size");
    for (const auto& c : spec.components)
        if (c.kind == KernelKind::Gaussian && !(c.bandwidth > 0.0)) throw ValidationError("kernel bandwidths must be positive");
    std::vector<double> B(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& xi = dataset[i].x;
        double v = 1.0;
        for (std::size_t c = 0; c < spec.components.size(); ++c) {
            const auto& comp = spec.components[c];
            const auto k = static_cast<Eigen::Index>(c + 1);
            if (comp.kind == KernelKind::Gaussian) {
                const double u = (x0(k) - xi(k)) / comp.bandwidth;
                v *= std::exp(-0.5 * u * u);
            } else if (x0(k) != xi(k)) {
                v *= comp.mismatch;
            }
        }
        if (!multipliers.empty()) v *= multipliers[i];
        B[i] = v;
        total += v;
    }
    if (!(total > 0.0) || !std::isfinite(total))
        throw NumericalError("all kernel weights underflowed to zero; increase the bandwidth");
    for (double& b : B) b /= total;
    return B;
}

double effective_time(const Observation& obs) {
    if (obs.exact) return obs.time();
    if (std::isfinite(obs.right)) return obs.right;
    if (std::isfinite(obs.left)) return obs.left;
    throw ValidationError("effective time is undefined when left = -inf and right = +inf");
}

std::vector<double> em_e_step(const Dataset& dataset, std::size_t i, const HazardIncrements& increments) {
    const auto& s = increments.grid->points;
    const auto& dl = increments.d_lambda;
    const auto& o = dataset[i];
    const double tt = effective_time(o);
    std::vector<double> xi(s.size(), 0.0);
    double interval_mass = 0.0;
    const bool interval = !o.exact && std::isfinite(o.right);
    if (interval)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (o.left < s[j] && s[j] <= o.right) interval_mass += dl[j];
    if (interval && !(interval_mass > 0.0))
        throw NumericalError(fmt::format("subject {} has zero hazard mass on its censoring interval", i));
    for (std::size_t j = 0; j < s.size(); ++j) {
        if (o.exact && s[j] == o.time()) xi[j] += 1.0;
        if (interval && o.left < s[j] && s[j] <= o.right) xi[j] += dl[j] / -std::expm1(-interval_mass);
        if (s[j] > tt) xi[j] += dl[j];
    }
    return xi;
}

HazardIncrements em_m_step(const std::vector<std::vector<double>>& xi, std::span<const double> B, const Dataset& dataset,
                           std::shared_ptr<const SupportGrid> grid, std::size_t* dropped) {
    const auto& s = grid->points;
    HazardIncrements out{grid, std::vector<double>(s.size(), 0.0)};
    std::size_t zero = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (s[j] <= effective_time(dataset[i])) {
                num += B[i] * xi[i][j];
                den += B[i];
            }
        }
        if (den > 0.0)
            out.d_lambda[j] = num / den;
        else
            ++zero;
    }
    if (dropped) *dropped = zero;
    return out;
}

// ---------------------------------------------------------------------------

ConditionalCdf::ConditionalCdf(HazardIncrements increments, CdfLink link) : increments_(std::move(increments)) {
    const auto& dl = increments_.d_lambda;
    cum_.resize(dl.size());
    cdf_.resize(dl.size());
    double cum = 0.0;
    double surv = 1.0;
    for (std::size_t j = 0; j < dl.size(); ++j) {
        cum += dl[j];
        cum_[j] = cum;
        if (link == CdfLink::Exponential) {
            cdf_[j] = -std::expm1(-cum);
        } else {
            surv *= 1.0 - std::min(dl[j], 1.0);
            cdf_[j] = 1.0 - surv;
        }
    }
}

double ConditionalCdf::operator()(double t) const {
    if (t == kInf) return 1.0;
    const auto& g = increments_.grid->points;
    const std::size_t k = count_le(g, t);
    return k == 0 ? 0.0 : cdf_[k - 1];
}

double ConditionalCdf::cumulative_hazard(double t) const {
    if (t == kInf) return kInf;
    const auto& g = increments_.grid->points;
    const std::size_t k = count_le(g, t);
    return k == 0 ? 0.0 : cum_[k - 1];
}

EmIndex::EmIndex(const Dataset& dataset) : grid_(std::make_shared<const SupportGrid>(support_grid(dataset))) {
    const auto& g = grid_->points;
    subjects_.reserve(dataset.size());
    for (const auto& o : dataset.observations) {
        Subject s;
        if (o.exact) {
            s.exact = static_cast<int>(index_of(g, o.time()));
            s.tt = s.exact;
            s.left_count = s.exact + 1;
        } else if (std::isfinite(o.right)) {
            s.interval = true;
            s.lo = std::isfinite(o.left) ? static_cast<int>(count_le(g, o.left)) : 0;
            s.hi = static_cast<int>(count_le(g, o.right));
            s.tt = s.hi - 1;
            s.left_count = s.lo;
        } else {
            if (!std::isfinite(o.left)) throw ValidationError("fully uninformative observation has no place on the grid");
            s.tt = static_cast<int>(index_of(g, o.left));
            s.left_count = s.tt + 1;
        }
        subjects_.push_back(s);
    }

    // Sweep the grid: a point carries mass only if some subject's interval
    // closes there after another one opened since the previous closing.
    const std::size_t m = g.size();
    std::vector<char> opens(m + 1, 0), closes(m, 0);
    for (const auto& s : subjects_) {
        if (s.exact >= 0) {
            opens[static_cast<std::size_t>(s.exact)] = 1;
            closes[static_cast<std::size_t>(s.exact)] = 1;
        } else if (s.interval) {
            opens[static_cast<std::size_t>(s.lo)] = 1;
            closes[static_cast<std::size_t>(s.hi - 1)] = 1;
        }
    }
    support_.assign(m, 0);
    bool open = false;
    for (std::size_t j = 0; j < m; ++j) {
        if (opens[j]) open = true;
        if (closes[j] && open) {
            support_[j] = 1;
            open = false;
            last_support_ = static_cast<int>(j);
            ++support_size_;
        }
    }
}

HazardIncrements EmIndex::initial_increments(std::span<const double> B) const {
    const std::size_t m = grid_->size();
    HazardIncrements out{grid_, std::vector<double>(m, 0.0)};
    if (support_size_ == 0) return out;
    const double init = 1.0 / static_cast<double>(support_size_);
    for (std::size_t j = 0; j < m; ++j)
        if (support_[j]) out.d_lambda[j] = init;
    bool anchored = false;
    for (std::size_t i = 0; i < subjects_.size() && !anchored; ++i) {
        if (!(B[i] > 0.0)) continue;
        const auto& s = subjects_[i];
        anchored = s.exact == last_support_ || (s.exact < 0 && !s.interval && s.left_count > last_support_);
    }
    if (!anchored) out.d_lambda[static_cast<std::size_t>(last_support_)] = kInf;
    return out;
}

double EmIndex::log_likelihood(std::span<const double> B, std::span<const double> d_lambda) const {
    const std::size_t m = grid_->size();
    std::vector<double> cum(m);
    std::partial_sum(d_lambda.begin(), d_lambda.end(), cum.begin());
    auto cum_at = [&](int count) { return count > 0 ? cum[static_cast<std::size_t>(count - 1)] : 0.0; };
    double ll = 0.0;
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
        if (B[i] == 0.0) continue;
        const auto& s = subjects_[i];
        double term;
        if (s.exact >= 0) {
            const auto e = static_cast<std::size_t>(s.exact);
            term = std::log(d_lambda[e]) - cum[e];
        } else if (s.interval) {
            const double lam_left = cum_at(s.lo);
            const double mass = std::accumulate(d_lambda.begin() + s.lo, d_lambda.begin() + s.hi, 0.0);
            term = -lam_left + std::log(-std::expm1(-mass));
        } else {
            term = -cum_at(s.left_count);
        }
        ll += B[i] * term;
    }
    return ll / static_cast<double>(subjects_.size());
}

ConditionalCdf EmIndex::run(std::span<const double> B_raw, const EmOptions& options, bool trace) const {
    const std::size_t n = subjects_.size();
    const std::size_t m = grid_->size();
    if (B_raw.size() != n) throw ValidationError("kernel weight count differs from the sample size");
    const double total = std::accumulate(B_raw.begin(), B_raw.end(), 0.0);
    if (!(total > 0.0)) throw NumericalError("local EM needs a positive total kernel weight");
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = B_raw[i] / total;

    std::vector<double> den(m + 1, 0.0);
    std::vector<double> exact_num(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = subjects_[i];
        den[static_cast<std::size_t>(s.tt)] += b[i];
        if (s.exact >= 0) exact_num[static_cast<std::size_t>(s.exact)] += b[i];
    }
    for (std::size_t j = m; j-- > 0;) den[j] += den[j + 1];

    std::size_t dropped = 0;
    for (std::size_t j = 0; j < m; ++j)
        if (support_[j] && !(den[j] > 0.0)) ++dropped;

    std::vector<double> dl = initial_increments(b).d_lambda;
    const double init = support_size_ ? 1.0 / static_cast<double>(support_size_) : 0.0;
    // convergence is measured where the cumulative hazard is finite
    std::size_t finite_end = m;
    for (std::size_t j = 0; j < m; ++j)
        if (std::isinf(dl[j])) finite_end = j;

    std::vector<double> cum(m);
    std::vector<double> diff(m + 1);
    // Summed directly: a difference of cumulative sums loses small masses.
    auto mass = [&](const Subject& s, const std::vector<double>& x) {
        return std::accumulate(x.begin() + s.lo, x.begin() + s.hi, 0.0);
    };

    // One EM update of `x` into `out`; returns the max change of the cumulative hazard.
    auto em_map = [&](std::vector<double>& x, std::vector<double>& out) {
        // Degenerate subjects (interval mass underflowed): restart their
        // interval increments uniformly.
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = subjects_[i];
            if (!s.interval || b[i] == 0.0 || std::isfinite(b[i] / -std::expm1(-mass(s, x)))) continue;
            for (int j = s.lo; j < s.hi; ++j)
                if (support_[static_cast<std::size_t>(j)]) x[static_cast<std::size_t>(j)] = std::max(x[static_cast<std::size_t>(j)], init);
        }
        std::partial_sum(x.begin(), x.end(), cum.begin());

        std::fill(diff.begin(), diff.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = subjects_[i];
            if (!s.interval || b[i] == 0.0) continue;
            const double c = b[i] / -std::expm1(-mass(s, x));
            diff[static_cast<std::size_t>(s.lo)] += c;
            diff[static_cast<std::size_t>(s.hi)] -= c;
        }
        out.resize(m);
        double running = 0.0;
        double cum_new = 0.0;
        double change = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            running = std::max(0.0, running + diff[j]);
            if (std::isinf(x[j]))
                out[j] = x[j];  // terminal atom stays at +inf
            else
                out[j] = den[j] > 0.0 ? (exact_num[j] + x[j] * running) / den[j] : 0.0;
            cum_new += out[j];
            if (j < finite_end) change = std::max(change, std::abs(cum_new - cum[j]));
        }
        return change;
    };

    std::vector<double> ll_trace;
    if (trace) ll_trace.push_back(log_likelihood(b, dl));
    std::size_t iter = 0;
    double delta = 0.0;
    bool converged = false;
    std::vector<double> x1, x2, x3, jump(m);
    double step_max = 1.0;

    // Plain EM, or squared extrapolation (SQUAREM, scheme S3) in log-hazard
    // coordinates where a cycle is accepted only if it does not lower the
    // likelihood reached by its two plain steps.
    while (iter < options.max_iter && !converged) {
        delta = em_map(dl, x1);
        ++iter;
        if (trace) ll_trace.push_back(log_likelihood(b, x1));
        if (delta <= options.tol || !options.accelerate || iter == options.max_iter) {
            converged = delta <= options.tol;
            dl.swap(x1);
            continue;
        }
        delta = em_map(x1, x2);
        ++iter;
        const double ll2 = log_likelihood(b, x2);
        if (trace) ll_trace.push_back(ll2);
        if (delta <= options.tol || iter == options.max_iter) {
            converged = delta <= options.tol;
            dl.swap(x2);
            continue;
        }
        double rr = 0.0, vv = 0.0;
        for (std::size_t j = 0; j < finite_end; ++j) {
            const double r = x1[j] - dl[j];
            const double v = x2[j] - 2.0 * x1[j] + dl[j];
            rr += r * r;
            vv += v * v;
        }
        const double length = vv > 0.0 ? std::clamp(std::sqrt(rr / vv), 1.0, step_max) : 1.0;
        if (length == step_max) step_max *= 4.0;
        const double alpha = -length;
        bool accepted = false;
        if (length > 1.0) {
            for (std::size_t j = 0; j < m; ++j) {
                if (j < finite_end) {
                    const double r = x1[j] - dl[j];
                    const double v = x2[j] - 2.0 * x1[j] + dl[j];
                    jump[j] = std::max(0.0, dl[j] - 2.0 * alpha * r + alpha * alpha * v);
                } else {
                    jump[j] = x2[j];
                }
            }
            const double change = em_map(jump, x3);
            ++iter;
            const double ll3 = log_likelihood(b, x3);
            if (std::isfinite(ll3) && ll3 >= ll2) {
                if (trace) ll_trace.push_back(ll3);
                delta = change;
                dl.swap(x3);
                accepted = true;
            } else {
                step_max = std::max(1.0, step_max / 4.0);
            }
        }
        if (!accepted) dl.swap(x2);
    }

    ConditionalCdf out(HazardIncrements{grid_, dl}, options.link);
    out.iterations = iter;
    out.delta_norm = delta;
    out.converged = converged;
    out.dropped = dropped;
    out.log_likelihood = std::move(ll_trace);
    return out;
}

EndpointCdf EmIndex::endpoints(const ConditionalCdf& cdf, std::size_t i) const {
    const auto& s = subjects_[i];
    const auto& v = cdf.values();
    auto at = [&](int count) { return count > 0 ? v[static_cast<std::size_t>(count - 1)] : 0.0; };
    if (s.exact >= 0) {
        const double f = v[static_cast<std::size_t>(s.exact)];
        return {f, f};
    }
    if (s.interval) return {at(s.lo), at(s.hi)};
    return {at(s.left_count), 1.0};
}

ConditionalCdf fit_local_cdf(const Eigen::VectorXd& x0, const Dataset& dataset, const KernelSpec& spec, const EmOptions& options) {
    validate(dataset);
    const EmIndex index(dataset);
    return index.run(nw_weights(x0, dataset, spec), options);
}

EndpointTable kernel_endpoint_cdfs(const Dataset& dataset, const EmIndex& index, const KernelSpec& spec,
                                   const EmOptions& options, std::span<const double> multipliers, std::size_t threads) {
    const std::size_t n = dataset.size();
    EndpointTable table;
    table.values.resize(n);
    std::vector<std::size_t> iterations(n);
    std::vector<char> converged(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto B = nw_weights(dataset[i].x, dataset, spec, multipliers);
        const auto cdf = index.run(B, options);
        table.values[i] = index.endpoints(cdf, i);
        iterations[i] = cdf.iterations;
        converged[i] = cdf.converged ? 1 : 0;
    });
    table.runs = n;
    table.converged = static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 1));
    table.max_iterations = n ? *std::max_element(iterations.begin(), iterations.end()) : 0;
    std::vector<double> it(iterations.begin(), iterations.end());
    table.median_iterations = n ? stats::quantile_type7(it, 0.5) : 0.0;
    return table;
}

KernelCdfProvider::KernelCdfProvider(const Dataset& dataset, KernelSpec spec, EmOptions options)
    : dataset_(validate(dataset)), spec_(std::move(spec)), options_(options), index_(dataset_) {}

const ConditionalCdf& KernelCdfProvider::curve(const Eigen::VectorXd& x) const {
    std::vector<double> key(x.data(), x.data() + x.size());
    {
        std::shared_lock lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return *it->second;
    }
    auto fitted = std::make_shared<const ConditionalCdf>(index_.run(nw_weights(x, dataset_, spec_), options_));
    std::unique_lock lock(mutex_);
    auto [it, inserted] = cache_.emplace(std::move(key), std::move(fitted));
    return *it->second;
}

double KernelCdfProvider::cdf(double t, const Eigen::VectorXd& x) const {
    if (t == -kInf) return 0.0;
    if (t == kInf) return 1.0;
    return curve(x)(t);
}

// ---------------------------------------------------------------------------

TurnbullEstimate::TurnbullEstimate(std::shared_ptr<const SupportGrid> grid, std::vector<double> mass, double tail_mass)
    : grid_(std::move(grid)), mass_(std::move(mass)), tail_(tail_mass) {
    cdf_.resize(mass_.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < mass_.size(); ++j) {
        acc += mass_[j];
        cdf_[j] = std::min(acc, 1.0);
    }
}

double TurnbullEstimate::operator()(double t) const {
    if (t == kInf) return 1.0;
    const std::size_t k = count_le(grid_->points, t);
    return k == 0 ? 0.0 : cdf_[k - 1];
}

TurnbullEstimate turnbull(const Dataset& dataset, const TurnbullOptions& options, std::span<const double> subject_weights) {
    validate(dataset);
    const std::size_t n = dataset.size();
    if (!subject_weights.empty() && subject_weights.size() != n) throw ValidationError("subject weight count differs from the sample size");
    auto grid = std::make_shared<const SupportGrid>(support_grid(dataset));
    const auto& g = grid->points;
    const std::size_t m = g.size();

    // Support: grid points 0..m-1, plus index m for mass beyond every finite point.
    struct Range {
        std::size_t lo, hi;  // [lo, hi) over the extended support
    };
    std::vector<Range> ranges(n);
    std::vector<double> omega(n, 1.0);
    bool tail = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = dataset[i];
        if (!subject_weights.empty()) {
            if (!(subject_weights[i] >= 0.0)) throw ValidationError("subject weights must be nonnegative");
            omega[i] = subject_weights[i];
        }
        if (o.exact) {
            const auto j = index_of(g, o.time());
            ranges[i] = {j, j + 1};
        } else {
            const std::size_t lo = std::isfinite(o.left) ? count_le(g, o.left) : 0;
            const std::size_t hi = std::isfinite(o.right) ? count_le(g, o.right) : m + 1;
            if (hi == m + 1) tail = true;
            ranges[i] = {lo, hi};
        }
    }
    const double W = std::accumulate(omega.begin(), omega.end(), 0.0);
    if (!(W > 0.0)) throw ValidationError("subject weights sum to zero");
    const std::size_t support = tail ? m + 1 : m;
    std::vector<double> p(m + 1, 0.0);
    for (std::size_t j = 0; j < support; ++j) p[j] = 1.0 / static_cast<double>(support);

    std::vector<double> cum(m + 2), coef(m + 2), next(m + 1);
    std::size_t iter = 0;
    bool converged = false;
    while (iter < options.max_iter) {
        cum[0] = 0.0;
        for (std::size_t j = 0; j <= m; ++j) cum[j + 1] = cum[j] + p[j];
        std::fill(coef.begin(), coef.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (omega[i] == 0.0) continue;
            const auto [lo, hi] = ranges[i];
            const double D = cum[hi] - cum[lo];
            if (!(D > 0.0)) continue;
            coef[lo] += omega[i] / D;
            coef[hi] -= omega[i] / D;
        }
        double running = 0.0;
        double acc_old = 0.0, acc_new = 0.0, delta = 0.0;
        for (std::size_t j = 0; j <= m; ++j) {
            running += coef[j];
            next[j] = p[j] * running / W;
            acc_old += p[j];
            acc_new += next[j];
            delta = std::max(delta, std::abs(acc_new - acc_old));
        }
        p.swap(next);
        ++iter;
        if (delta <= options.tol) {
            converged = true;
            break;
        }
    }
    const double tail_mass = p[m];
    p.resize(m);
    TurnbullEstimate est(std::move(grid), std::move(p), tail_mass);
    est.iterations = iter;
    est.converged = converged;
    return est;
}

double self_consistency_residual(const Dataset& dataset, const TurnbullEstimate& estimate, std::span<const double> subject_weights) {
    const auto& g = estimate.grid().points;
    const std::size_t n = dataset.size();
    double W = 0.0;
    for (std::size_t i = 0; i < n; ++i) W += subject_weights.empty() ? 1.0 : subject_weights[i];
    double worst = 0.0;
    for (double t : g) {
        double lhs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = subject_weights.empty() ? 1.0 : subject_weights[i];
            if (w == 0.0) continue;
            const auto& o = dataset[i];
            if (o.exact) {
                lhs += w * (o.time() <= t ? 1.0 : 0.0);
                continue;
            }
            const double fl = o.left == -kInf ? 0.0 : estimate(o.left);
            const double fr = estimate(o.right);
            const double denom = fr - fl;
            if (!(denom > 0.0)) continue;
            const double fr_t = o.right <= t ? fr : estimate(t);
            const double fl_t = o.left <= t ? fl : estimate(t);
            lhs += w * (fr_t - fl_t) / denom;
        }
        worst = std::max(worst, std::abs(lhs / W - estimate(t)));
    }
    return worst;
}

}  // namespace icqr
