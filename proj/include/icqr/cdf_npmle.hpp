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

#include <cstddef>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

namespace icqr {

/// Sorted, deduplicated finite endpoints s_1 < ... < s_m of a dataset.
struct SupportGrid {
    std::vector<double> points;
    std::size_t size() const { return points.size(); }
};

SupportGrid support_grid(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Kernel weights

enum class KernelKind { Gaussian, Indicator };

/// One factor of the product kernel, for covariate x(k) with k >= 1.
/// Gaussian factors use `bandwidth`; Indicator factors give 1 on an exact
/// match and `mismatch` otherwise.
struct KernelComponent {
    KernelKind kind = KernelKind::Gaussian;
    double bandwidth = 1.0;
    double mismatch = 0.1;

    bool operator==(const KernelComponent&) const = default;
};

struct KernelSpec {
    std::vector<KernelComponent> components;  // size p - 1

    bool operator==(const KernelSpec&) const = default;
};

/// h = 1.06 * min(sd, IQR/1.349) * n^(-1/5) for covariate column k.
double silverman_bandwidth(const Dataset& dataset, std::size_t k);

/// Binary covariates (all values in {0,1}) get the indicator kernel, every
/// other covariate a Gaussian factor with the normal-scale bandwidth.
KernelSpec auto_kernel(const Dataset& dataset, double mismatch = 0.1);

/// Like auto_kernel, but continuous covariates take the given bandwidths in order.
KernelSpec kernel_with_bandwidths(const Dataset& dataset, std::span<const double> bandwidths, double mismatch = 0.1);

/// Nadaraya-Watson weights B_i(x0), normalized to sum one. Optional
/// `multipliers` scale each raw kernel value before normalization.
std::vector<double> nw_weights(const Eigen::VectorXd& x0, const Dataset& dataset, const KernelSpec& spec,
                               std::span<const double> multipliers = {});

// ---------------------------------------------------------------------------
// Latent-Poisson EM for the local cumulative hazard

/// T~_i: exact time, else R when finite, else L.
double effective_time(const Observation& obs);

struct HazardIncrements {
    std::shared_ptr<const SupportGrid> grid;
    std::vector<double> d_lambda;
};

/// E-step expectations xi_i1..xi_im for subject i. Dense reference version.
std::vector<double> em_e_step(const Dataset& dataset, std::size_t i, const HazardIncrements& increments);

/// M-step ratio from a dense n x m table of expectations. Grid points whose
/// denominator vanishes get increment 0 and are counted in `dropped`.
HazardIncrements em_m_step(const std::vector<std::vector<double>>& xi, std::span<const double> B, const Dataset& dataset,
                           std::shared_ptr<const SupportGrid> grid, std::size_t* dropped = nullptr);

/// Map from cumulative hazard to distribution function.
enum class CdfLink {
    Exponential,   // F = 1 - exp(-Lambda)
    ProductLimit,  // F = 1 - prod_j (1 - min(dLambda_j, 1))
};

struct EmOptions {
    double tol = 1e-5;
    std::size_t max_iter = 100;
    CdfLink link = CdfLink::Exponential;
    bool accelerate = true;  // squared extrapolation between plain EM steps
};

/// Right-continuous step estimate of F(. | x0).
class ConditionalCdf {
public:
    ConditionalCdf() = default;
    ConditionalCdf(HazardIncrements increments, CdfLink link);

    double operator()(double t) const;
    double cumulative_hazard(double t) const;

    const SupportGrid& grid() const { return *increments_.grid; }
    const HazardIncrements& increments() const { return increments_; }
    const std::vector<double>& values() const { return cdf_; }  // F at each grid point

    std::size_t iterations = 0;
    double delta_norm = 0.0;
    bool converged = false;
    std::size_t dropped = 0;
    std::vector<double> log_likelihood;  // one entry per iterate, starting with the initial value

private:
    HazardIncrements increments_;
    std::vector<double> cum_;
    std::vector<double> cdf_;
};

/// Per-dataset index of every subject's position on the support grid. Built
/// once and shared by all local fits on the same data (including perturbed
/// refits).
class EmIndex {
public:
    explicit EmIndex(const Dataset& dataset);

    const std::shared_ptr<const SupportGrid>& grid() const { return grid_; }
    std::size_t subjects() const { return subjects_.size(); }

    /// Runs the EM with the given normalized (or unnormalized) subject
    /// weights. `trace` additionally records the log-likelihood per iterate.
    ConditionalCdf run(std::span<const double> B, const EmOptions& options, bool trace = false) const;

    /// Grid points that can carry mass in a maximizer: exact times and the
    /// right ends of the innermost censoring intervals.
    const std::vector<char>& support() const { return support_; }

    /// Starting increments for the given weights: 1/k on each of the k
    /// support points, zero elsewhere, and +inf on the last support point when
    /// no weighted subject is observed at it or known to outlive it.
    HazardIncrements initial_increments(std::span<const double> B) const;

    /// Observed-data local log-likelihood at the given increments.
    double log_likelihood(std::span<const double> B, std::span<const double> d_lambda) const;

    /// F(L_i) and F(R_i) under `cdf` for subject i.
    EndpointCdf endpoints(const ConditionalCdf& cdf, std::size_t i) const;

private:
    struct Subject {
        int exact = -1;        // grid index of T_i, or -1
        int lo = 0;            // interval term covers grid indices [lo, hi)
        int hi = 0;
        int tt = 0;            // grid index of T~_i
        int left_count = 0;    // number of grid points <= L_i
        bool interval = false; // censored with finite R
    };
    std::shared_ptr<const SupportGrid> grid_;
    std::vector<Subject> subjects_;
    std::vector<char> support_;
    int last_support_ = -1;
    std::size_t support_size_ = 0;
};

ConditionalCdf fit_local_cdf(const Eigen::VectorXd& x0, const Dataset& dataset, const KernelSpec& spec,
                             const EmOptions& options = {});

/// Endpoint CDF values from one local fit per subject (centred at x_i).
/// `multipliers` perturb every kernel weight. Results are independent of
/// `threads`.
struct EndpointTable {
    std::vector<EndpointCdf> values;
    std::size_t runs = 0;
    std::size_t converged = 0;
    std::size_t max_iterations = 0;
    double median_iterations = 0.0;
};

EndpointTable kernel_endpoint_cdfs(const Dataset& dataset, const EmIndex& index, const KernelSpec& spec,
                                   const EmOptions& options, std::span<const double> multipliers = {}, std::size_t threads = 1);

/// CdfProvider backed by local kernel fits, cached per distinct covariate vector.
class KernelCdfProvider final : public CdfProvider {
public:
    KernelCdfProvider(const Dataset& dataset, KernelSpec spec, EmOptions options = {});

    double cdf(double t, const Eigen::VectorXd& x) const override;
    const ConditionalCdf& curve(const Eigen::VectorXd& x) const;

private:
    Dataset dataset_;
    KernelSpec spec_;
    EmOptions options_;
    EmIndex index_;
    mutable std::shared_mutex mutex_;
    mutable std::map<std::vector<double>, std::shared_ptr<const ConditionalCdf>> cache_;
};

// ---------------------------------------------------------------------------
// Unconditional self-consistent (Turnbull) estimator

struct TurnbullOptions {
    double tol = 1e-5;
    std::size_t max_iter = 1000;
};

class TurnbullEstimate {
public:
    TurnbullEstimate() = default;
    TurnbullEstimate(std::shared_ptr<const SupportGrid> grid, std::vector<double> mass, double tail_mass);

    double operator()(double t) const;  // F(t), right-continuous
    double survival(double t) const { return 1.0 - (*this)(t); }

    const SupportGrid& grid() const { return *grid_; }
    const std::vector<double>& values() const { return cdf_; }
    const std::vector<double>& mass() const { return mass_; }
    double tail_mass() const { return tail_; }

    std::size_t iterations = 0;
    bool converged = false;

private:
    std::shared_ptr<const SupportGrid> grid_;
    std::vector<double> mass_;
    std::vector<double> cdf_;
    double tail_ = 0.0;
};

TurnbullEstimate turnbull(const Dataset& dataset, const TurnbullOptions& options = {}, std::span<const double> subject_weights = {});

/// Max over grid points of |LHS(t) - F(t)| in the self-consistency equation.
double self_consistency_residual(const Dataset& dataset, const TurnbullEstimate& estimate,
                                 std::span<const double> subject_weights = {});

}  // namespace icqr
