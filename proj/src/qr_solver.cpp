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

#include "icqr/qr_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace icqr {

CheckLossProblem CheckLossProblem::from_rows(std::span<const AugmentedRow> rows, QuantileLevel tau, double n_subjects) {
    CheckLossProblem P;
    if (rows.empty()) throw ValidationError("check-loss problem has no rows");
    const auto p = rows.front().x.size();
    P.X.resize(static_cast<Eigen::Index>(rows.size()), p);
    P.t.resize(static_cast<Eigen::Index>(rows.size()));
    P.w.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (rows[i].x.size() != p) throw ValidationError("augmented rows disagree on the covariate dimension");
        P.X.row(r) = rows[i].x.transpose();
        P.t(r) = rows[i].t;
        P.w(r) = rows[i].weight;
    }
    P.tau = tau;
    P.n_subjects = n_subjects;
    return P;
}

namespace {

double normalizer(const CheckLossProblem& P) {
    return P.n_subjects > 0.0 ? P.n_subjects : static_cast<double>(P.rows());
}

constexpr double kZeroWeight = 1e-12;

// Vertex-descent simplex for weighted L1-type regression. A vertex is a set
// of p rows with zero residual; every move follows an edge (or, at degenerate
// vertices, any direction pinned by p-1 zero-residual rows) and stops at the
// breakpoint where the objective stops decreasing.
class VertexSolver {
public:
    VertexSolver(const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& w, double tau)
        : X_(X), t_(t), w_(w), tau_(tau), n_(X.rows()), p_(X.cols()) {
        ztol_ = 1e-11 * std::max(1.0, t.cwiseAbs().maxCoeff());
    }

    std::vector<Eigen::Index> run(std::size_t& iterations) {
        basis_ = initial_basis();
        const std::size_t cap = 50 * static_cast<std::size_t>(n_) + 1000;
        iterations = 0;
        for (;;) {
            if (++iterations > cap) throw NumericalError("quantile solver exceeded its iteration cap");
            load_vertex();
            if (descend_along_edges()) continue;
            if (zero_set_.size() > static_cast<std::size_t>(p_) && descend_degenerate()) continue;
            break;
        }
        tie_break_walk(cap);
        return basis_;
    }

    Eigen::VectorXd beta() const { return beta_; }

private:
    struct Move {
        Eigen::Index entering = -1;
    };

    std::vector<Eigen::Index> initial_basis() const {
        const Eigen::MatrixXd Xw = X_.array().colwise() * w_.array();
        const Eigen::MatrixXd gram = X_.transpose() * Xw;
        Eigen::VectorXd b0 = gram.ldlt().solve(Xw.transpose() * t_);
        if (!b0.allFinite()) b0 = X_.colPivHouseholderQr().solve(t_);
        const Eigen::VectorXd r = (t_ - X_ * b0).cwiseAbs();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n_));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return r(a) < r(b); });
        std::vector<Eigen::Index> H;
        Eigen::MatrixXd Q(p_, 0);
        for (const auto i : order) {
            const Eigen::VectorXd x = X_.row(i).transpose();
            const Eigen::VectorXd v = x - Q * (Q.transpose() * x);
            if (v.norm() <= 1e-9 * std::max(1.0, x.norm())) continue;
            Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
            Q.col(Q.cols() - 1) = v / v.norm();
            H.push_back(i);
            if (static_cast<Eigen::Index>(H.size()) == p_) break;
        }
        if (static_cast<Eigen::Index>(H.size()) < p_) throw ValidationError("design matrix is rank deficient");
        return H;
    }

    void load_vertex() {
        Eigen::MatrixXd XH(p_, p_);
        Eigen::VectorXd tH(p_);
        for (Eigen::Index k = 0; k < p_; ++k) {
            XH.row(k) = X_.row(basis_[static_cast<std::size_t>(k)]);
            tH(k) = t_(basis_[static_cast<std::size_t>(k)]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(XH);
        if (!lu.isInvertible()) throw NumericalError("quantile solver reached a singular basis");
        inv_ = lu.inverse();
        beta_ = inv_ * tH;
        r_ = t_ - X_ * beta_;
        G_ = X_ * inv_;
        for (Eigen::Index k = 0; k < p_; ++k) {
            const auto h = basis_[static_cast<std::size_t>(k)];
            r_(h) = 0.0;
            G_.row(h).setZero();
            G_(h, k) = 1.0;
        }
        zero_set_.clear();
        for (Eigen::Index i = 0; i < n_; ++i)
            if (std::abs(r_(i)) <= ztol_) zero_set_.push_back(i);
    }

    // One-sided directional derivative for residual rates rdot, and the scale
    // used to decide whether it is meaningfully negative.
    std::pair<double, double> derivative(const Eigen::VectorXd& rdot) const {
        double g = 0.0;
        double scale = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double v = rdot(i);
            if (v == 0.0) continue;
            const double wi = w_(i);
            scale += wi * std::abs(v);
            if (std::abs(r_(i)) <= ztol_)
                g += wi * (v > 0.0 ? tau_ * v : (tau_ - 1.0) * v);
            else
                g += wi * (r_(i) > 0.0 ? tau_ : tau_ - 1.0) * v;
        }
        return {g, scale};
    }

    // First breakpoint at which the slope along rdot becomes nonnegative.
    Eigen::Index line_search(const Eigen::VectorXd& rdot, double slope, double scale) const {
        std::vector<std::pair<double, Eigen::Index>> cross;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double v = rdot(i);
            const double r = r_(i);
            if (v == 0.0 || std::abs(r) <= ztol_) continue;
            if ((r > 0.0) != (v < 0.0)) continue;
            cross.emplace_back(-r / v, i);
        }
        std::sort(cross.begin(), cross.end());
        const double tol = 1e-12 * scale;
        for (const auto& [s, i] : cross) {
            slope += w_(i) * std::abs(rdot(i));
            if (slope >= -tol) return i;
        }
        return -1;
    }

    bool descend_along_edges() {
        double best = 0.0;
        Eigen::Index best_k = -1;
        double best_sigma = 0.0;
        double best_scale = 0.0;
        for (Eigen::Index k = 0; k < p_; ++k) {
            for (const double sigma : {1.0, -1.0}) {
                const Eigen::VectorXd rdot = -sigma * G_.col(k);
                const auto [g, scale] = derivative(rdot);
                if (g < -1e-12 * scale && g < best) {
                    best = g;
                    best_k = k;
                    best_sigma = sigma;
                    best_scale = scale;
                }
            }
        }
        if (best_k < 0) return false;
        const Eigen::VectorXd rdot = -best_sigma * G_.col(best_k);
        const auto entering = line_search(rdot, best, best_scale);
        if (entering < 0) throw NumericalError("check-loss objective is unbounded below");
        basis_[static_cast<std::size_t>(best_k)] = entering;
        return true;
    }

    // At a degenerate vertex the basis edges do not span every descent
    // direction; every extreme ray of the local arrangement is pinned by p-1
    // independent zero-residual rows, so enumerate those.
    bool descend_degenerate() {
        const std::size_t z = zero_set_.size();
        const auto choose = static_cast<std::size_t>(p_ - 1);
        double combos = 1.0;
        for (std::size_t j = 0; j < choose; ++j) combos *= static_cast<double>(z - j) / static_cast<double>(j + 1);
        if (combos > 2e5) return false;  // TODO: perturbation-based fallback for very large tie sets
        std::vector<std::size_t> pick(choose);
        std::iota(pick.begin(), pick.end(), 0);
        for (;;) {
            Eigen::VectorXd d;
            if (choose == 0) {
                d = Eigen::VectorXd::Ones(1);
            } else {
                Eigen::MatrixXd A(static_cast<Eigen::Index>(choose), p_);
                for (std::size_t j = 0; j < choose; ++j) A.row(static_cast<Eigen::Index>(j)) = X_.row(zero_set_[pick[j]]);
                Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
                if (lu.rank() == static_cast<Eigen::Index>(choose)) d = lu.kernel().col(0).normalized();
            }
            if (d.size() == p_) {
                for (const double sigma : {1.0, -1.0}) {
                    const Eigen::VectorXd rdot = -sigma * (X_ * d);
                    const auto [g, scale] = derivative(rdot);
                    if (g < -1e-12 * scale) {
                        const auto entering = line_search(rdot, g, scale);
                        if (entering < 0) throw NumericalError("check-loss objective is unbounded below");
                        std::vector<Eigen::Index> H;
                        for (const auto j : pick) H.push_back(zero_set_[j]);
                        H.push_back(entering);
                        basis_ = std::move(H);
                        return true;
                    }
                }
            }
            // next combination
            std::size_t j = choose;
            while (j > 0 && pick[j - 1] == z - choose + (j - 1)) --j;
            if (j == 0) return false;
            ++pick[j - 1];
            for (std::size_t q = j; q < choose; ++q) pick[q] = pick[q - 1] + 1;
        }
    }

    static std::vector<Eigen::Index> sorted(std::vector<Eigen::Index> v) {
        std::sort(v.begin(), v.end());
        return v;
    }

    // Among optimal vertices joined by zero-cost edges, move to the one with
    // the lexicographically smaller sorted basis until none is adjacent.
    void tie_break_walk(std::size_t cap) {
        for (std::size_t step = 0; step < cap; ++step) {
            load_vertex();
            const auto current = sorted(basis_);
            bool moved = false;
            for (Eigen::Index k = 0; k < p_ && !moved; ++k) {
                for (const double sigma : {1.0, -1.0}) {
                    const Eigen::VectorXd rdot = -sigma * G_.col(k);
                    const auto [g, scale] = derivative(rdot);
                    if (std::abs(g) > 1e-12 * scale) continue;
                    const auto entering = line_search(rdot, 0.0, scale);
                    if (entering < 0) continue;
                    auto candidate = basis_;
                    candidate[static_cast<std::size_t>(k)] = entering;
                    if (sorted(candidate) < current) {
                        basis_ = std::move(candidate);
                        moved = true;
                        break;
                    }
                }
            }
            if (!moved) return;
        }
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& t_;
    const Eigen::VectorXd& w_;
    double tau_;
    Eigen::Index n_;
    Eigen::Index p_;
    double ztol_;

    std::vector<Eigen::Index> basis_;
    std::vector<Eigen::Index> zero_set_;
    Eigen::MatrixXd inv_;
    Eigen::MatrixXd G_;
    Eigen::VectorXd beta_;
    Eigen::VectorXd r_;
};

void check_problem(const CheckLossProblem& P) {
    if (P.X.rows() == 0 || P.X.cols() == 0) throw ValidationError("check-loss problem is empty");
    if (P.t.size() != P.X.rows() || P.w.size() != P.X.rows()) throw ValidationError("check-loss problem has inconsistent sizes");
    if (!(P.tau > 0.0 && P.tau < 1.0)) throw ValidationError("quantile level must lie in (0,1)");
    if (!P.t.allFinite()) throw ValidationError("check-loss responses must be finite");
    if (!P.X.allFinite()) throw ValidationError("check-loss design must be finite");
    if (!P.w.allFinite() || (P.w.array() < 0.0).any()) throw ValidationError("check-loss weights must be finite and nonnegative");
}

}  // namespace

double objective(const CheckLossProblem& P, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd r = P.t - P.X * beta;
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) s += P.w(i) * check_loss(r(i), P.tau);
    return s;
}

Eigen::VectorXd subgradient(const CheckLossProblem& P, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd r = P.t - P.X * beta;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(P.X.cols());
    for (Eigen::Index i = 0; i < r.size(); ++i) g += P.w(i) * (P.tau - (r(i) <= 0.0 ? 1.0 : 0.0)) * P.X.row(i).transpose();
    return g / normalizer(P);
}

double vertex_subgradient_bound(const CheckLossProblem& P) {
    return static_cast<double>(P.dim()) * P.X.cwiseAbs().maxCoeff() * P.w.maxCoeff() / normalizer(P);
}

QuantileFit solve(const CheckLossProblem& P) {
    check_problem(P);
    const auto p = P.X.cols();
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < P.X.rows(); ++i)
        if (P.w(i) >= kZeroWeight) active.push_back(i);
    if (static_cast<Eigen::Index>(active.size()) < p)
        throw ValidationError(fmt::format("only {} positive-weight rows for {} coefficients", active.size(), p));

    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd X(na, p);
    Eigen::VectorXd t(na), w(na);
    for (Eigen::Index a = 0; a < na; ++a) {
        X.row(a) = P.X.row(active[static_cast<std::size_t>(a)]);
        t(a) = P.t(active[static_cast<std::size_t>(a)]);
        w(a) = P.w(active[static_cast<std::size_t>(a)]);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::vector<Eigen::Index> dependent;
        for (Eigen::Index k = qr.rank(); k < p; ++k) dependent.push_back(qr.colsPermutation().indices()(k));
        std::sort(dependent.begin(), dependent.end());
        throw ValidationError(fmt::format("design of positive-weight rows has rank {} < {}; dependent column(s): {}", qr.rank(),
                                          p, fmt::join(dependent, ", ")));
    }

    VertexSolver solver(X, t, w, P.tau);
    QuantileFit fit;
    solver.run(fit.iterations);
    fit.beta = solver.beta();
    fit.tau = P.tau;
    fit.objective = objective(P, fit.beta);
    fit.subgradient_norm = subgradient(P, fit.beta).cwiseAbs().maxCoeff();
    fit.n_used = active.size();
    return fit;
}

}  // namespace icqr
