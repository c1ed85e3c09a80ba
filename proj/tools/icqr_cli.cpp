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
#include "icqr/inference.hpp"
#include "icqr/io.hpp"
#include "icqr/parallel.hpp"
#include "icqr/pipeline.hpp"
#include "icqr/simbench.hpp"
#include "icqr/stats.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace icqr;

namespace {

struct FitArgs {
    std::string input;
    double tau = 0.5;
    std::string estimator = "ks";
    std::string bandwidth = "auto";
    std::size_t bootstrap = 0;
    std::uint64_t seed = 1;
    std::string ci = "percentile";
    double ci_level = 0.95;
    bool log_times = false;
    std::string out;
};

struct CurveArgs {
    std::string taus = "0.1:0.5:0.05";
    bool survival = false;
};

struct SimulateArgs {
    std::string config;
    std::string out;
};

struct GenerateArgs {
    SimScenario scenario;
    std::string law = "ev";
    std::string hetero = "m1";
    std::string scheme = "pic";
    std::uint64_t replicate = 0;
    std::string out;
};

std::size_t threads() {
    if (const char* env = std::getenv("ICQR_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*env == '\0' || *end != '\0' || v <= 0) throw ValidationError(fmt::format("ICQR_THREADS must be a positive integer, got '{}'", env));
    }
    return default_threads();
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError(fmt::format("cannot write '{}'", path));
    out << text;
}

std::vector<double> parse_taus(const std::string& text) {
    std::vector<double> out;
    auto num = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw ValidationError(fmt::format("cannot parse '{}' in the tau grid", s));
        return v;
    };
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() != 3) throw ValidationError("tau grid must be 'from:to:step' or a comma list");
        const double a = num(parts[0]), b = num(parts[1]), step = num(parts[2]);
        if (!(step > 0.0) || b < a) throw ValidationError("tau grid needs from <= to and a positive step");
        for (std::size_t k = 0;; ++k) {
            const double v = std::round((a + static_cast<double>(k) * step) * 1e12) / 1e12;
            if (v > b + 1e-9 * step) break;
            out.push_back(v);
        }
    } else {
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ',');) out.push_back(num(p));
    }
    return out;
}

EstimatorSpec make_spec(const Dataset& data, const FitArgs& a, double tau) {
    EstimatorSpec spec;
    if (a.estimator == "ks")
        spec.kind = EstimatorKind::IcqrKernel;
    else if (a.estimator == "zfd")
        spec.kind = EstimatorKind::Zfd;
    else
        throw ValidationError(fmt::format("unknown estimator '{}' (ks or zfd)", a.estimator));
    spec.tau = tau;
    if (a.bandwidth != "auto") {
        std::vector<double> h;
        std::stringstream ss(a.bandwidth);
        for (std::string p; std::getline(ss, p, ',');) {
            try {
                h.push_back(std::stod(p));
            } catch (const std::exception&) {
                throw ValidationError(fmt::format("cannot parse bandwidth '{}'", p));
            }
        }
        spec.kernel = kernel_with_bandwidths(data, h);
    }
    return spec;
}

BootstrapConfig boot_config(const FitArgs& a, std::size_t nthreads) {
    BootstrapConfig cfg;
    cfg.n_replicates = a.bootstrap;
    cfg.seed = a.seed;
    cfg.ci_level = a.ci_level;
    cfg.threads = nthreads;
    if (a.ci == "percentile")
        cfg.ci_kind = CiKind::Percentile;
    else if (a.ci == "wald")
        cfg.ci_kind = CiKind::Wald;
    else
        throw ValidationError(fmt::format("unknown interval kind '{}' (percentile or wald)", a.ci));
    return cfg;
}

void cmd_fit(const FitArgs& a) {
    const std::size_t nthreads = threads();
    const Dataset data = read_dataset_file(a.input, CsvOptions{a.log_times});
    const EstimatorSpec spec = make_spec(data, a, a.tau);
    const FitResult result = fit(data, spec, nthreads);
    std::optional<InferenceResult> inf;
    if (a.bootstrap > 0) inf = bootstrap(data, spec, boot_config(a, nthreads));
    auto j = fit_json(data, spec, result, inf ? &*inf : nullptr);
    if (inf) {
        j["bootstrap"]["seed"] = a.seed;
        j["bootstrap"]["interval"] = a.ci;
        j["bootstrap"]["ci_level"] = a.ci_level;
    }
    emit(a.out, dump_json(j));
}

std::string coefficient_name(const Dataset& data, Eigen::Index k) {
    if (k == 0) return "intercept";
    const auto u = static_cast<std::size_t>(k - 1);
    return u < data.covariate_names.size() ? data.covariate_names[u] : fmt::format("x{}", k);
}

void cmd_curve(const FitArgs& a, const CurveArgs& c) {
    const std::size_t nthreads = threads();
    const Dataset data = read_dataset_file(a.input, CsvOptions{a.log_times});
    std::ostringstream out;
    auto cell = [](double v) { return std::isfinite(v) ? format_number(v) : std::string("NA"); };

    if (c.survival) {
        const TurnbullEstimate est = turnbull(data);
        const auto& g = est.grid().points;
        std::vector<std::vector<double>> draws(a.bootstrap);
        if (a.bootstrap > 0) {
            if (a.bootstrap < 2) throw ValidationError("bootstrap needs at least 2 replicates");
            parallel_for(a.bootstrap, nthreads, [&](std::size_t b) {
                const auto eta = perturbation_multipliers(a.seed, b, data.size());
                const TurnbullEstimate e = turnbull(data, {}, eta);
                draws[b].resize(g.size());
                for (std::size_t j = 0; j < g.size(); ++j) draws[b][j] = e.survival(g[j]);
            });
        }
        out << "time,survival,lower,upper\n";
        for (std::size_t j = 0; j < g.size(); ++j) {
            double lo = NAN, hi = NAN;
            if (a.bootstrap > 0) {
                std::vector<double> col(a.bootstrap);
                for (std::size_t b = 0; b < a.bootstrap; ++b) col[b] = draws[b][j];
                lo = stats::order_statistic_quantile(col, 0.5 - 0.5 * a.ci_level);
                hi = stats::order_statistic_quantile(col, 0.5 + 0.5 * a.ci_level);
            }
            out << format_number(g[j]) << ',' << format_number(est.survival(g[j])) << ',' << cell(lo) << ',' << cell(hi) << '\n';
        }
        emit(a.out, out.str());
        return;
    }

    const auto taus = parse_taus(c.taus);
    const auto process = quantile_process(data, make_spec(data, a, taus.front()), taus, nthreads);
    std::vector<InferenceResult> bands;
    if (a.bootstrap > 0) {
        std::vector<EstimatorSpec> specs;
        for (double t : taus) specs.push_back(make_spec(data, a, t));
        bands = bootstrap_many(data, specs, boot_config(a, nthreads));
    }
    out << "tau,coefficient,estimate,lower,upper\n";
    for (std::size_t t = 0; t < process.size(); ++t) {
        const auto& e = process[t];
        if (!e.fit) throw NumericalError(fmt::format("tau = {}: {}", e.tau, e.error));
        for (Eigen::Index k = 0; k < e.fit->beta.size(); ++k) {
            const double lo = bands.empty() ? NAN : bands[t].ci_lower(k);
            const double hi = bands.empty() ? NAN : bands[t].ci_upper(k);
            out << fmt::format("{}", e.tau) << ',' << coefficient_name(data, k) << ',' << format_number(e.fit->beta(k)) << ','
                << cell(lo) << ',' << cell(hi) << '\n';
        }
    }
    emit(a.out, out.str());
}

void cmd_simulate(const SimulateArgs& a) {
    const std::size_t nthreads = threads();
    const StudyConfig cfg = read_study_config_file(a.config);
    StudyOptions options = cfg.options;
    options.threads = nthreads;
    std::vector<StudyResult> results;
    for (const auto& sc : resolve_scenarios(cfg)) results.push_back(run_study(sc, cfg.estimators, options));
    std::ostringstream out;
    write_study_table(out, results, cfg.reference);
    emit(a.out, out.str());
}

void cmd_generate(GenerateArgs a) {
    std::istringstream cfg(fmt::format("error_law = {}\nhetero = {}\nscheme = {}\n", a.law, a.hetero, a.scheme));
    const StudyConfig parsed = parse_study_config(cfg, "<flags>");
    a.scenario.law = parsed.scenarios.front().law;
    a.scenario.hetero = parsed.scenarios.front().hetero;
    a.scenario.scheme = parsed.scenarios.front().scheme;
    const SimData sim = generate(a.scenario, a.replicate);
    std::ostringstream out;
    write_dataset(out, sim.data);
    emit(a.out, out.str());
}

void add_fit_flags(CLI::App* cmd, FitArgs& a) {
    cmd->add_option("input", a.input, "Dataset CSV")->required();
    cmd->add_option("--estimator", a.estimator, "ks or zfd")->capture_default_str();
    cmd->add_option("--bandwidth", a.bandwidth, "auto, or one bandwidth per continuous covariate (h1,h2,...)")->capture_default_str();
    cmd->add_option("--bootstrap", a.bootstrap, "Perturbation bootstrap replicates (0 = none)")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Bootstrap seed")->capture_default_str();
    cmd->add_option("--ci", a.ci, "percentile or wald")->capture_default_str();
    cmd->add_option("--ci-level", a.ci_level, "Confidence level")->capture_default_str();
    cmd->add_flag("--log", a.log_times, "Input times are raw; take logs");
    cmd->add_option("-o,--out", a.out, "Output file (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interval-censored quantile regression with local redistribution weights"};
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit one quantile level and write JSON");
    add_fit_flags(fit_cmd, fit_args);
    fit_cmd->add_option("--tau", fit_args.tau, "Quantile level")->capture_default_str();

    FitArgs curve_fit;
    CurveArgs curve_args;
    auto* curve_cmd = app.add_subcommand("curve", "Quantile process or survival curve as long-format CSV");
    add_fit_flags(curve_cmd, curve_fit);
    curve_cmd->add_option("--taus", curve_args.taus, "from:to:step or a comma list")->capture_default_str();
    curve_cmd->add_flag("--survival", curve_args.survival, "Unconditional survival curve with bootstrap bands");

    SimulateArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study from a config file");
    sim_cmd->add_option("config", sim_args.config, "Study config")->required();
    sim_cmd->add_option("-o,--out", sim_args.out, "Output CSV (default stdout)");

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "Write one simulated dataset as CSV");
    gen_cmd->add_option("--n", gen_args.scenario.n, "Sample size")->capture_default_str();
    gen_cmd->add_option("--tau", gen_args.scenario.tau, "Quantile level defining beta0")->capture_default_str();
    gen_cmd->add_option("--error-law", gen_args.law, "ev, logistic or chisq3")->capture_default_str();
    gen_cmd->add_option("--hetero", gen_args.hetero, "m1 or m2")->capture_default_str();
    gen_cmd->add_option("--scheme", gen_args.scheme, "pic or ic")->capture_default_str();
    gen_cmd->add_option("--p0", gen_args.scenario.p0, "Exact-observation probability")->capture_default_str();
    gen_cmd->add_option("--seed", gen_args.scenario.seed, "Scenario seed")->capture_default_str();
    gen_cmd->add_option("--replicate", gen_args.replicate, "Replicate index")->capture_default_str();
    gen_cmd->add_option("-o,--out", gen_args.out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*fit_cmd) cmd_fit(fit_args);
        else if (*curve_cmd) cmd_curve(curve_fit, curve_args);
        else if (*sim_cmd) cmd_simulate(sim_args);
        else if (*gen_cmd) cmd_generate(gen_args);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
