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

#include "icqr/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace icqr {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const char* first = s.data();
    if (*first == '+') ++first;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<long long> parse_int(const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Endpoint cell: number, +-inf sentinel, or empty (= the open end `open`).
double parse_endpoint(const std::string& cell, double open, const std::string& where) {
    if (cell.empty()) return open;
    const std::string l = lower(cell);
    if (l == "inf" || l == "+inf") return kInf;
    if (l == "-inf") return -kInf;
    if (const auto v = parse_double(cell)) return *v;
    throw ValidationError(fmt::format("{}: cannot parse '{}' as a time", where, cell));
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", v);
}

// ---------------------------------------------------------------------------

Dataset read_dataset(std::istream& in, const CsvOptions& options, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) header = split(line, ',');
    }
    if (header.empty()) throw ValidationError(fmt::format("{}: empty file, a header row is required", source));

    int c_delta = -1, c_time = -1, c_left = -1, c_right = -1;
    std::vector<int> covariates;
    Dataset out;
    std::set<std::string> seen;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = lower(header[c]);
        if (name.empty()) throw ValidationError(fmt::format("{}:{}: column {} has an empty name", source, line_no, c + 1));
        if (!seen.insert(name).second) throw ValidationError(fmt::format("{}:{}: duplicate column '{}'", source, line_no, header[c]));
        const int ci = static_cast<int>(c);
        if (name == "delta") c_delta = ci;
        else if (name == "time") c_time = ci;
        else if (name == "left") c_left = ci;
        else if (name == "right") c_right = ci;
        else {
            covariates.push_back(ci);
            out.covariate_names.push_back(header[c]);
        }
    }
    if (c_delta < 0) throw ValidationError(fmt::format("{}:{}: header has no 'delta' column", source, line_no));

    const auto p = static_cast<Eigen::Index>(covariates.size() + 1);
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = fmt::format("{}:{}", source, line_no);
        const auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw ValidationError(fmt::format("{}: expected {} columns, found {}", where, header.size(), cells.size()));

        Eigen::VectorXd x(p);
        x(0) = 1.0;
        for (std::size_t k = 0; k < covariates.size(); ++k) {
            const auto& cell = cells[static_cast<std::size_t>(covariates[k])];
            const auto v = parse_double(cell);
            if (!v) throw ValidationError(fmt::format("{}: covariate '{}' has non-numeric value '{}'", where, out.covariate_names[k], cell));
            x(static_cast<Eigen::Index>(k + 1)) = *v;
        }

        const std::string& d = cells[static_cast<std::size_t>(c_delta)];
        Observation obs;
        if (d == "1") {
            if (c_time < 0 || cells[static_cast<std::size_t>(c_time)].empty())
                throw ValidationError(fmt::format("{}: delta=1 row needs a time", where));
            double t = parse_endpoint(cells[static_cast<std::size_t>(c_time)], kInf, where);
            if (!std::isfinite(t)) throw ValidationError(fmt::format("{}: exact time must be finite", where));
            if (options.log_times) {
                if (!(t > 0.0)) throw ValidationError(fmt::format("{}: raw exact time {} must be positive", where, t));
                t = std::log(t);
            }
            obs = Observation::exact_at(t, std::move(x));
        } else if (d == "0") {
            if (c_left < 0 || c_right < 0) throw ValidationError(fmt::format("{}: delta=0 row needs 'left' and 'right' columns", where));
            double l = parse_endpoint(cells[static_cast<std::size_t>(c_left)], -kInf, where);
            double r = parse_endpoint(cells[static_cast<std::size_t>(c_right)], kInf, where);
            if (options.log_times) {
                if (std::isfinite(l)) l = l > 0.0 ? std::log(l) : -kInf;
                if (std::isfinite(r)) {
                    if (!(r > 0.0)) throw ValidationError(fmt::format("{}: raw right endpoint {} must be positive", where, r));
                    r = std::log(r);
                }
            }
            obs = Observation::censored(l, r, std::move(x));
        } else {
            throw ValidationError(fmt::format("{}: delta must be 0 or 1, got '{}'", where, d));
        }
        try {
            (void)classify(obs);
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}: {}", where, e.what()));
        }
        out.observations.push_back(std::move(obs));
    }
    if (out.observations.empty()) throw ValidationError(fmt::format("{}: no data rows", source));
    return out;
}

Dataset read_dataset_file(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
    return read_dataset(in, options, path);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
    const std::size_t q = dataset.dim() == 0 ? 0 : dataset.dim() - 1;
    out << "delta,time,left,right";
    for (std::size_t k = 0; k < q; ++k)
        out << ',' << (k < dataset.covariate_names.size() ? dataset.covariate_names[k] : fmt::format("x{}", k + 1));
    out << '\n';
    for (const auto& o : dataset.observations) {
        if (o.exact)
            out << "1," << format_number(o.time()) << ",,";
        else
            out << "0,," << format_number(o.left) << ',' << format_number(o.right);
        for (std::size_t k = 0; k < q; ++k) out << ',' << format_number(o.x(static_cast<Eigen::Index>(k + 1)));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

StudyConfig parse_study_config(std::istream& in, const std::string& source) {
    std::vector<std::string> errors;
    std::map<std::string, std::pair<std::string, std::size_t>> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(fmt::format("line {}: expected 'key = value'", line_no));
            continue;
        }
        const std::string key = lower(trim(std::string_view(line).substr(0, eq)));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (!kv.emplace(key, std::make_pair(value, line_no)).second)
            errors.push_back(fmt::format("line {}: key '{}' given twice", line_no, key));
    }

    static const std::set<std::string> known = {"n",        "tau",      "error_law",  "hetero",     "scheme",
                                                "p0",       "target_censoring", "seed", "replicates", "bootstrap",
                                                "ci_level", "estimators", "bandwidth", "reference"};
    for (const auto& [key, v] : kv)
        if (!known.count(key)) errors.push_back(fmt::format("line {}: unknown key '{}'", v.second, key));

    auto fail = [&](const std::string& key, const std::string& msg) {
        errors.push_back(fmt::format("line {}: {}: {}", kv.at(key).second, key, msg));
    };
    auto list = [&](const std::string& key, const std::string& fallback) {
        const auto it = kv.find(key);
        return split(it == kv.end() ? fallback : it->second.first, ',');
    };
    auto has = [&](const std::string& key) { return kv.count(key) > 0; };

    StudyConfig cfg;

    std::vector<std::size_t> ns;
    for (const auto& s : list("n", "200")) {
        const auto v = parse_int(s);
        if (!v || *v < 10) fail("n", fmt::format("'{}' is not an integer >= 10", s));
        else ns.push_back(static_cast<std::size_t>(*v));
    }
    std::vector<double> taus;
    for (const auto& s : list("tau", "0.5")) {
        const auto v = parse_double(s);
        if (!v || !(*v > 0.0 && *v < 1.0)) fail("tau", fmt::format("'{}' is not in (0,1)", s));
        else taus.push_back(*v);
    }
    std::vector<ErrorLaw> laws;
    for (const auto& s : list("error_law", "ev")) {
        const auto l = lower(s);
        if (l == "ev") laws.push_back(ErrorLaw::EV);
        else if (l == "logistic") laws.push_back(ErrorLaw::Logistic);
        else if (l == "chisq3") laws.push_back(ErrorLaw::ChiSq3);
        else fail("error_law", fmt::format("'{}' is not one of ev, logistic, chisq3", s));
    }
    std::vector<Hetero> heteros;
    for (const auto& s : list("hetero", "m1")) {
        const auto l = lower(s);
        if (l == "m1") heteros.push_back(Hetero::M1);
        else if (l == "m2") heteros.push_back(Hetero::M2);
        else fail("hetero", fmt::format("'{}' is not one of m1, m2", s));
    }
    std::vector<Scheme> schemes;
    for (const auto& s : list("scheme", "pic")) {
        const auto l = lower(s);
        if (l == "pic") schemes.push_back(Scheme::PIC);
        else if (l == "ic") schemes.push_back(Scheme::IC);
        else fail("scheme", fmt::format("'{}' is not one of pic, ic", s));
    }

    double p0 = 0.55;
    const std::string p0_text = has("p0") ? lower(kv.at("p0").first) : "auto";
    if (p0_text == "auto") {
        cfg.target_censoring = 0.5;
        if (has("target_censoring")) {
            const auto v = parse_double(kv.at("target_censoring").first);
            if (!v || !(*v > 0.0 && *v < 1.0)) fail("target_censoring", "must lie in (0,1)");
            else cfg.target_censoring = *v;
        }
    } else {
        const auto v = parse_double(p0_text);
        if (!v || !(*v > 0.0 && *v < 1.0)) fail("p0", fmt::format("'{}' is neither 'auto' nor in (0,1)", kv.at("p0").first));
        else p0 = *v;
        if (has("target_censoring")) fail("target_censoring", "only allowed with p0 = auto");
    }

    std::uint64_t seed = 1;
    if (has("seed")) {
        const auto v = parse_int(kv.at("seed").first);
        if (!v || *v < 0) fail("seed", "must be a nonnegative integer");
        else seed = static_cast<std::uint64_t>(*v);
    }
    if (has("replicates")) {
        const auto v = parse_int(kv.at("replicates").first);
        if (!v || *v < 2) fail("replicates", "must be an integer >= 2");
        else cfg.options.replicates = static_cast<std::size_t>(*v);
    }
    if (has("bootstrap")) {
        const auto v = parse_int(kv.at("bootstrap").first);
        if (!v || *v < 0 || *v == 1) fail("bootstrap", "must be 0 or an integer >= 2");
        else cfg.options.bootstrap = static_cast<std::size_t>(*v);
    }
    if (has("ci_level")) {
        const auto v = parse_double(kv.at("ci_level").first);
        if (!v || !(*v > 0.0 && *v < 1.0)) fail("ci_level", "must lie in (0,1)");
        else cfg.options.ci_level = *v;
    }

    std::optional<std::vector<double>> bandwidths;
    if (has("bandwidth") && lower(kv.at("bandwidth").first) != "auto") {
        std::vector<double> h;
        for (const auto& s : list("bandwidth", "")) {
            const auto v = parse_double(s);
            if (!v || !(*v > 0.0)) fail("bandwidth", fmt::format("'{}' is not a positive number", s));
            else h.push_back(*v);
        }
        bandwidths = std::move(h);
    }
    std::set<std::string> names;
    for (const auto& s : list("estimators", "ks")) {
        const auto l = lower(s);
        EstimatorKind kind;
        if (l == "ks") kind = EstimatorKind::IcqrKernel;
        else if (l == "zfd") kind = EstimatorKind::Zfd;
        else {
            fail("estimators", fmt::format("'{}' is not one of ks, zfd", s));
            continue;
        }
        if (!names.insert(l).second) fail("estimators", fmt::format("'{}' listed twice", s));
        else cfg.estimators.push_back({l, kind, bandwidths});
    }
    if (has("reference")) {
        const auto r = lower(kv.at("reference").first);
        if (!names.count(r)) fail("reference", fmt::format("'{}' is not among the estimators", kv.at("reference").first));
        else cfg.reference = r;
    }

    if (!errors.empty()) {
        std::string msg = fmt::format("{}: {} error(s)", source, errors.size());
        for (const auto& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }

    for (auto n : ns)
        for (auto tau : taus)
            for (auto law : laws)
                for (auto h : heteros)
                    for (auto scheme : schemes) {
                        SimScenario sc;
                        sc.n = n;
                        sc.tau = tau;
                        sc.law = law;
                        sc.hetero = h;
                        sc.scheme = scheme;
                        sc.p0 = p0;
                        sc.seed = seed;
                        cfg.scenarios.push_back(sc);
                    }
    return cfg;
}

StudyConfig read_study_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
    return parse_study_config(in, path);
}

std::vector<SimScenario> resolve_scenarios(const StudyConfig& config) {
    std::vector<SimScenario> out = config.scenarios;
    if (!config.target_censoring) return out;
    for (auto& sc : out)
        if (sc.scheme == Scheme::PIC) sc.p0 = calibrate_p0(sc, *config.target_censoring);
    return out;
}

void write_study_table(std::ostream& out, const std::vector<StudyResult>& results, const std::optional<std::string>& reference) {
    auto cell = [](double v) { return std::isfinite(v) ? format_number(v) : std::string("NA"); };
    out << "n,tau,error_law,hetero,scheme,p0,censored,estimator,coefficient,bias,ese,bse,cp,mse,re\n";
    for (const auto& r : results) {
        const auto& sc = r.scenario;
        const EstimatorMetrics* ref = nullptr;
        if (reference)
            for (const auto& m : r.estimators)
                if (m.name == *reference) ref = &m;
        for (const auto& m : r.estimators) {
            for (std::size_t k = 0; k < m.coefficients.size(); ++k) {
                const auto& c = m.coefficients[k];
                // MSE(estimator) / MSE(reference)
                const double re = ref ? relative_efficiency(ref->coefficients[k].mse, c.mse) : NAN;
                out << sc.n << ',' << format_number(sc.tau) << ',' << to_string(sc.law) << ',' << to_string(sc.hetero) << ','
                    << to_string(sc.scheme) << ',' << (sc.scheme == Scheme::IC ? std::string("NA") : format_number(sc.p0)) << ','
                    << format_number(r.censored_fraction) << ',' << m.name << ',' << (k == 0 ? std::string("intercept") : fmt::format("x{}", k))
                    << ',' << cell(c.bias) << ',' << cell(c.ese) << ',' << cell(c.bse) << ',' << cell(c.cp) << ','
                    << cell(c.mse) << ',' << cell(re) << '\n';
            }
        }
    }
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json fit_json(const Dataset& dataset, const EstimatorSpec& spec, const FitResult& result,
                                const InferenceResult* inference) {
    using J = nlohmann::ordered_json;
    J j;
    j["estimator"] = to_string(spec.kind);
    j["tau"] = result.fit.tau;
    j["n"] = dataset.size();
    J coefs = J::array();
    for (Eigen::Index k = 0; k < result.fit.beta.size(); ++k) {
        J c;
        const auto uk = static_cast<std::size_t>(k);
        c["name"] = k == 0 ? std::string("intercept")
                           : (uk - 1 < dataset.covariate_names.size() ? dataset.covariate_names[uk - 1] : fmt::format("x{}", k));
        c["beta"] = result.fit.beta(k);
        c["se"] = inference ? number_or_null(inference->se(k)) : J(nullptr);
        c["ci_lower"] = inference ? number_or_null(inference->ci_lower(k)) : J(nullptr);
        c["ci_upper"] = inference ? number_or_null(inference->ci_upper(k)) : J(nullptr);
        coefs.push_back(std::move(c));
    }
    j["coefficients"] = std::move(coefs);
    j["m_star"] = result.m_star;
    j["objective"] = result.fit.objective;
    j["subgradient_norm"] = result.fit.subgradient_norm;
    j["rows_used"] = result.fit.n_used;
    j["indeterminate"] = result.indeterminate;
    J kernel = J::array();
    for (const auto& c : result.kernel.components) {
        if (c.kind == KernelKind::Gaussian)
            kernel.push_back(J{{"kind", "gaussian"}, {"bandwidth", c.bandwidth}});
        else
            kernel.push_back(J{{"kind", "indicator"}, {"mismatch", c.mismatch}});
    }
    j["kernel"] = std::move(kernel);
    j["em"] = J{{"runs", result.em.runs},
                {"converged", result.em.converged},
                {"max_iterations", result.em.max_iterations},
                {"median_iterations", result.em.median_iterations}};
    if (inference) j["bootstrap"] = J{{"replicates", inference->replicates.rows()}, {"dropped", inference->dropped}};
    return j;
}

std::string dump_json(const nlohmann::ordered_json& value) { return value.dump(2) + "\n"; }

}  // namespace icqr
