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
#include "icqr/inference.hpp"
#include "icqr/pipeline.hpp"
#include "icqr/simbench.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace icqr {

// ---------------------------------------------------------------------------
// Datasets

struct CsvOptions {
    bool log_times = false;  // input times are raw; take logs on ingestion
};

/// Header `delta,time,left,right,<covariates...>` (column order of the four
/// named columns is free). "-inf"/"inf" in any case, or an empty cell, mark an
/// open end. The intercept is prepended to the covariates.
Dataset read_dataset(std::istream& in, const CsvOptions& options = {}, const std::string& source = "<input>");
Dataset read_dataset_file(const std::string& path, const CsvOptions& options = {});

/// Canonical form: log-scale times, 17 significant digits, "-inf"/"inf".
void write_dataset(std::ostream& out, const Dataset& dataset);

/// 17 significant digits; "inf", "-inf", "nan" for the special values.
std::string format_number(double v);

// ---------------------------------------------------------------------------
// Study configuration

struct StudyConfig {
    std::vector<SimScenario> scenarios;        // cartesian product of the list keys
    std::optional<double> target_censoring;    // set when p0 = auto
    StudyOptions options;
    std::vector<EstimatorConfig> estimators;
    std::optional<std::string> reference;      // estimator name used for the RE column
};

/// Flat `key = value` text; '#' starts a comment. Every schema violation is
/// collected and reported in one ValidationError.
StudyConfig parse_study_config(std::istream& in, const std::string& source = "<config>");
StudyConfig read_study_config_file(const std::string& path);

/// Resolves p0 = auto by calibration.
std::vector<SimScenario> resolve_scenarios(const StudyConfig& config);

/// One row per (scenario, estimator, coefficient).
void write_study_table(std::ostream& out, const std::vector<StudyResult>& results, const std::optional<std::string>& reference);

// ---------------------------------------------------------------------------
// JSON results

nlohmann::ordered_json fit_json(const Dataset& dataset, const EstimatorSpec& spec, const FitResult& result,
                                const InferenceResult* inference);

/// Stable textual form of a JSON value: two-space indent, trailing newline.
std::string dump_json(const nlohmann::ordered_json& value);

}  // namespace icqr
