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

#include "doctest.h"

#include "icqr/io.hpp"

#include <sstream>

using namespace icqr;

namespace {

Dataset parse(const std::string& text, CsvOptions opt = {}) {
    std::istringstream in(text);
    return read_dataset(in, opt, "data.csv");
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("csv ingestion") {
    const auto d = parse("delta,time,left,right,age,male\n"
                         "1,0.5,,,40,1\n"
                         "0,,1.0,2.0,35,0\n"
                         "0,,-INF,1.5,50,1\n"
                         "0,,0.7,Inf,61,0\n"
                         "0,,,3.0,44,1\n"
                         "0,,2.5,,30,0\n");
    REQUIRE(d.size() == 6);
    CHECK(d.dim() == 3);
    CHECK(d.covariate_names == std::vector<std::string>{"age", "male"});
    CHECK(d[0].exact);
    CHECK(d[0].time() == 0.5);
    CHECK(d[0].x(0) == 1.0);
    CHECK(d[0].x(1) == 40.0);
    CHECK(d[2].left == -kInf);
    CHECK(d[3].right == kInf);
    CHECK(d[4].left == -kInf);
    CHECK(d[5].right == kInf);
    CHECK(classify(d[1]) == CensoringClass::Interval);
}

TEST_CASE("column order of the named columns is free") {
    const auto d = parse("x,right,delta,left,time\n2,3.5,0,1.5,\n");
    CHECK(d[0].left == 1.5);
    CHECK(d[0].right == 3.5);
    CHECK(d[0].x(1) == 2.0);
}

TEST_CASE("csv errors cite the line") {
    CHECK(error_of("delta,time,left,right\n1,0.5,,\n0,,1.0\n").find("data.csv:3") != std::string::npos);
    CHECK(error_of("delta,time,left,right\n2,0.5,,\n").find("data.csv:2") != std::string::npos);
    CHECK(error_of("delta,time,left,right\n1,,,\n").find("needs a time") != std::string::npos);
    CHECK(error_of("delta,time,left,right\n0,,2.0,1.0\n").find("data.csv:2") != std::string::npos);
    CHECK(error_of("delta,time,left,right,x\n1,1.0,,,abc\n").find("non-numeric") != std::string::npos);
    CHECK(error_of("time,left,right\n1,,\n").find("delta") != std::string::npos);
    CHECK(error_of("delta,time\n").find("no data rows") != std::string::npos);
    CHECK(error_of("").find("header") != std::string::npos);
}

TEST_CASE("raw times are logged on request") {
    const auto d = parse("delta,time,left,right\n1,2.718281828459045,,\n0,,0,1\n0,,1,inf\n", CsvOptions{true});
    CHECK(d[0].time() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d[1].left == -kInf);
    CHECK(d[1].right == 0.0);
    CHECK(d[2].left == 0.0);
    CHECK(d[2].right == kInf);
    std::istringstream bad("delta,time,left,right\n1,0,,\n");
    CHECK_THROWS_AS(read_dataset(bad, CsvOptions{true}), ValidationError);
}

TEST_CASE("write then read is the identity") {
    Dataset d;
    d.covariate_names = {"a"};
    d.observations.push_back(Observation::exact_at(0.1 + 0.2, Eigen::Vector2d(1.0, 1.0 / 3.0)));
    d.observations.push_back(Observation::censored(-kInf, 2.0, Eigen::Vector2d(1.0, -1e-300)));
    d.observations.push_back(Observation::censored(1.0 / 7.0, kInf, Eigen::Vector2d(1.0, 12345.678)));
    d.observations.push_back(Observation::censored(-3.0, 4.0, Eigen::Vector2d(1.0, 0.0)));
    std::ostringstream out;
    write_dataset(out, d);
    const auto back = parse(out.str());
    REQUIRE(back.size() == d.size());
    CHECK(back.covariate_names == d.covariate_names);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back[i].exact == d[i].exact);
        CHECK(back[i].left == d[i].left);
        CHECK(back[i].right == d[i].right);
        CHECK(back[i].x == d[i].x);
    }
    std::ostringstream again;
    write_dataset(again, back);
    CHECK(again.str() == out.str());
    CHECK(out.str().find("-inf") != std::string::npos);
}

TEST_CASE("number formatting") {
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK(format_number(kInf) == "inf");
    CHECK(format_number(-kInf) == "-inf");
    CHECK(format_number(NAN) == "nan");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("study config") {
    std::istringstream in("# desk-scale study\n"
                          "n = 100, 200\n"
                          "tau = 0.5\n"
                          "error_law = ev, logistic\n"
                          "scheme = pic\n"
                          "p0 = auto   # calibrated\n"
                          "target_censoring = 0.6\n"
                          "seed = 42\n"
                          "replicates = 20\n"
                          "bootstrap = 0\n"
                          "estimators = ks, zfd\n"
                          "reference = ks\n");
    const auto cfg = parse_study_config(in);
    CHECK(cfg.scenarios.size() == 4);
    CHECK(cfg.scenarios[0].n == 100);
    CHECK(cfg.scenarios[1].law == ErrorLaw::Logistic);
    CHECK(cfg.scenarios[3].seed == 42);
    CHECK(cfg.target_censoring == 0.6);
    CHECK(cfg.options.replicates == 20);
    CHECK(cfg.options.bootstrap == 0);
    REQUIRE(cfg.estimators.size() == 2);
    CHECK(cfg.estimators[1].kind == EstimatorKind::Zfd);
    CHECK(cfg.reference == "ks");
}

TEST_CASE("config errors are reported together") {
    std::istringstream in("n = 5\n"
                          "tau = 1.5\n"
                          "colour = red\n"
                          "estimators = ks, rf\n"
                          "reference = zfd\n"
                          "junk line\n");
    try {
        parse_study_config(in, "study.cfg");
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("6 error(s)") != std::string::npos);
        for (const char* s : {"line 1", "line 2", "colour", "rf", "zfd", "line 6"}) CHECK(msg.find(s) != std::string::npos);
    }
}

TEST_CASE("study table layout") {
    StudyResult r;
    r.scenario.n = 200;
    r.censored_fraction = 0.5;
    for (const char* name : {"ks", "zfd"}) {
        EstimatorMetrics m;
        m.name = name;
        for (int k = 0; k < 3; ++k) m.coefficients.push_back({0.01, 0.2, NAN, NAN, name == std::string("ks") ? 0.25 : 0.5});
        r.estimators.push_back(m);
    }
    std::ostringstream out;
    write_study_table(out, {r}, std::string("ks"));
    std::istringstream lines(out.str());
    std::vector<std::string> rows;
    for (std::string l; std::getline(lines, l);) rows.push_back(l);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == "n,tau,error_law,hetero,scheme,p0,censored,estimator,coefficient,bias,ese,bse,cp,mse,re");
    CHECK(rows[1].find(",ks,intercept,") != std::string::npos);
    CHECK(rows[1].substr(rows[1].size() - 2) == ",1");
    CHECK(rows[4].find(",zfd,intercept,") != std::string::npos);
    CHECK(rows[4].find(",NA,NA,") != std::string::npos);
    CHECK(rows[4].substr(rows[4].size() - 2) == ",2");
}

TEST_CASE("fit json") {
    const auto d = parse("delta,time,left,right\n1,3,,\n1,1,,\n1,2,,\n");
    EstimatorSpec spec;
    const auto r = fit(d, spec);
    const auto j = fit_json(d, spec, r, nullptr);
    CHECK(j["coefficients"][0]["beta"].get<double>() == 2.0);
    CHECK(j["coefficients"][0]["se"].is_null());
    CHECK(j["estimator"] == "ks");
    CHECK(j["n"] == 3);
    const auto text = dump_json(j);
    CHECK(text.back() == '\n');
    CHECK(nlohmann::json::parse(text)["tau"].get<double>() == 0.5);
}
