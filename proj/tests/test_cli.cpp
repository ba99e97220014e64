#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evstop/error.hpp"
#include "evstop/ingest.hpp"
#include "commands.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("evstop_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Runs the installed binary through the shell, from `cwd`, with an optional
// environment prefix such as "EVSTOP_OUTPUT_DIR=/x".
Outcome invoke(const std::string& args, const TempDir& cwd, const std::string& env = "") {
    const auto out = cwd / "stdout.txt";
    const auto err = cwd / "stderr.txt";
    const std::string cmd = "cd '" + cwd.path.string() + "' && env -u EVSTOP_OUTPUT_DIR " + env +
                            " '" EVSTOP_BIN "' " + args + " > '" + out.string() + "' 2> '" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// m = 1 table whose row sums follow `series`.
std::string series_records(const std::vector<double>& series) {
    evstop::LogLikTable t;
    t.chain_id = "s";
    t.m = 1;
    for (std::size_t i = 0; i < series.size(); ++i) {
        t.sample_rows.push_back({series[i]});
        t.original_indices.push_back(i + 1);
    }
    return evstop::to_records(std::vector<evstop::LogLikTable>{t}, evstop::RecordFormat::csv);
}

std::vector<json> jsonl(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) {
            out.push_back(json::parse(line));
        }
    }
    return out;
}

} // namespace

TEST_CASE("configuration errors exit 3") {
    TempDir dir;
    CHECK(invoke("", dir).code == 3);
    CHECK(invoke("frobnicate", dir).code == 3);
    CHECK(invoke("simulate --no-such-flag", dir).code == 3);
    CHECK(invoke("simulate --alpha 1.5 --reps 500", dir).code == 3);
    CHECK(invoke("simulate --kind exact_null --reps 10", dir).code == 3);
    CHECK(invoke("simulate --kind banana", dir).code == 3);
    CHECK(invoke("run missing.jsonl", dir).code == 3);

    write_file(dir / "ok.csv", "a,sample,1,-1\na,sample,2,-1\n");
    CHECK(invoke("run ok.csv --mode median", dir).code == 3);
    CHECK(invoke("run ok.csv --thinning sometimes", dir).code == 3);
    const auto no_ws = invoke("run ok.csv --mode de_warmstart", dir);
    CHECK(no_ws.code == 3);
    CHECK(no_ws.err.find("warmstart") != std::string::npos);
}

TEST_CASE("data errors exit 2") {
    TempDir dir;
    write_file(dir / "bad.jsonl", "{\"chain\":\"a\",\"kind\":\"sample\",\"index\":1,\"loglik\":[-1]}\n{oops\n");
    const auto bad = invoke("run bad.jsonl --mode first_sample", dir);
    CHECK(bad.code == 2);
    CHECK(bad.err.find("line 2") != std::string::npos);

    write_file(dir / "gap.csv", "a,sample,1,-1\na,sample,3,-1\n");
    CHECK(invoke("run gap.csv --mode first_sample", dir).code == 2);

    write_file(dir / "inf.csv", "a,sample,1,-inf\na,sample,2,-1\n");
    CHECK(invoke("run inf.csv --mode first_sample", dir).code == 2);
    CHECK(invoke("run inf.csv --mode first_sample --clamp", dir).code == 0);

    write_file(dir / "empty.csv", "");
    CHECK(invoke("run empty.csv", dir).code == 2);
}

TEST_CASE("exit code mapping") {
    std::ostringstream err;
    using evstop::cli::report_failure;
    CHECK(report_failure(std::make_exception_ptr(evstop::DataError("d")), err) == 2);
    CHECK(report_failure(std::make_exception_ptr(evstop::ParseError(3, "p")), err) == 2);
    CHECK(report_failure(std::make_exception_ptr(evstop::ConfigError("c")), err) == 3);
    CHECK(report_failure(std::make_exception_ptr(evstop::InvariantError("i")), err) == 4);
    CHECK(report_failure(std::make_exception_ptr(evstop::UsageError("u")), err) == 4);
    CHECK(report_failure(std::make_exception_ptr(42), err) == 4);
    CHECK(err.str().find("internal error") != std::string::npos);
}

TEST_CASE("simulate certifies the null") {
    TempDir dir;
    const auto r = invoke("simulate --kind exact_null --sigma 1 --alpha 0.05 --reps 2000", dir);
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc["rejection_rate"].get<double>() <= 0.05);
    CHECK(doc["replications"].get<int>() == 2000);

    const auto zero = invoke("simulate --sigma 0 --reps 500", dir);
    REQUIRE(zero.code == 0);
    CHECK(json::parse(zero.out)["rejection_rate"].get<double>() == 0.0);
}

TEST_CASE("simulate output is reproducible") {
    TempDir dir;
    const std::string args = "simulate --kind lognormal_alt --mu 0.25 --sigma 0.5 --reps 700";
    REQUIRE(invoke(args + " --output a.json", dir).code == 0);
    REQUIRE(invoke(args + " --output b.json", dir).code == 0);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(invoke(args, dir).out == slurp(dir / "a.json"));
}

TEST_CASE("all-null input abstains everywhere") {
    TempDir dir;
    std::string text;
    for (int c = 0; c < 3; ++c) {
        const std::string id = "n" + std::to_string(c);
        text += id + ",warmstart,0,-1,-2,-3\n";
        for (int i = 1; i <= 30; ++i) {
            text += id + ",sample," + std::to_string(i) + ",-1,-2,-3\n";
        }
    }
    write_file(dir / "null.csv", text);
    const auto r = invoke("run null.csv -o out", dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("threshold: log E >= 4.60517") != std::string::npos);
    const auto decisions = jsonl(slurp(dir / "out/decisions.jsonl"));
    REQUIRE(decisions.size() == 3);
    for (const auto& d : decisions) {
        CHECK(d["verdict"] == "budget_exhausted");
        CHECK(d["retained"].empty());
    }
    const auto report = json::parse(slurp(dir / "out/report.json"));
    CHECK(report["total_samples_used"].get<int>() == 0);
}

TEST_CASE("deterministic alternative rejects at the fifth tested sample") {
    TempDir dir;
    REQUIRE(invoke("simulate --kind lognormal_alt --mu 1 --sigma 0 --chains 8 --budget 50 "
                   "--reps 500 --dump alt",
                   dir)
                .code == 0);
    const auto r = invoke("run alt --alpha 0.01 -o out", dir);
    REQUIRE(r.code == 0);
    const auto decisions = jsonl(slurp(dir / "out/decisions.jsonl"));
    REQUIRE(decisions.size() == 8);
    for (const auto& d : decisions) {
        CHECK(d["verdict"] == "rejected_h0");
        CHECK(d["tested_steps"].get<int>() <= 10);
        CHECK(d["tested_steps"].get<int>() == 5);
    }
    const auto traj = slurp(dir / "out/trajectories.csv");
    CHECK(traj.rfind("chain_id,tested_index,log_e,threshold_log", 0) == 0);
}

TEST_CASE("gaussian pipeline, report idempotence and output directory") {
    TempDir dir;
    const auto sim = invoke("simulate --kind gaussian_model --chains 6 --budget 80 --dump g", dir);
    REQUIRE(sim.code == 0);
    CHECK(json::parse(sim.out).contains("mean_acceptance_rate"));
    CHECK(fs::exists(dir / "g/validation.jsonl"));
    CHECK(fs::exists(dir / "g/holdout.jsonl"));

    const auto run = invoke("run g -j 3", dir, "EVSTOP_OUTPUT_DIR=from_env");
    REQUIRE(run.code == 0);
    for (const char* f : {"decisions.jsonl", "trajectories.csv", "report.json", "report.txt"}) {
        CHECK(fs::exists(dir / "from_env" / f));
    }
    CHECK_FALSE(fs::exists(dir / "evstop_out"));

    const auto rep = invoke("report --decisions from_env/decisions.jsonl --records g", dir);
    REQUIRE(rep.code == 0);
    CHECK(rep.out == slurp(dir / "from_env/report.txt"));
    const auto again = invoke("report --decisions from_env/decisions.jsonl --records g", dir);
    CHECK(again.out == rep.out);
    const auto as_json =
        invoke("report --decisions from_env/decisions.jsonl --records g --json", dir);
    REQUIRE(as_json.code == 0);
    CHECK(json::parse(as_json.out) == json::parse(slurp(dir / "from_env/report.json")));

    // Explicit flag wins over the environment; the default is ./evstop_out.
    REQUIRE(invoke("run g -o flag_dir", dir, "EVSTOP_OUTPUT_DIR=from_env2").code == 0);
    CHECK(fs::exists(dir / "flag_dir/report.txt"));
    CHECK_FALSE(fs::exists(dir / "from_env2"));
    REQUIRE(invoke("run g", dir).code == 0);
    CHECK(fs::exists(dir / "evstop_out/report.txt"));

    // Parallel and serial runs agree.
    REQUIRE(invoke("run g -j 1 -o serial", dir).code == 0);
    CHECK(slurp(dir / "serial/decisions.jsonl") == slurp(dir / "from_env/decisions.jsonl"));
}

TEST_CASE("thinning off prints the caveat") {
    TempDir dir;
    REQUIRE(invoke("simulate --kind gaussian_model --chains 2 --budget 40 --dump g", dir).code == 0);
    const auto r = invoke("run g --thinning off -o o", dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("caveat") != std::string::npos);
    const auto fixed = invoke("run g --thinning 4 -o o4", dir);
    REQUIRE(fixed.code == 0);
    for (const auto& d : jsonl(slurp(dir / "o4/decisions.jsonl"))) {
        CHECK(d["thinning_interval"].get<int>() == 4);
    }
}

TEST_CASE("thin reports intervals") {
    TempDir dir;
    write_file(dir / "white.csv", series_records(oracle::white_noise(10000, 3)));
    write_file(dir / "ar.csv", series_records(oracle::ar1(100000, 0.5, 3)));
    write_file(dir / "flat.csv", series_records(std::vector<double>(100, -2.0)));

    const auto white = invoke("thin white.csv", dir);
    REQUIRE(white.code == 0);
    const auto wchain = json::parse(white.out)["chains"][0];
    CHECK(wchain["iac_time"].get<double>() <= 1.1);
    CHECK(wchain["recommended_interval"].get<double>() ==
          std::ceil(wchain["iac_time"].get<double>()));

    const auto ar = invoke("thin ar.csv", dir);
    REQUIRE(ar.code == 0);
    const auto chain = json::parse(ar.out)["chains"][0];
    CHECK(std::abs(chain["iac_time"].get<double>() - 3.0) < 0.45);
    CHECK(chain["recommended_interval"].get<int>() >= 3);
    CHECK(chain["recommended_interval"].get<int>() <= 4);

    const auto flat = invoke("thin flat.csv", dir);
    CHECK(flat.code == 2);
    CHECK(flat.err.find("s") != std::string::npos);
}

TEST_CASE("threshold header for other alphas") {
    TempDir dir;
    write_file(dir / "x.csv", "a,sample,1,-1\na,sample,2,-0.5\n");
    const auto r = invoke("run x.csv --mode first_sample --alpha 0.05 -o o", dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("log E >= 2.99573 (E >= 20)") != std::string::npos);
}
