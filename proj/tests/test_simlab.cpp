#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "evstop/ensemble.hpp"
#include "evstop/error.hpp"
#include "evstop/simlab.hpp"

using namespace evstop;

TEST_CASE("counter rng is addressable and uniform-ish") {
    const CounterRng a(1, 2);
    const CounterRng b(1, 2);
    const CounterRng c(1, 3);
    CHECK(a.bits(17) == b.bits(17));
    CHECK(a.bits(17) != c.bits(17));
    std::set<std::uint64_t> seen;
    double sum = 0.0;
    double sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        seen.insert(a.bits(i));
        const double u = a.uniform(i);
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        const double z = a.normal(i);
        sum += z;
        sq += z * z;
    }
    CHECK(seen.size() == static_cast<std::size_t>(n));
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("scenario names and validation") {
    CHECK(parse_scenario_kind("lognormal_alt") == ScenarioKind::lognormal_alt);
    CHECK(to_string(ScenarioKind::gaussian_model) == "gaussian_model");
    CHECK_THROWS_AS(parse_scenario_kind("nope"), ConfigError);
    ScenarioSpec s;
    s.sigma = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.sigma = 1.0;
    s.budget = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("degenerate and deterministic streams") {
    ScenarioSpec s;
    s.sigma = 0.0;
    s.budget = 50;
    const auto null0 = generate_log_ratio_stream(s, 0);
    REQUIRE(null0.size() == 50);
    CHECK(null0.front().sample_index == 2);
    for (const auto& st : null0) {
        CHECK(st.log_s == 0.0);
    }
    s.kind = ScenarioKind::lognormal_alt;
    s.mu = 0.5;
    for (const auto& st : generate_log_ratio_stream(s, 3)) {
        CHECK(st.log_s == 0.5);
    }
    s.sigma = 1.0;
    const auto x = generate_log_ratio_stream(s, 4);
    const auto y = generate_log_ratio_stream(s, 4);
    const auto z = generate_log_ratio_stream(s, 5);
    bool same = true;
    bool differ = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        same = same && x[i].log_s == y[i].log_s;
        differ = differ || x[i].log_s != z[i].log_s;
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("exact null has unit lognormal mean") {
    ScenarioSpec s;
    s.sigma = 1.0;
    s.budget = 1000000;
    const auto steps = generate_log_ratio_stream(s, 0);
    double sum = 0.0;
    for (const auto& st : steps) {
        sum += std::exp(st.log_s);
    }
    const double n = static_cast<double>(steps.size());
    const double se = std::sqrt((std::exp(1.0) - 1.0) / n);
    CHECK(std::abs(sum / n - 1.0) <= 3.0 * se);
}

TEST_CASE("stream tables reproduce the stream under the warmstart reference") {
    ScenarioSpec s;
    s.kind = ScenarioKind::lognormal_alt;
    s.mu = 0.3;
    s.chains = 3;
    s.budget = 25;
    s.m = 7;
    const auto tables = stream_tables(s);
    REQUIRE(tables.size() == 3);
    for (std::size_t c = 0; c < tables.size(); ++c) {
        const auto stream = generate_log_ratio_stream(s, c);
        const auto tested = tested_steps(tables[c], ReferenceMode::de_warmstart);
        REQUIRE(tested.size() == stream.size());
        for (std::size_t i = 0; i < stream.size(); ++i) {
            CHECK(tested[i].log_s == doctest::Approx(stream[i].log_s).epsilon(1e-12));
        }
    }
}

TEST_CASE("certification") {
    ScenarioSpec s;
    s.sigma = 0.0;
    const auto zero = certify_validity(s, 0.05, 500);
    CHECK(zero.rejections == 0);
    CHECK(zero.rejection_rate == 0.0);
    for (const auto& cp : zero.checkpoints) {
        CHECK(cp.mean == 1.0);
    }

    s.sigma = 1.0;
    const auto r = certify_validity(s, 0.05, 2000);
    CHECK(r.rejection_rate <= 0.05);
    REQUIRE(r.checkpoints.size() == 3);
    CHECK(r.checkpoints[0].k == 5);
    CHECK(r.checkpoints[2].k == 100);
    for (const auto& cp : r.checkpoints) {
        CHECK(cp.mean <= 1.0 + 3.0 * cp.standard_error);
    }

    CHECK_THROWS_AS(certify_validity(s, 0.05, 100), ConfigError);
    s.kind = ScenarioKind::lognormal_alt;
    CHECK_THROWS_AS(certify_validity(s, 0.05, 1000), ConfigError);
}

TEST_CASE("alternative median stopping time") {
    ScenarioSpec s;
    s.kind = ScenarioKind::lognormal_alt;
    s.mu = 0.5;
    s.sigma = 0.5;
    const auto r = simulate_streams(s, 0.01, 1000);
    REQUIRE(r.median_steps_to_reject);
    const double centre = std::ceil(std::log(100.0) / 0.375);
    CHECK(*r.median_steps_to_reject >= 0.5 * centre);
    CHECK(*r.median_steps_to_reject <= 1.5 * centre);
    REQUIRE(r.stopping_time_quartiles);
    CHECK((*r.stopping_time_quartiles)[0] <= (*r.stopping_time_quartiles)[2]);
}

TEST_CASE("gaussian task closed form") {
    ScenarioSpec s;
    s.kind = ScenarioKind::gaussian_model;
    s.chains = 2;
    s.budget = 20;
    const auto run = gaussian_model_run(s);
    const auto& task = run.task;
    REQUIRE(task.train.size() == 50);
    REQUIRE(task.validation.size() == s.m);

    double sum = 0.0;
    for (double y : task.train) {
        sum += y;
    }
    const double precision = 1.0 / 100.0 + 50.0;
    const double mean = sum / precision;
    CHECK(task.posterior_mean() == doctest::Approx(mean).epsilon(1e-12));
    CHECK(task.posterior_sd() == doctest::Approx(1.0 / std::sqrt(precision)).epsilon(1e-12));

    REQUIRE(run.tables.size() == 2);
    const auto& ws = *run.tables[0].warmstart_row;
    for (std::size_t i = 0; i < task.validation.size(); ++i) {
        const double d = task.validation[i] - mean;
        const double expected = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * d * d;
        CHECK(ws[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(run.tables[0].sample_count() == 20);
    CHECK(run.holdout[0].sample_count() == 20);
}

TEST_CASE("metropolis acceptance and posterior mean") {
    ScenarioSpec s;
    s.kind = ScenarioKind::gaussian_model;
    const auto task = make_gaussian_task(s);

    const auto short_run = random_walk_metropolis(task, s, 0, task.posterior_mean(), 10000);
    CHECK(short_run.acceptance_rate() >= 0.2);
    CHECK(short_run.acceptance_rate() <= 0.8);

    const std::size_t n = 100000;
    const auto trace = random_walk_metropolis(task, s, 1, task.posterior_mean() + 1.0, n);
    REQUIRE(trace.draws.size() == n);
    // Batch means for the Monte Carlo standard error.
    const std::size_t batches = 100;
    const std::size_t len = n / batches;
    std::vector<double> means(batches, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t i = 0; i < len; ++i) {
            means[b] += trace.draws[b * len + i];
        }
        means[b] /= static_cast<double>(len);
        total += means[b];
    }
    const double grand = total / static_cast<double>(batches);
    double var = 0.0;
    for (double m : means) {
        var += (m - grand) * (m - grand);
    }
    var /= static_cast<double>(batches - 1);
    const double se = std::sqrt(var / static_cast<double>(batches));
    CHECK(std::abs(grand - task.posterior_mean()) <= 3.0 * se);
}

TEST_CASE("warmstart reference abstains on most data draws") {
    int majority_abstain = 0;
    const int seeds = 12;
    for (int seed = 1; seed <= seeds; ++seed) {
        ScenarioSpec s;
        s.kind = ScenarioKind::gaussian_model;
        s.seed = static_cast<std::uint64_t>(seed);
        s.budget = 100;
        const auto run = gaussian_model_run(s);
        int exhausted = 0;
        for (const auto& t : run.tables) {
            const auto d = decide_chain(t, ReferenceMode::de_warmstart, StoppingConfig(0.01, 100, 5));
            exhausted += d.verdict == ProcessStatus::budget_exhausted ? 1 : 0;
        }
        majority_abstain += exhausted * 2 > static_cast<int>(s.chains) ? 1 : 0;
    }
    CHECK(majority_abstain * 2 > seeds);
}

TEST_CASE("gaussian runs are deterministic") {
    ScenarioSpec s;
    s.kind = ScenarioKind::gaussian_model;
    s.chains = 3;
    s.budget = 30;
    const auto a = gaussian_model_run(s);
    const auto b = gaussian_model_run(s);
    CHECK(a.tables == b.tables);
    CHECK(a.holdout == b.holdout);
}
