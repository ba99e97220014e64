#pragma once

// Synthetic scenarios for checking the stopping rule.
//
// Randomness comes from CounterRng: SplitMix64's output function applied to
// (stream key + (counter + 1) * golden gamma), where the stream key is itself
// mixed from (seed, stream id). Every draw is addressed by (seed, stream,
// counter), so chains and replications are independent of evaluation order.
// Normal deviates use the cosine branch of Box-Muller on counters 2i and 2i+1.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "evstop/eprocess.hpp"
#include "evstop/ingest.hpp"

namespace evstop {

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t bits(std::uint64_t counter) const noexcept;
    // Uniform on the open interval (0, 1).
    double uniform(std::uint64_t counter) const noexcept;
    // Standard normal; consumes counters 2 * index and 2 * index + 1.
    double normal(std::uint64_t index) const noexcept;

private:
    std::uint64_t key_;
};

enum class ScenarioKind { exact_null, lognormal_alt, gaussian_model };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(std::string_view text);

// Conjugate 1-D unknown-mean Gaussian task and its random-walk Metropolis sampler.
struct GaussianModelOptions {
    std::size_t n_train = 50;
    double noise_sd = 1.0;
    double prior_sd = 10.0;
    double true_mean = 0.0;
    double proposal_sd = 0.5;
    std::size_t burn_in = 0;          // Metropolis steps discarded before recording
    std::size_t steps_per_sample = 1; // Metropolis steps between recorded samples
    double init_offset = 0.0;         // chains start at MAP + init_offset
};

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::exact_null;
    double mu = 0.0;    // mean log lift per tested sample (lognormal_alt)
    double sigma = 1.0; // log-ratio volatility
    std::size_t m = 100;
    std::size_t chains = 16;
    std::size_t budget = 200;
    std::uint64_t seed = 20240611;
    GaussianModelOptions gaussian;

    // Throws ConfigError on negative or non-finite sigma, zero sizes, etc.
    void validate() const;
};

// `spec.budget` i.i.d. steps indexed 2, 3, ...: ln S ~ Normal(mu - sigma^2/2,
// sigma^2), with mu forced to 0 for exact_null so that E[S] = 1 exactly.
std::vector<LogRatioStep> generate_log_ratio_stream(const ScenarioSpec& spec,
                                                    std::uint64_t chain);

// Record tables whose rows reproduce the streams against the warmstart: the
// warmstart row is constant and sample j adds step_j / m to every point, so in
// de_warmstart mode the tested log ratios equal the stream.
std::vector<LogLikTable> stream_tables(const ScenarioSpec& spec);

struct GaussianTask {
    std::vector<double> train;
    std::vector<double> validation;
    std::vector<double> holdout;
    double noise_sd = 1.0;
    double prior_sd = 10.0;

    double posterior_precision() const;
    double posterior_mean() const; // also the MAP
    double posterior_sd() const;
    double log_posterior(double theta) const; // up to an additive constant
    std::vector<double> loglik_row(double theta, std::span<const double> points) const;
};

GaussianTask make_gaussian_task(const ScenarioSpec& spec);

struct MetropolisTrace {
    std::vector<double> draws;
    std::size_t accepted = 0;
    std::size_t proposed = 0;

    double acceptance_rate() const {
        return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

// Every Metropolis state after each of `steps` transitions from `init`.
MetropolisTrace random_walk_metropolis(const GaussianTask& task, const ScenarioSpec& spec,
                                       std::uint64_t chain, double init, std::size_t steps);

struct GaussianModelRun {
    GaussianTask task;
    std::vector<LogLikTable> tables;  // rows on the validation points
    std::vector<LogLikTable> holdout; // same members on the hold-out points
    std::vector<double> acceptance_rates;
};

// Warmstart = MAP, samples = `spec.budget` recorded Metropolis states per chain.
GaussianModelRun gaussian_model_run(const ScenarioSpec& spec);

struct CheckpointMean {
    std::size_t k = 0;
    double mean = 0.0;
    double standard_error = 0.0;
};

struct ValidityResult {
    double alpha = 0.0;
    std::size_t replications = 0;
    std::size_t rejections = 0;
    double rejection_rate = 0.0;
    // Mean of the stopped process E_{min(k, tau)} over replications.
    std::vector<CheckpointMean> checkpoints;
    // Quartiles of the tested-step count at rejection, over rejecting replications.
    std::optional<std::array<double, 3>> stopping_time_quartiles;
    // Median tested-step count to rejection with non-rejections counted as
    // +infinity; empty when at most half of the replications reject.
    std::optional<double> median_steps_to_reject;
};

// Runs generate_log_ratio_stream + run_chain for replications 0..reps-1.
// Works for exact_null and lognormal_alt.
ValidityResult simulate_streams(const ScenarioSpec& spec, double alpha,
                                std::size_t replications);

// simulate_streams restricted to exact_null with at least 500 replications.
ValidityResult certify_validity(const ScenarioSpec& spec, double alpha,
                                std::size_t replications);

} // namespace evstop
