#pragma once

// Likelihood-ratio E-process for a single chain.
//
// Every sample k tested against a fixed reference contributes the e-variable
//
//     S_k = prod_i p(y_i | x_i, theta_k) / p(y_i | x_i, theta_ref)
//
// and the running evidence is E_k = E_{k-1} * S_k with E = 1 before the first
// test. Everything here is carried in natural-log space: log S_k is the sum of
// per-point log-likelihood differences, so validation sets of any size are
// safe. Sampling stops the first time E_k >= 1/alpha, i.e. log E_k >= -ln alpha;
// Ville's inequality bounds the probability of that ever happening under the
// null by alpha.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace evstop {

// One tested sample: its index in the chain and ln S_k.
struct LogRatioStep {
    std::size_t sample_index = 0;
    double log_s = 0.0;
};

class StoppingConfig {
public:
    // Throws ConfigError unless 0 < alpha < 1, budget >= 1, thinning_interval >= 1.
    StoppingConfig(double alpha, std::size_t budget, std::size_t thinning_interval = 1);

    double alpha() const noexcept { return alpha_; }
    std::size_t budget() const noexcept { return budget_; }
    std::size_t thinning_interval() const noexcept { return thinning_interval_; }

    // -ln(alpha), always > 0.
    double log_threshold() const noexcept { return log_threshold_; }

private:
    double alpha_;
    std::size_t budget_;
    std::size_t thinning_interval_;
    double log_threshold_;
};

enum class ProcessStatus { running, rejected_h0, budget_exhausted };

std::string_view to_string(ProcessStatus status);

struct EProcessState {
    double log_e = 0.0;
    std::size_t steps_consumed = 0;
    ProcessStatus status = ProcessStatus::running;
    std::optional<std::size_t> stop_index;
    // Index of the last consumed step; the next step must be exactly one past it.
    std::optional<std::size_t> last_index;
};

// ln S_k = sum_i (candidate_i - baseline_i).
// Throws InvariantError on length mismatch or empty rows, DataError naming the
// first non-finite entry.
double step_log_evalue(std::span<const double> candidate_loglik,
                       std::span<const double> baseline_loglik);

// Applies one step. Throws UsageError if the state is no longer running or the
// step index does not follow the previous one.
EProcessState accumulate(const EProcessState& state, const LogRatioStep& step,
                         const StoppingConfig& config);

struct TrajectoryPoint {
    std::size_t tested_index = 0;
    double log_e = 0.0;
};

// Result of running the stopping rule over one chain's ordered steps.
struct ChainOutcome {
    ProcessStatus status = ProcessStatus::budget_exhausted;
    std::optional<std::size_t> stop_index;
    std::size_t steps_consumed = 0;
    double final_log_e = 0.0;
    std::vector<TrajectoryPoint> trajectory;

    bool rejected() const noexcept { return status == ProcessStatus::rejected_h0; }
};

// Consumes steps in order until the first threshold crossing or until
// config.budget() steps (or the stream) run out. Steps after the crossing are
// never consumed. An empty stream is a degenerate chain: budget_exhausted with
// zero steps.
ChainOutcome run_chain(std::span<const LogRatioStep> steps, const StoppingConfig& config);

} // namespace evstop
