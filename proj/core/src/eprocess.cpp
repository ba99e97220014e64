#include "evstop/eprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evstop/error.hpp"

namespace evstop {

StoppingConfig::StoppingConfig(double alpha, std::size_t budget, std::size_t thinning_interval)
    : alpha_(alpha), budget_(budget), thinning_interval_(thinning_interval) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
    if (budget == 0) {
        throw ConfigError("budget must be at least 1");
    }
    if (thinning_interval == 0) {
        throw ConfigError("thinning interval must be at least 1");
    }
    log_threshold_ = -std::log(alpha);
}

std::string_view to_string(ProcessStatus status) {
    switch (status) {
    case ProcessStatus::running: return "running";
    case ProcessStatus::rejected_h0: return "rejected_h0";
    case ProcessStatus::budget_exhausted: return "budget_exhausted";
    }
    return "unknown";
}

double step_log_evalue(std::span<const double> candidate_loglik,
                       std::span<const double> baseline_loglik) {
    if (candidate_loglik.size() != baseline_loglik.size()) {
        throw InvariantError("candidate row has " + std::to_string(candidate_loglik.size()) +
                             " points, baseline row has " +
                             std::to_string(baseline_loglik.size()));
    }
    if (candidate_loglik.empty()) {
        throw InvariantError("log-likelihood rows must have at least one point");
    }
    double log_s = 0.0;
    for (std::size_t i = 0; i < candidate_loglik.size(); ++i) {
        const double c = candidate_loglik[i];
        const double b = baseline_loglik[i];
        if (!std::isfinite(c)) {
            throw DataError("candidate log-likelihood at point " + std::to_string(i) +
                            " is not finite");
        }
        if (!std::isfinite(b)) {
            throw DataError("baseline log-likelihood at point " + std::to_string(i) +
                            " is not finite");
        }
        log_s += c - b;
    }
    return log_s;
}

EProcessState accumulate(const EProcessState& state, const LogRatioStep& step,
                         const StoppingConfig& config) {
    if (state.status != ProcessStatus::running) {
        throw UsageError("accumulate called on a finished E-process (" +
                         std::string(to_string(state.status)) + ")");
    }
    if (state.last_index && step.sample_index != *state.last_index + 1) {
        throw UsageError("expected tested index " + std::to_string(*state.last_index + 1) +
                         ", got " + std::to_string(step.sample_index));
    }
    if (!std::isfinite(step.log_s)) {
        throw DataError("log ratio at sample " + std::to_string(step.sample_index) +
                        " is not finite");
    }

    EProcessState next = state;
    next.log_e += step.log_s;
    next.steps_consumed += 1;
    next.last_index = step.sample_index;
    if (next.log_e >= config.log_threshold()) {
        next.status = ProcessStatus::rejected_h0;
        next.stop_index = step.sample_index;
    } else if (next.steps_consumed >= config.budget()) {
        next.status = ProcessStatus::budget_exhausted;
    }
    return next;
}

ChainOutcome run_chain(std::span<const LogRatioStep> steps, const StoppingConfig& config) {
    ChainOutcome out;
    EProcessState state;
    out.trajectory.reserve(std::min(steps.size(), config.budget()));
    for (const auto& step : steps) {
        state = accumulate(state, step, config);
        out.trajectory.push_back({step.sample_index, state.log_e});
        if (state.status != ProcessStatus::running) {
            break;
        }
    }
    // Stream ran dry before the budget: same verdict as exhausting it.
    out.status = state.status == ProcessStatus::running ? ProcessStatus::budget_exhausted
                                                        : state.status;
    out.stop_index = state.stop_index;
    out.steps_consumed = state.steps_consumed;
    out.final_log_e = state.log_e;
    return out;
}

} // namespace evstop
