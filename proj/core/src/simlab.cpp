#include "evstop/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "evstop/error.hpp"

namespace evstop {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Stream ids; chains and replications use their own index below these.
constexpr std::uint64_t kDataStream = 0xD000000000000000ULL;
constexpr std::uint64_t kProposalStream = 0x1000000000000000ULL;
constexpr std::uint64_t kAcceptStream = 0x2000000000000000ULL;

std::vector<double> draw_points(const ScenarioSpec& spec, std::uint64_t which, std::size_t n) {
    const CounterRng rng(spec.seed, kDataStream + which);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = spec.gaussian.true_mean + spec.gaussian.noise_sd * rng.normal(i);
    }
    return out;
}

// Linear interpolation between order statistics (the usual "type 7" rule).
double quantile_sorted(std::span<const double> sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) {
        return sorted[lo];
    }
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed + kGamma) ^ mix64(stream + 2 * kGamma))) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const noexcept {
    return mix64(key_ + (counter + 1) * kGamma);
}

double CounterRng::uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t index) const noexcept {
    const double u1 = uniform(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string_view to_string(ScenarioKind kind) {
    switch (kind) {
    case ScenarioKind::exact_null: return "exact_null";
    case ScenarioKind::lognormal_alt: return "lognormal_alt";
    case ScenarioKind::gaussian_model: return "gaussian_model";
    }
    return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
    if (text == "exact_null") {
        return ScenarioKind::exact_null;
    }
    if (text == "lognormal_alt") {
        return ScenarioKind::lognormal_alt;
    }
    if (text == "gaussian_model") {
        return ScenarioKind::gaussian_model;
    }
    throw ConfigError(fmt::format("unknown scenario kind '{}'", text));
}

void ScenarioSpec::validate() const {
    if (!std::isfinite(sigma) || sigma < 0.0) {
        throw ConfigError("sigma must be finite and non-negative");
    }
    if (!std::isfinite(mu)) {
        throw ConfigError("mu must be finite");
    }
    if (m == 0 || chains == 0 || budget == 0) {
        throw ConfigError("m, chains and budget must all be positive");
    }
    if (kind == ScenarioKind::gaussian_model) {
        const auto& g = gaussian;
        if (g.n_train == 0 || !(g.noise_sd > 0.0) || !(g.prior_sd > 0.0) ||
            !(g.proposal_sd > 0.0) || g.steps_per_sample == 0 || !std::isfinite(g.init_offset)) {
            throw ConfigError("invalid gaussian model options");
        }
    }
}

std::vector<LogRatioStep> generate_log_ratio_stream(const ScenarioSpec& spec,
                                                    std::uint64_t chain) {
    const double mu = spec.kind == ScenarioKind::exact_null ? 0.0 : spec.mu;
    const double mean = mu - 0.5 * spec.sigma * spec.sigma;
    const CounterRng rng(spec.seed, chain);
    std::vector<LogRatioStep> steps(spec.budget);
    for (std::size_t t = 0; t < spec.budget; ++t) {
        // sigma == 0 skips the draw so the degenerate cases are exact.
        const double noise = spec.sigma == 0.0 ? 0.0 : spec.sigma * rng.normal(t);
        steps[t] = {t + 2, mean + noise};
    }
    return steps;
}

std::vector<LogLikTable> stream_tables(const ScenarioSpec& spec) {
    spec.validate();
    constexpr double kBaseLoglik = -1.0;
    std::vector<LogLikTable> tables;
    tables.reserve(spec.chains);
    for (std::size_t c = 0; c < spec.chains; ++c) {
        LogLikTable t;
        t.chain_id = fmt::format("chain{:03d}", c);
        t.m = spec.m;
        t.warmstart_row = std::vector<double>(spec.m, kBaseLoglik);
        const auto steps = generate_log_ratio_stream(spec, c);
        for (std::size_t j = 0; j < steps.size(); ++j) {
            const double per_point = steps[j].log_s / static_cast<double>(spec.m);
            t.sample_rows.emplace_back(spec.m, kBaseLoglik + per_point);
            t.original_indices.push_back(j + 1);
        }
        tables.push_back(std::move(t));
    }
    return tables;
}

double GaussianTask::posterior_precision() const {
    return 1.0 / (prior_sd * prior_sd) +
           static_cast<double>(train.size()) / (noise_sd * noise_sd);
}

double GaussianTask::posterior_mean() const {
    const double sum = std::accumulate(train.begin(), train.end(), 0.0);
    return sum / (noise_sd * noise_sd) / posterior_precision();
}

double GaussianTask::posterior_sd() const {
    return 1.0 / std::sqrt(posterior_precision());
}

double GaussianTask::log_posterior(double theta) const {
    double lp = -0.5 * theta * theta / (prior_sd * prior_sd);
    for (double y : train) {
        lp -= 0.5 * (y - theta) * (y - theta) / (noise_sd * noise_sd);
    }
    return lp;
}

std::vector<double> GaussianTask::loglik_row(double theta, std::span<const double> points) const {
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * noise_sd * noise_sd);
    std::vector<double> row(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double r = (points[i] - theta) / noise_sd;
        row[i] = norm - 0.5 * r * r;
    }
    return row;
}

GaussianTask make_gaussian_task(const ScenarioSpec& spec) {
    spec.validate();
    GaussianTask task;
    task.noise_sd = spec.gaussian.noise_sd;
    task.prior_sd = spec.gaussian.prior_sd;
    task.train = draw_points(spec, 0, spec.gaussian.n_train);
    task.validation = draw_points(spec, 1, spec.m);
    task.holdout = draw_points(spec, 2, spec.m);
    return task;
}

MetropolisTrace random_walk_metropolis(const GaussianTask& task, const ScenarioSpec& spec,
                                       std::uint64_t chain, double init, std::size_t steps) {
    const CounterRng proposals(spec.seed, kProposalStream + chain);
    const CounterRng accepts(spec.seed, kAcceptStream + chain);
    MetropolisTrace trace;
    trace.draws.reserve(steps);
    double theta = init;
    double lp = task.log_posterior(theta);
    for (std::size_t t = 0; t < steps; ++t) {
        const double candidate = theta + spec.gaussian.proposal_sd * proposals.normal(t);
        const double lp_candidate = task.log_posterior(candidate);
        ++trace.proposed;
        if (std::log(accepts.uniform(t)) < lp_candidate - lp) {
            theta = candidate;
            lp = lp_candidate;
            ++trace.accepted;
        }
        trace.draws.push_back(theta);
    }
    return trace;
}

GaussianModelRun gaussian_model_run(const ScenarioSpec& spec) {
    if (spec.kind != ScenarioKind::gaussian_model) {
        throw ConfigError("gaussian_model_run needs a gaussian_model scenario");
    }
    GaussianModelRun run;
    run.task = make_gaussian_task(spec);
    const auto& g = spec.gaussian;
    const double map = run.task.posterior_mean();
    const std::size_t steps = g.burn_in + spec.budget * g.steps_per_sample;

    for (std::size_t c = 0; c < spec.chains; ++c) {
        const auto trace = random_walk_metropolis(run.task, spec, c, map + g.init_offset, steps);
        run.acceptance_rates.push_back(trace.acceptance_rate());

        LogLikTable val;
        val.chain_id = fmt::format("chain{:03d}", c);
        val.m = spec.m;
        LogLikTable hold = val;
        val.warmstart_row = run.task.loglik_row(map, run.task.validation);
        hold.warmstart_row = run.task.loglik_row(map, run.task.holdout);
        for (std::size_t j = 0; j < spec.budget; ++j) {
            const double theta = trace.draws[g.burn_in + (j + 1) * g.steps_per_sample - 1];
            val.sample_rows.push_back(run.task.loglik_row(theta, run.task.validation));
            hold.sample_rows.push_back(run.task.loglik_row(theta, run.task.holdout));
            val.original_indices.push_back(j + 1);
            hold.original_indices.push_back(j + 1);
        }
        run.tables.push_back(std::move(val));
        run.holdout.push_back(std::move(hold));
    }
    return run;
}

ValidityResult simulate_streams(const ScenarioSpec& spec, double alpha,
                                std::size_t replications) {
    spec.validate();
    if (spec.kind == ScenarioKind::gaussian_model) {
        throw ConfigError("stream simulation needs exact_null or lognormal_alt");
    }
    if (replications == 0) {
        throw ConfigError("replications must be positive");
    }
    const StoppingConfig config(alpha, spec.budget);

    std::vector<std::size_t> checkpoints;
    for (std::size_t k : {std::size_t{5}, std::size_t{20}, std::min<std::size_t>(100, spec.budget)}) {
        if (k <= spec.budget &&
            std::find(checkpoints.begin(), checkpoints.end(), k) == checkpoints.end()) {
            checkpoints.push_back(k);
        }
    }
    std::vector<double> sum(checkpoints.size(), 0.0);
    std::vector<double> sum_sq(checkpoints.size(), 0.0);
    std::vector<double> stop_steps;
    std::vector<double> all_steps;
    all_steps.reserve(replications);

    ValidityResult r;
    r.alpha = alpha;
    r.replications = replications;
    for (std::size_t rep = 0; rep < replications; ++rep) {
        const auto steps = generate_log_ratio_stream(spec, rep);
        const auto outcome = run_chain(steps, config);
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            const std::size_t k = checkpoints[c];
            const double log_e = k <= outcome.trajectory.size()
                                     ? outcome.trajectory[k - 1].log_e
                                     : outcome.final_log_e;
            const double e = std::exp(log_e);
            sum[c] += e;
            sum_sq[c] += e * e;
        }
        if (outcome.rejected()) {
            ++r.rejections;
            stop_steps.push_back(static_cast<double>(outcome.steps_consumed));
            all_steps.push_back(static_cast<double>(outcome.steps_consumed));
        } else {
            all_steps.push_back(std::numeric_limits<double>::infinity());
        }
    }

    const double n = static_cast<double>(replications);
    r.rejection_rate = static_cast<double>(r.rejections) / n;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        const double mean = sum[c] / n;
        const double var = replications > 1 ? std::max(0.0, (sum_sq[c] - n * mean * mean) / (n - 1.0))
                                            : 0.0;
        r.checkpoints.push_back({checkpoints[c], mean, std::sqrt(var / n)});
    }
    if (!stop_steps.empty()) {
        std::sort(stop_steps.begin(), stop_steps.end());
        r.stopping_time_quartiles = std::array{quantile_sorted(stop_steps, 0.25),
                                               quantile_sorted(stop_steps, 0.5),
                                               quantile_sorted(stop_steps, 0.75)};
    }
    std::sort(all_steps.begin(), all_steps.end());
    const double median = quantile_sorted(all_steps, 0.5);
    if (std::isfinite(median)) {
        r.median_steps_to_reject = median;
    }
    return r;
}

ValidityResult certify_validity(const ScenarioSpec& spec, double alpha,
                                std::size_t replications) {
    if (spec.kind != ScenarioKind::exact_null) {
        throw ConfigError("certification runs under the exact null only");
    }
    if (replications < 500) {
        throw ConfigError("certification needs at least 500 replications");
    }
    return simulate_streams(spec, alpha, replications);
}

} // namespace evstop
