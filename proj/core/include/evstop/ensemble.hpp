#pragma once

// Minimal-ensemble assembly and hold-out evaluation.
//
// Each chain is tested against its reference; a chain that rejects keeps its
// prefix of samples up to the stopping index, a chain that exhausts its budget
// falls back to the reference member alone. LPPD is reported per point.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evstop/diagnostics.hpp"
#include "evstop/eprocess.hpp"
#include "evstop/ingest.hpp"

namespace evstop {

// Sample indices in a decision are the chain's original (pre-thinning) indices.
struct ChainDecision {
    std::string chain_id;
    ProcessStatus verdict = ProcessStatus::budget_exhausted;
    std::optional<std::size_t> stop_index;
    std::vector<std::size_t> retained_sample_indices;
    std::vector<TrajectoryPoint> trajectory;
    std::size_t tested_steps = 0;
    double final_log_e = 0.0;
    std::size_t thinning_interval = 1;
};

// ln S_k of every tested row against the mode's reference, in order.
std::vector<LogRatioStep> tested_steps(const LogLikTable& table, ReferenceMode mode);

// Thins with config.thinning_interval (the reference row is never dropped),
// runs the E-process and maps indices back to the original numbering.
ChainDecision decide_chain(const LogLikTable& table, ReferenceMode mode,
                           const StoppingConfig& config);

struct Member {
    bool warmstart = false;
    std::size_t sample_index = 0; // original index, unused for the warmstart

    friend bool operator==(const Member&, const Member&) = default;
};

struct ChainMembership {
    std::string chain_id;
    std::vector<Member> members;
    std::size_t retained_samples = 0;
};

// Baseline member plus the retained prefix for rejecting chains; the baseline
// member alone for chains that exhausted their budget. Throws DataError when
// decisions and tables do not line up one-to-one by chain id.
std::vector<ChainMembership> assemble_minimal_bde(std::span<const ChainDecision> decisions,
                                                  std::span<const LogLikTable> tables,
                                                  ReferenceMode mode);

// (1/m) sum_i log((1/K) sum_k exp(loglik_k(i))). Throws InvariantError on an
// empty membership or ragged rows.
double lppd(std::span<const RowView> member_rows);
double lppd(const std::vector<std::vector<double>>& member_rows);

// Rows of `members` looked up in an unthinned table.
std::vector<RowView> member_rows(const LogLikTable& table, std::span<const Member> members);

struct ChainSummary {
    std::string chain_id;
    ProcessStatus verdict = ProcessStatus::budget_exhausted;
    std::optional<std::size_t> stop_index;
    std::size_t retained_samples = 0;
    std::size_t members = 0;
    std::size_t available_samples = 0;
    double lppd = 0.0;
};

// LPPD of a fixed membership rule (DE only, full chains) in both table blocks.
struct ComparisonRow {
    double ensemble_lppd = 0.0;
    double mean_chain_lppd = 0.0;
    double mean_chain_lppd_std = 0.0;
    std::size_t total_samples = 0;
};

struct EnsembleReport {
    ReferenceMode mode = ReferenceMode::first_sample;
    double alpha = 0.01;
    std::size_t chains = 0;
    std::size_t points = 0; // m of the evaluation records

    double ensemble_lppd = 0.0;       // per point
    double ensemble_lppd_total = 0.0; // summed over points
    double mean_chain_lppd = 0.0;
    double mean_chain_lppd_std = 0.0; // sample standard deviation across chains

    std::size_t total_samples_used = 0; // retained posterior samples
    std::size_t total_members = 0;      // retained samples plus reference members
    double average_samples_per_chain = 0.0;
    std::size_t full_budget = 0; // posterior samples available across chains
    double compression_factor = 0.0;

    JensenGapReport jensen;
    std::optional<ComparisonRow> deep_ensemble; // present when warmstarts exist
    ComparisonRow full;
    bool in_sample = false; // evaluated on the records used for testing
    std::vector<ChainSummary> per_chain;
};

// full_budget / max(used, 1).
double compression_factor(std::size_t full_budget, std::size_t samples_used);

// `test_tables` define availability and full_budget; `eval_tables` (hold-out)
// supply the rows scored. Pass the same tables for both to score in-sample.
// Throws DataError on chain mismatches and InvariantError if the Jensen bound
// fails on the assembled ensemble.
EnsembleReport compression_report(std::span<const ChainDecision> decisions,
                                  std::span<const LogLikTable> test_tables,
                                  std::span<const LogLikTable> eval_tables, double alpha,
                                  ReferenceMode mode, bool in_sample);

} // namespace evstop
