#pragma once

// File formats written by `evstop run` and read back by `evstop report`.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evstop/ensemble.hpp"
#include "evstop/simlab.hpp"

namespace evstop::cli {

struct DecisionFile {
    double alpha = 0.01;
    ReferenceMode mode = ReferenceMode::de_warmstart;
    std::vector<ChainDecision> decisions;
};

// One JSON object per chain; trajectories are not included (see trajectories.csv).
std::string decisions_to_jsonl(std::span<const ChainDecision> decisions, double alpha,
                               ReferenceMode mode);
// Throws DataError on malformed lines or inconsistent alpha/mode across lines.
DecisionFile parse_decisions(std::istream& in);

// chain_id,tested_index,log_e,threshold_log
std::string trajectories_csv(std::span<const ChainDecision> decisions, double log_threshold);

// Two-block table (Ensemble / Single chain) followed by per-chain detail.
std::string render_report_text(const EnsembleReport& report);
nlohmann::ordered_json report_to_json(const EnsembleReport& report);

nlohmann::ordered_json validity_to_json(const ScenarioSpec& spec, const ValidityResult& result);

// Rounded to one decimal, trailing ".0" dropped: 10.126 -> "10.1", 64 -> "64".
std::string format_compact(double value);
// "x10.1", or "-" when nothing was retained.
std::string format_compression(double factor, double samples);

// Writes via a temporary sibling and renames over the destination.
void write_atomically(const std::filesystem::path& path, std::string_view contents);

} // namespace evstop::cli
