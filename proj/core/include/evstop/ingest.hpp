#pragma once

// Per-sample validation log-likelihood records and per-chain tables.
//
// Input is line-delimited, one record per line, in either of two layouts
// (auto-detected from the first non-blank character of the stream):
//
//   {"chain":"c0","kind":"warmstart","index":0,"loglik":[-0.51,-1.2]}
//   c0,sample,1,-0.48,-1.31
//
// Index 0 is reserved for the warmstart; posterior samples are numbered from 1.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evstop {

enum class RecordKind { warmstart, posterior_sample };

struct LogLikRecord {
    std::string chain_id;
    RecordKind kind = RecordKind::posterior_sample;
    std::size_t sample_index = 0;
    std::vector<double> loglik;
    std::size_t line = 0; // 1-based source line, 0 when built in memory
};

inline constexpr double kDefaultClampFloor = -30.0;

struct IngestOptions {
    // When set, a per-point log-likelihood of -inf is replaced by this value
    // (with a warning) instead of failing the parse.
    std::optional<double> clamp_floor;
};

struct ParseResult {
    std::vector<LogLikRecord> records;
    std::vector<std::string> warnings;
};

enum class RecordFormat { jsonl, csv };

// Throws ParseError carrying the line number for malformed lines, duplicate
// (chain, index) pairs, inconsistent point counts and non-finite values.
ParseResult parse_records(std::istream& in, const IngestOptions& options = {});
ParseResult parse_records(std::string_view text, const IngestOptions& options = {});

// Immutable once built. sample_rows[j] holds the sample numbered j + 1.
struct LogLikTable {
    std::string chain_id;
    std::optional<std::vector<double>> warmstart_row;
    std::vector<std::vector<double>> sample_rows;
    // Index each row carried in the source records; differs from j + 1 only
    // after thinning.
    std::vector<std::size_t> original_indices;
    std::size_t m = 0;

    std::size_t sample_count() const noexcept { return sample_rows.size(); }

    // 1-based access by current (possibly renumbered) index.
    std::span<const double> sample(std::size_t index) const;

    friend bool operator==(const LogLikTable&, const LogLikTable&) = default;
};

// One table per chain in order of first appearance. Throws DataError on index
// gaps, duplicates, or mixed point counts.
std::vector<LogLikTable> build_tables(std::span<const LogLikRecord> records);

void write_records(std::ostream& out, const LogLikTable& table,
                   RecordFormat format = RecordFormat::jsonl);
std::string to_records(std::span<const LogLikTable> tables,
                       RecordFormat format = RecordFormat::jsonl);

enum class ReferenceMode { de_warmstart, first_sample };

std::string_view to_string(ReferenceMode mode);
// Accepts "de_warmstart"/"de" and "first_sample"/"sample". Throws ConfigError.
ReferenceMode parse_reference_mode(std::string_view text);

struct Reference {
    std::span<const double> baseline;
    std::size_t first_tested_index = 1;
};

// de_warmstart: baseline is the warmstart and every sample from 1 is tested.
// first_sample: baseline is sample 1 and testing begins at 2.
// Throws ConfigError when the required row is missing.
Reference select_reference(const LogLikTable& table, ReferenceMode mode);

} // namespace evstop
