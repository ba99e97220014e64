#pragma once

// Effective-independence tooling for the sample stream and the Jensen check
// that links mean member log-likelihood to ensemble LPPD.

#include <cstddef>
#include <span>
#include <vector>

#include "evstop/ingest.hpp"

namespace evstop {

using RowView = std::span<const double>;

struct ThinningDiagnostics {
    double iac_time = 1.0;
    std::size_t recommended_interval = 1;
    std::size_t window_used = 1;
};

inline constexpr std::size_t kMinIacLength = 8;

// tau = 1 + 2 * sum_{t=1}^{T} rho(t) using the length-normalised sample
// autocorrelation. T follows Geyer's initial positive sequence: pair sums
// rho(2k) + rho(2k+1) are added while positive. Clamped below at 1.
// Throws DegenerateInputError for series shorter than 8 or with zero variance.
ThinningDiagnostics integrated_autocorrelation_time(std::span<const double> series);

// Row-sum validation log-likelihood of each posterior sample, in order,
// truncated to the first `limit` samples.
std::vector<double> row_sum_series(const LogLikTable& table,
                                   std::size_t limit = static_cast<std::size_t>(-1));

// Keeps rows below first_tested_index untouched (the reference sample in
// first_sample mode), then rows first_tested_index, +interval, +2*interval...
// Rows are renumbered contiguously; original_indices keeps the mapping back.
// Throws ConfigError if interval is 0.
LogLikTable apply_thinning(const LogLikTable& table, std::size_t interval,
                           std::size_t first_tested_index = 1);

struct JensenGapReport {
    double ensemble_lppd = 0.0;      // per point: (1/m) sum_i log mean_k p_k(i)
    double mean_member_loglik = 0.0; // per point: (1/K) sum_k (1/m) sum_i log p_k(i)
    double gap = 0.0;                // ensemble_lppd - mean_member_loglik, >= 0
};

// Throws InvariantError on an empty member set or inconsistent row lengths.
JensenGapReport jensen_gap(std::span<const RowView> member_rows);
JensenGapReport jensen_gap(const std::vector<std::vector<double>>& member_rows);

} // namespace evstop
