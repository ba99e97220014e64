#include "evstop/diagnostics.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "evstop/error.hpp"
#include "evstop/logmath.hpp"

namespace evstop {

ThinningDiagnostics integrated_autocorrelation_time(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < kMinIacLength) {
        throw DegenerateInputError(
            fmt::format("autocorrelation needs at least {} points, got {}", kMinIacLength, n));
    }
    const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) {
        centered[i] = series[i] - mean;
    }
    const auto autocov = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) {
            acc += centered[i] * centered[i + lag];
        }
        return acc / static_cast<double>(n);
    };
    const double var = autocov(0);
    // Relative cutoff: a series of identical doubles can leave rounding residue.
    if (!(var > 1e-300) || var <= 1e-28 * mean * mean) {
        throw DegenerateInputError("series has zero variance");
    }

    // Pairs (rho(2k), rho(2k+1)) with rho(0) = 1; stop before the first
    // non-positive pair sum.
    double rho_sum = 0.0; // sum over t >= 1
    std::size_t window = 0;
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        const double even = k == 0 ? 1.0 : autocov(2 * k) / var;
        const double odd = autocov(2 * k + 1) / var;
        if (even + odd <= 0.0) {
            break;
        }
        rho_sum += (k == 0 ? 0.0 : even) + odd;
        window = 2 * k + 1;
    }

    ThinningDiagnostics out;
    out.iac_time = std::max(1.0, 1.0 + 2.0 * rho_sum);
    out.recommended_interval = static_cast<std::size_t>(std::ceil(out.iac_time));
    out.window_used = std::max<std::size_t>(window, 1);
    return out;
}

std::vector<double> row_sum_series(const LogLikTable& table, std::size_t limit) {
    const std::size_t count = std::min(limit, table.sample_rows.size());
    std::vector<double> sums;
    sums.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        const auto& row = table.sample_rows[j];
        sums.push_back(std::accumulate(row.begin(), row.end(), 0.0));
    }
    return sums;
}

LogLikTable apply_thinning(const LogLikTable& table, std::size_t interval,
                           std::size_t first_tested_index) {
    if (interval == 0) {
        throw ConfigError("thinning interval must be at least 1");
    }
    LogLikTable out;
    out.chain_id = table.chain_id;
    out.warmstart_row = table.warmstart_row;
    out.m = table.m;
    const std::size_t start = std::max<std::size_t>(first_tested_index, 1);
    for (std::size_t index = 1; index <= table.sample_rows.size(); ++index) {
        const bool keep = index < start || (index - start) % interval == 0;
        if (keep) {
            out.sample_rows.push_back(table.sample_rows[index - 1]);
            out.original_indices.push_back(table.original_indices.empty()
                                               ? index
                                               : table.original_indices[index - 1]);
        }
    }
    return out;
}

JensenGapReport jensen_gap(std::span<const RowView> member_rows) {
    if (member_rows.empty()) {
        throw InvariantError("jensen_gap needs at least one member");
    }
    const std::size_t m = member_rows.front().size();
    if (m == 0) {
        throw InvariantError("member rows must have at least one point");
    }
    for (const auto& row : member_rows) {
        if (row.size() != m) {
            throw InvariantError(
                fmt::format("member rows disagree on length ({} vs {})", row.size(), m));
        }
    }
    const std::size_t k = member_rows.size();
    std::vector<double> column(k);
    double lppd_total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            column[j] = member_rows[j][i];
        }
        lppd_total += log_mean_exp(column);
    }
    double member_total = 0.0;
    for (const auto& row : member_rows) {
        member_total += std::accumulate(row.begin(), row.end(), 0.0);
    }

    JensenGapReport out;
    out.ensemble_lppd = lppd_total / static_cast<double>(m);
    out.mean_member_loglik = member_total / static_cast<double>(k * m);
    out.gap = out.ensemble_lppd - out.mean_member_loglik;
    return out;
}

JensenGapReport jensen_gap(const std::vector<std::vector<double>>& member_rows) {
    std::vector<RowView> views(member_rows.begin(), member_rows.end());
    return jensen_gap(std::span<const RowView>(views));
}

} // namespace evstop
