#include "evstop/ensemble.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "evstop/error.hpp"
#include "evstop/logmath.hpp"

namespace evstop {

namespace {

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) {
        return out;
    }
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - out.mean) * (v - out.mean);
        }
        out.stddev = std::sqrt(ss / (n - 1.0));
    }
    return out;
}

std::map<std::string, const LogLikTable*> index_tables(std::span<const LogLikTable> tables,
                                                       std::string_view what) {
    std::map<std::string, const LogLikTable*> out;
    for (const auto& t : tables) {
        if (!out.emplace(t.chain_id, &t).second) {
            throw DataError(fmt::format("chain '{}' appears twice in the {}", t.chain_id, what));
        }
    }
    return out;
}

const LogLikTable& find_table(const std::map<std::string, const LogLikTable*>& tables,
                              const std::string& chain, std::string_view what) {
    const auto it = tables.find(chain);
    if (it == tables.end()) {
        throw DataError(fmt::format("chain '{}' is missing from the {}", chain, what));
    }
    return *it->second;
}

std::size_t original_index(const LogLikTable& table, std::size_t index) {
    return table.original_indices.empty() ? index : table.original_indices.at(index - 1);
}

} // namespace

std::vector<LogRatioStep> tested_steps(const LogLikTable& table, ReferenceMode mode) {
    const auto ref = select_reference(table, mode);
    std::vector<LogRatioStep> steps;
    for (std::size_t k = ref.first_tested_index; k <= table.sample_count(); ++k) {
        steps.push_back({k, step_log_evalue(table.sample(k), ref.baseline)});
    }
    return steps;
}

ChainDecision decide_chain(const LogLikTable& table, ReferenceMode mode,
                           const StoppingConfig& config) {
    const auto first_tested = select_reference(table, mode).first_tested_index;
    const auto thinned = apply_thinning(table, config.thinning_interval(), first_tested);
    const auto steps = tested_steps(thinned, mode);
    const auto outcome = run_chain(steps, config);

    ChainDecision d;
    d.chain_id = table.chain_id;
    d.verdict = outcome.status;
    d.tested_steps = outcome.steps_consumed;
    d.final_log_e = outcome.final_log_e;
    d.thinning_interval = config.thinning_interval();
    d.trajectory.reserve(outcome.trajectory.size());
    for (const auto& p : outcome.trajectory) {
        d.trajectory.push_back({original_index(thinned, p.tested_index), p.log_e});
    }
    if (outcome.stop_index) {
        d.stop_index = original_index(thinned, *outcome.stop_index);
        for (std::size_t k = 1; k <= *outcome.stop_index; ++k) {
            d.retained_sample_indices.push_back(original_index(thinned, k));
        }
    }
    return d;
}

std::vector<ChainMembership> assemble_minimal_bde(std::span<const ChainDecision> decisions,
                                                  std::span<const LogLikTable> tables,
                                                  ReferenceMode mode) {
    if (decisions.size() != tables.size()) {
        throw DataError(fmt::format("{} decisions for {} chains", decisions.size(),
                                    tables.size()));
    }
    const auto by_chain = index_tables(tables, "test records");
    std::vector<ChainMembership> out;
    out.reserve(decisions.size());
    for (const auto& d : decisions) {
        const auto& table = find_table(by_chain, d.chain_id, "test records");
        const bool rejected = d.verdict == ProcessStatus::rejected_h0;
        if (rejected != d.stop_index.has_value()) {
            throw DataError(fmt::format("chain '{}': verdict and stop index disagree", d.chain_id));
        }
        if (!rejected && !d.retained_sample_indices.empty()) {
            throw DataError(fmt::format(
                "chain '{}': a chain that exhausted its budget cannot retain samples", d.chain_id));
        }
        for (auto idx : d.retained_sample_indices) {
            if (idx == 0 || idx > table.sample_count()) {
                throw DataError(fmt::format("chain '{}': retained sample {} does not exist",
                                            d.chain_id, idx));
            }
        }
        select_reference(table, mode); // mode requirements

        ChainMembership cm;
        cm.chain_id = d.chain_id;
        cm.retained_samples = d.retained_sample_indices.size();
        if (mode == ReferenceMode::de_warmstart) {
            cm.members.push_back({true, 0});
        } else if (!rejected) {
            cm.members.push_back({false, 1});
        }
        for (auto idx : d.retained_sample_indices) {
            cm.members.push_back({false, idx});
        }
        out.push_back(std::move(cm));
    }
    return out;
}

double lppd(std::span<const RowView> member_rows) {
    if (member_rows.empty()) {
        throw InvariantError("lppd of an empty membership");
    }
    const std::size_t m = member_rows.front().size();
    if (m == 0) {
        throw InvariantError("lppd needs at least one point");
    }
    std::vector<double> column(member_rows.size());
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < member_rows.size(); ++k) {
            if (member_rows[k].size() != m) {
                throw InvariantError("member rows disagree on length");
            }
            column[k] = member_rows[k][i];
        }
        total += log_mean_exp(column);
    }
    return total / static_cast<double>(m);
}

double lppd(const std::vector<std::vector<double>>& member_rows) {
    std::vector<RowView> views(member_rows.begin(), member_rows.end());
    return lppd(std::span<const RowView>(views));
}

std::vector<RowView> member_rows(const LogLikTable& table, std::span<const Member> members) {
    std::vector<RowView> rows;
    rows.reserve(members.size());
    for (const auto& mem : members) {
        if (mem.warmstart) {
            if (!table.warmstart_row) {
                throw DataError(fmt::format("chain '{}' has no warmstart row to evaluate",
                                            table.chain_id));
            }
            rows.emplace_back(*table.warmstart_row);
        } else {
            if (mem.sample_index == 0 || mem.sample_index > table.sample_count()) {
                throw DataError(fmt::format("chain '{}' has no sample {} to evaluate",
                                            table.chain_id, mem.sample_index));
            }
            rows.push_back(table.sample(mem.sample_index));
        }
    }
    return rows;
}

double compression_factor(std::size_t full_budget, std::size_t samples_used) {
    return static_cast<double>(full_budget) /
           static_cast<double>(std::max<std::size_t>(samples_used, 1));
}

EnsembleReport compression_report(std::span<const ChainDecision> decisions,
                                  std::span<const LogLikTable> test_tables,
                                  std::span<const LogLikTable> eval_tables, double alpha,
                                  ReferenceMode mode, bool in_sample) {
    const auto memberships = assemble_minimal_bde(decisions, test_tables, mode);
    const auto tests = index_tables(test_tables, "test records");
    const auto evals = index_tables(eval_tables, "evaluation records");

    EnsembleReport r;
    r.mode = mode;
    r.alpha = alpha;
    r.chains = memberships.size();
    r.in_sample = in_sample;
    if (memberships.empty()) {
        throw DataError("no chains to report on");
    }

    std::vector<RowView> pooled;
    std::vector<double> chain_lppds;
    std::vector<RowView> de_pooled;
    std::vector<double> de_lppds;
    bool have_de = true;
    std::vector<RowView> full_pooled;
    std::vector<double> full_lppds;

    for (std::size_t c = 0; c < memberships.size(); ++c) {
        const auto& cm = memberships[c];
        const auto& d = decisions[c];
        const auto& test = find_table(tests, cm.chain_id, "test records");
        const auto& eval = find_table(evals, cm.chain_id, "evaluation records");

        const auto rows = member_rows(eval, cm.members);
        pooled.insert(pooled.end(), rows.begin(), rows.end());
        const double chain_lppd = lppd(rows);
        chain_lppds.push_back(chain_lppd);

        r.total_samples_used += cm.retained_samples;
        r.total_members += cm.members.size();
        r.full_budget += test.sample_count();

        ChainSummary s;
        s.chain_id = cm.chain_id;
        s.verdict = d.verdict;
        s.stop_index = d.stop_index;
        s.retained_samples = cm.retained_samples;
        s.members = cm.members.size();
        s.available_samples = test.sample_count();
        s.lppd = chain_lppd;
        r.per_chain.push_back(std::move(s));

        if (eval.warmstart_row) {
            de_pooled.emplace_back(*eval.warmstart_row);
            de_lppds.push_back(lppd(std::span<const RowView>(&de_pooled.back(), 1)));
        } else {
            have_de = false;
        }
        std::vector<RowView> all;
        for (const auto& row : eval.sample_rows) {
            all.emplace_back(row);
        }
        if (!all.empty()) {
            full_pooled.insert(full_pooled.end(), all.begin(), all.end());
            full_lppds.push_back(lppd(all));
        }
    }

    r.points = pooled.front().size();
    r.ensemble_lppd = lppd(pooled);
    r.ensemble_lppd_total = r.ensemble_lppd * static_cast<double>(r.points);
    const auto chain_stats = mean_std(chain_lppds);
    r.mean_chain_lppd = chain_stats.mean;
    r.mean_chain_lppd_std = chain_stats.stddev;
    r.average_samples_per_chain =
        static_cast<double>(r.total_samples_used) / static_cast<double>(r.chains);
    r.compression_factor = compression_factor(r.full_budget, r.total_samples_used);

    r.jensen = jensen_gap(std::span<const RowView>(pooled));
    if (r.jensen.gap < -1e-9) {
        throw InvariantError(fmt::format("ensemble LPPD {} fell below the mean member "
                                         "log-likelihood {}",
                                         r.jensen.ensemble_lppd, r.jensen.mean_member_loglik));
    }

    if (have_de) {
        const auto stats = mean_std(de_lppds);
        r.deep_ensemble = ComparisonRow{lppd(de_pooled), stats.mean, stats.stddev, r.chains};
    }
    if (!full_pooled.empty()) {
        const auto stats = mean_std(full_lppds);
        r.full = ComparisonRow{lppd(full_pooled), stats.mean, stats.stddev, r.full_budget};
    }
    return r;
}

} // namespace evstop
