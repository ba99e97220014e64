#include "report_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include <fmt/format.h>

#include "evstop/error.hpp"

namespace evstop::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json optional_index(const std::optional<std::size_t>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string method_label(const EnsembleReport& r) {
    return fmt::format("alpha={} ({} ref.)", r.alpha,
                       r.mode == ReferenceMode::de_warmstart ? "DE" : "Sample");
}

ProcessStatus parse_verdict(const std::string& s, std::size_t line) {
    if (s == "rejected_h0") {
        return ProcessStatus::rejected_h0;
    }
    if (s == "budget_exhausted") {
        return ProcessStatus::budget_exhausted;
    }
    throw ParseError(line, fmt::format("unknown verdict '{}'", s));
}

template <typename... Args>
void append_line(std::string& out, fmt::format_string<Args...> f, Args&&... args) {
    out += fmt::format(f, std::forward<Args>(args)...);
    out += '\n';
}

} // namespace

std::string format_compact(double value) {
    auto s = fmt::format("{:.1f}", value);
    if (s.size() > 2 && s.ends_with(".0")) {
        s.resize(s.size() - 2);
    }
    if (s == "-0") {
        s = "0";
    }
    return s;
}

std::string format_compression(double factor, double samples) {
    if (samples <= 0.0) {
        return "-";
    }
    return "x" + format_compact(factor);
}

std::string decisions_to_jsonl(std::span<const ChainDecision> decisions, double alpha,
                               ReferenceMode mode) {
    std::string out;
    for (const auto& d : decisions) {
        ordered_json doc;
        doc["chain"] = d.chain_id;
        doc["mode"] = to_string(mode);
        doc["alpha"] = alpha;
        doc["verdict"] = to_string(d.verdict);
        doc["stop_index"] = optional_index(d.stop_index);
        doc["retained"] = d.retained_sample_indices;
        doc["tested_steps"] = d.tested_steps;
        doc["final_log_e"] = d.final_log_e;
        doc["thinning_interval"] = d.thinning_interval;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

DecisionFile parse_decisions(std::istream& in) {
    DecisionFile file;
    std::string raw;
    std::size_t line = 0;
    bool first = true;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json doc;
        try {
            doc = json::parse(raw);
            ChainDecision d;
            d.chain_id = doc.at("chain").get<std::string>();
            const auto mode = parse_reference_mode(doc.at("mode").get<std::string>());
            const double alpha = doc.at("alpha").get<double>();
            d.verdict = parse_verdict(doc.at("verdict").get<std::string>(), line);
            if (!doc.at("stop_index").is_null()) {
                d.stop_index = doc.at("stop_index").get<std::size_t>();
            }
            d.retained_sample_indices = doc.at("retained").get<std::vector<std::size_t>>();
            d.tested_steps = doc.value("tested_steps", std::size_t{0});
            d.final_log_e = doc.value("final_log_e", 0.0);
            d.thinning_interval = doc.value("thinning_interval", std::size_t{1});
            if (first) {
                file.alpha = alpha;
                file.mode = mode;
                first = false;
            } else if (alpha != file.alpha || mode != file.mode) {
                throw ParseError(line, "alpha and mode must agree across all decisions");
            }
            file.decisions.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw ParseError(line, fmt::format("malformed decision record: {}", e.what()));
        } catch (const ConfigError& e) {
            throw ParseError(line, e.what());
        }
    }
    if (file.decisions.empty()) {
        throw DataError("decision file holds no records");
    }
    return file;
}

std::string trajectories_csv(std::span<const ChainDecision> decisions, double log_threshold) {
    std::string out = "chain_id,tested_index,log_e,threshold_log\n";
    for (const auto& d : decisions) {
        for (const auto& p : d.trajectory) {
            out += fmt::format("{},{},{},{}\n", d.chain_id, p.tested_index, p.log_e,
                               log_threshold);
        }
    }
    return out;
}

std::string render_report_text(const EnsembleReport& r) {
    std::string out;
    const double per_chain_full =
        static_cast<double>(r.full_budget) / static_cast<double>(r.chains);
    const std::string label = method_label(r);

    append_line(out, "E-value minimal ensemble report");
    append_line(out, "reference: {}   alpha: {}   threshold: log E >= {:.5f}", to_string(r.mode), r.alpha,
         -std::log(r.alpha));
    append_line(out, "chains: {}   evaluation points: {}   full budget: {} samples", r.chains, r.points,
         r.full_budget);
    if (r.in_sample) {
        append_line(out, "caveat: LPPD evaluated on the records used by the test (in-sample for the test)");
    }
    append_line(out, "");

    append_line(out, "{:<28}{:>10}{:>10}{:>10}", "Ensemble", "LPPD", "Samples", "Compr.");
    if (r.deep_ensemble) {
        const auto& de = *r.deep_ensemble;
        append_line(out, "{:<28}{:>10.4f}{:>10}{:>10}", "DE", de.ensemble_lppd, de.total_samples,
             format_compression(per_chain_full, 1.0));
    }
    append_line(out, "{:<28}{:>10.4f}{:>10}{:>10}", label, r.ensemble_lppd, r.total_samples_used,
         format_compression(r.compression_factor, static_cast<double>(r.total_samples_used)));
    append_line(out, "{:<28}{:>10.4f}{:>10}{:>10}", "Full", r.full.ensemble_lppd, r.full.total_samples,
         "x1");
    append_line(out, "");

    append_line(out, "{:<28}{:>10}{:>10}{:>10}{:>10}", "Single chain (mean)", "LPPD", "Std", "Samples",
         "Compr.");
    if (r.deep_ensemble) {
        const auto& de = *r.deep_ensemble;
        append_line(out, "{:<28}{:>10.4f}{:>10.4f}{:>10}{:>10}", "DE member", de.mean_chain_lppd,
             de.mean_chain_lppd_std, 1, format_compression(per_chain_full, 1.0));
    }
    append_line(out, "{:<28}{:>10.4f}{:>10.4f}{:>10}{:>10}", label, r.mean_chain_lppd,
         r.mean_chain_lppd_std, format_compact(r.average_samples_per_chain),
         format_compression(r.compression_factor, r.average_samples_per_chain));
    append_line(out, "{:<28}{:>10.4f}{:>10.4f}{:>10}{:>10}", "Full chain", r.full.mean_chain_lppd,
         r.full.mean_chain_lppd_std, format_compact(per_chain_full), "x1");
    append_line(out, "");

    append_line(out, "members: {} ({} retained samples, {} reference members)", r.total_members,
         r.total_samples_used, r.total_members - r.total_samples_used);
    append_line(out, "ensemble LPPD total: {:.4f}", r.ensemble_lppd_total);
    // Rounding residue below the tolerance would otherwise print as -0.0000.
    append_line(out, "jensen gap: {:.4f} (ensemble {:.4f} vs mean member {:.4f})",
                std::max(r.jensen.gap, 0.0),
         r.jensen.ensemble_lppd, r.jensen.mean_member_loglik);
    append_line(out, "");

    append_line(out, "{:<16}{:>18}{:>8}{:>10}{:>9}{:>10}", "chain", "verdict", "stop", "retained",
         "members", "LPPD");
    for (const auto& c : r.per_chain) {
        append_line(out, "{:<16}{:>18}{:>8}{:>10}{:>9}{:>10.4f}", c.chain_id, to_string(c.verdict),
             c.stop_index ? std::to_string(*c.stop_index) : std::string("-"),
             c.retained_samples, c.members, c.lppd);
    }
    return out;
}

ordered_json report_to_json(const EnsembleReport& r) {
    const auto row = [](const ComparisonRow& c) {
        ordered_json j;
        j["ensemble_lppd"] = c.ensemble_lppd;
        j["mean_chain_lppd"] = c.mean_chain_lppd;
        j["mean_chain_lppd_std"] = c.mean_chain_lppd_std;
        j["samples"] = c.total_samples;
        return j;
    };
    ordered_json doc;
    doc["mode"] = to_string(r.mode);
    doc["alpha"] = r.alpha;
    doc["log_threshold"] = -std::log(r.alpha);
    doc["chains"] = r.chains;
    doc["points"] = r.points;
    doc["in_sample"] = r.in_sample;
    doc["ensemble_lppd"] = r.ensemble_lppd;
    doc["ensemble_lppd_total"] = r.ensemble_lppd_total;
    doc["mean_chain_lppd"] = r.mean_chain_lppd;
    doc["mean_chain_lppd_std"] = r.mean_chain_lppd_std;
    doc["total_samples_used"] = r.total_samples_used;
    doc["total_members"] = r.total_members;
    doc["average_samples_per_chain"] = r.average_samples_per_chain;
    doc["full_budget"] = r.full_budget;
    doc["compression_factor"] = r.compression_factor;
    doc["jensen"] = {{"ensemble_lppd", r.jensen.ensemble_lppd},
                     {"mean_member_loglik", r.jensen.mean_member_loglik},
                     {"gap", r.jensen.gap}};
    doc["deep_ensemble"] = r.deep_ensemble ? row(*r.deep_ensemble) : ordered_json(nullptr);
    doc["full"] = row(r.full);
    auto chains = ordered_json::array();
    for (const auto& c : r.per_chain) {
        ordered_json j;
        j["chain"] = c.chain_id;
        j["verdict"] = to_string(c.verdict);
        j["stop_index"] = optional_index(c.stop_index);
        j["retained_samples"] = c.retained_samples;
        j["members"] = c.members;
        j["available_samples"] = c.available_samples;
        j["lppd"] = c.lppd;
        chains.push_back(std::move(j));
    }
    doc["per_chain"] = std::move(chains);
    return doc;
}

ordered_json validity_to_json(const ScenarioSpec& spec, const ValidityResult& v) {
    ordered_json doc;
    doc["experiment"] = spec.kind == ScenarioKind::exact_null
                            ? "type_i_certification"
                            : "power_simulation";
    doc["note"] = spec.kind == ScenarioKind::exact_null
                      ? "null calibration of the stopping rule on synthetic streams"
                      : "synthetic power simulation";
    doc["scenario"] = {{"kind", to_string(spec.kind)}, {"mu", spec.mu},
                       {"sigma", spec.sigma},          {"budget", spec.budget},
                       {"seed", spec.seed}};
    doc["alpha"] = v.alpha;
    doc["log_threshold"] = -std::log(v.alpha);
    doc["replications"] = v.replications;
    doc["rejections"] = v.rejections;
    doc["rejection_rate"] = v.rejection_rate;
    auto cps = ordered_json::array();
    for (const auto& c : v.checkpoints) {
        cps.push_back({{"k", c.k}, {"mean_e", c.mean}, {"standard_error", c.standard_error}});
    }
    doc["mean_e_at_checkpoints"] = std::move(cps);
    if (v.stopping_time_quartiles) {
        const auto& q = *v.stopping_time_quartiles;
        doc["stopping_time_quartiles"] = {q[0], q[1], q[2]};
    } else {
        doc["stopping_time_quartiles"] = nullptr;
    }
    doc["median_steps_to_reject"] =
        v.median_steps_to_reject ? ordered_json(*v.median_steps_to_reject) : ordered_json(nullptr);
    return doc;
}

void write_atomically(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ConfigError(fmt::format("cannot write {}", tmp.string()));
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw ConfigError(fmt::format("failed writing {}", tmp.string()));
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw ConfigError(fmt::format("cannot move {} into place: {}", path.string(),
                                      ec.message()));
    }
}

} // namespace evstop::cli
