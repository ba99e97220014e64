#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "evstop/diagnostics.hpp"
#include "evstop/ensemble.hpp"
#include "evstop/error.hpp"
#include "report_io.hpp"

namespace evstop::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kValidationFile = "validation.jsonl";
constexpr const char* kHoldoutFile = "holdout.jsonl";

struct InputSet {
    std::vector<fs::path> record_files;
    std::optional<fs::path> holdout; // found next to the records in a dump directory
};

InputSet resolve_inputs(const std::vector<fs::path>& inputs) {
    InputSet set;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            const auto records = p / kValidationFile;
            if (!fs::exists(records)) {
                throw ConfigError(fmt::format("directory {} has no {}", p.string(),
                                              kValidationFile));
            }
            set.record_files.push_back(records);
            if (fs::exists(p / kHoldoutFile) && !set.holdout) {
                set.holdout = p / kHoldoutFile;
            }
        } else {
            set.record_files.push_back(p);
        }
    }
    return set;
}

std::vector<LogLikRecord> read_records(const fs::path& path, const IngestOptions& options,
                                       std::ostream& err) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", path.string()));
    }
    try {
        auto parsed = parse_records(in, options);
        for (const auto& w : parsed.warnings) {
            err << "warning: " << path.string() << ": " << w << '\n';
        }
        return std::move(parsed.records);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::vector<LogLikTable> load_tables(const std::vector<fs::path>& files,
                                     const IngestOptions& options, std::ostream& err) {
    std::vector<LogLikRecord> records;
    for (const auto& f : files) {
        auto part = read_records(f, options, err);
        records.insert(records.end(), std::make_move_iterator(part.begin()),
                       std::make_move_iterator(part.end()));
    }
    if (records.empty()) {
        throw DataError("no log-likelihood records in the input");
    }
    return build_tables(records);
}

IngestOptions ingest_options(const std::optional<double>& clamp_floor) {
    IngestOptions options;
    options.clamp_floor = clamp_floor;
    return options;
}

fs::path output_directory(const RunConfig& config) {
    if (config.output_dir) {
        return *config.output_dir;
    }
    if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
        return env;
    }
    return "evstop_out";
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure in chain order.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

void write_json(std::ostream& out, const nlohmann::ordered_json& doc) {
    out << doc.dump(2) << '\n';
}

} // namespace

ThinningChoice ThinningChoice::parse(const std::string& text) {
    if (text == "auto") {
        return {Kind::automatic, 1};
    }
    if (text == "off") {
        return {Kind::off, 1};
    }
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || value == 0) {
        throw ConfigError(fmt::format("thinning must be auto, off or a positive integer, got '{}'",
                                      text));
    }
    return {Kind::fixed, value};
}

void cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    // Validates alpha before touching any file.
    const StoppingConfig probe(config.alpha, 1);
    if (config.inputs.empty()) {
        throw ConfigError("run needs at least one input");
    }
    if (config.jobs == 0) {
        throw ConfigError("--jobs must be at least 1");
    }
    const auto options = ingest_options(config.clamp_floor);
    const auto inputs = resolve_inputs(config.inputs);
    const auto tables = load_tables(inputs.record_files, options, err);

    std::size_t budget = 1;
    for (const auto& t : tables) {
        budget = std::max(budget, t.sample_count());
    }
    if (config.budget) {
        budget = *config.budget;
    }
    const StoppingConfig base(config.alpha, budget);

    out << fmt::format("evstop run: {} chains, reference {}, alpha {}, budget {}\n",
                       tables.size(), to_string(config.mode), config.alpha, budget);
    out << fmt::format("threshold: log E >= {:.5f} (E >= {})\n", base.log_threshold(),
                       1.0 / config.alpha);
    if (config.thinning.kind == ThinningChoice::Kind::off) {
        out << "caveat: thinning disabled; with autocorrelated samples the Type-I guarantee "
               "holds only approximately\n";
    }

    std::vector<ChainDecision> decisions(tables.size());
    std::vector<std::string> notes(tables.size());
    parallel_for(tables.size(), config.jobs, [&](std::size_t i) {
        const auto& table = tables[i];
        std::size_t interval = 1;
        if (config.thinning.kind == ThinningChoice::Kind::fixed) {
            interval = config.thinning.interval;
        } else if (config.thinning.kind == ThinningChoice::Kind::automatic) {
            const auto pilot = row_sum_series(table, std::min(budget, kPilotSamples));
            try {
                interval = integrated_autocorrelation_time(pilot).recommended_interval;
            } catch (const DegenerateInputError& e) {
                notes[i] = fmt::format("chain {}: autocorrelation not estimable ({}); "
                                       "thinning interval 1",
                                       table.chain_id, e.what());
            }
        }
        decisions[i] = decide_chain(table, config.mode,
                                    StoppingConfig(config.alpha, budget, interval));
    });
    for (const auto& n : notes) {
        if (!n.empty()) {
            err << "note: " << n << '\n';
        }
    }

    const auto report_files = config.report_input
                                  ? std::optional<fs::path>(config.report_input)
                                  : inputs.holdout;
    std::vector<LogLikTable> eval_tables;
    if (report_files) {
        eval_tables = load_tables({*report_files}, options, err);
    }
    const bool in_sample = !report_files;
    const auto report = compression_report(decisions, tables, in_sample ? tables : eval_tables,
                                           config.alpha, config.mode, in_sample);

    const auto dir = output_directory(config);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw ConfigError(fmt::format("cannot create output directory {}: {}", dir.string(),
                                      ec.message()));
    }
    const auto text = render_report_text(report);
    write_atomically(dir / "decisions.jsonl",
                     decisions_to_jsonl(decisions, config.alpha, config.mode));
    write_atomically(dir / "trajectories.csv", trajectories_csv(decisions, base.log_threshold()));
    write_atomically(dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_atomically(dir / "report.txt", text);

    for (const auto& d : decisions) {
        out << fmt::format("chain {}: {} after {} tested samples (thinning {}){}\n", d.chain_id,
                           to_string(d.verdict), d.tested_steps, d.thinning_interval,
                           d.stop_index ? fmt::format(", stop at sample {}", *d.stop_index)
                                        : std::string());
    }
    out << '\n' << text;
    out << fmt::format("\nwrote decisions.jsonl, trajectories.csv, report.json, report.txt to {}\n",
                       dir.string());
}

void cmd_report(const ReportConfig& config, std::ostream& out, std::ostream& err) {
    std::ifstream in(config.decisions);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", config.decisions.string()));
    }
    const auto file = parse_decisions(in);
    const auto options = ingest_options(config.clamp_floor);
    const auto inputs = resolve_inputs({config.records});
    const auto tables = load_tables(inputs.record_files, options, err);
    const auto report_files = config.report_records ? config.report_records : inputs.holdout;
    std::vector<LogLikTable> eval_tables;
    if (report_files) {
        eval_tables = load_tables({*report_files}, options, err);
    }
    const bool in_sample = !report_files;
    const auto report = compression_report(file.decisions, tables,
                                           in_sample ? tables : eval_tables, file.alpha,
                                           file.mode, in_sample);
    if (config.json) {
        write_json(out, report_to_json(report));
    } else {
        out << render_report_text(report);
    }
}

void cmd_simulate(const SimulateConfig& config, std::ostream& out, std::ostream& err) {
    const auto& spec = config.spec;
    spec.validate();
    nlohmann::ordered_json doc;

    if (spec.kind == ScenarioKind::gaussian_model) {
        const auto run = gaussian_model_run(spec);
        double mean_acc = 0.0;
        for (double a : run.acceptance_rates) {
            mean_acc += a;
        }
        mean_acc /= static_cast<double>(run.acceptance_rates.size());
        doc["experiment"] = "gaussian_model";
        doc["scenario"] = {{"kind", to_string(spec.kind)}, {"m", spec.m},
                           {"chains", spec.chains},        {"budget", spec.budget},
                           {"seed", spec.seed},            {"n_train", spec.gaussian.n_train},
                           {"proposal_sd", spec.gaussian.proposal_sd},
                           {"burn_in", spec.gaussian.burn_in},
                           {"steps_per_sample", spec.gaussian.steps_per_sample},
                           {"init_offset", spec.gaussian.init_offset}};
        doc["posterior_mean"] = run.task.posterior_mean();
        doc["posterior_sd"] = run.task.posterior_sd();
        doc["mean_acceptance_rate"] = mean_acc;
        doc["acceptance_rates"] = run.acceptance_rates;
        if (config.dump_dir) {
            fs::create_directories(*config.dump_dir);
            write_atomically(*config.dump_dir / kValidationFile, to_records(run.tables));
            write_atomically(*config.dump_dir / kHoldoutFile, to_records(run.holdout));
            err << fmt::format("dumped {} chains to {}\n", run.tables.size(),
                               config.dump_dir->string());
        }
    } else {
        const auto result = spec.kind == ScenarioKind::exact_null
                                ? certify_validity(spec, config.alpha, config.replications)
                                : simulate_streams(spec, config.alpha, config.replications);
        doc = validity_to_json(spec, result);
        if (config.dump_dir) {
            fs::create_directories(*config.dump_dir);
            write_atomically(*config.dump_dir / kValidationFile, to_records(stream_tables(spec)));
            err << fmt::format("dumped {} chains to {}\n", spec.chains,
                               config.dump_dir->string());
        }
    }

    if (config.output) {
        write_atomically(*config.output, doc.dump(2) + "\n");
    } else {
        write_json(out, doc);
    }
}

void cmd_thin(const ThinConfig& config, std::ostream& out, std::ostream& err) {
    const auto inputs = resolve_inputs({config.records});
    const auto tables = load_tables(inputs.record_files, ingest_options(config.clamp_floor), err);
    nlohmann::ordered_json doc;
    auto chains = nlohmann::ordered_json::array();
    for (const auto& t : tables) {
        const auto series =
            row_sum_series(t, config.pilot == 0 ? t.sample_count() : config.pilot);
        ThinningDiagnostics diag;
        try {
            diag = integrated_autocorrelation_time(series);
        } catch (const DegenerateInputError& e) {
            throw DegenerateInputError(fmt::format("chain '{}': {}", t.chain_id, e.what()));
        }
        chains.push_back({{"chain", t.chain_id},
                          {"samples", series.size()},
                          {"iac_time", diag.iac_time},
                          {"recommended_interval", diag.recommended_interval},
                          {"window_used", diag.window_used}});
    }
    doc["chains"] = std::move(chains);
    write_json(out, doc);
}

int report_failure(std::exception_ptr failure, std::ostream& err) {
    try {
        std::rethrow_exception(failure);
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitDataError;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
    } catch (...) {
        err << "internal error: unknown exception\n";
    }
    return kExitInternalError;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"E-value stopping for sequentially sampled ensembles", "evstop"};
    app.require_subcommand(1);

    RunConfig run;
    std::vector<std::string> run_inputs;
    std::string run_mode = "de_warmstart";
    std::string run_thinning = "auto";
    std::optional<std::string> run_report_input;
    std::optional<std::string> run_output_dir;
    std::optional<double> clamp_floor;
    bool clamp = false;
    auto* run_cmd = app.add_subcommand("run", "Run the stopping rule on record files");
    run_cmd->add_option("inputs", run_inputs, "Record files or simulate --dump directories")
        ->required();
    run_cmd->add_option("--report-input", run_report_input,
                        "Hold-out records used for LPPD reporting");
    run_cmd->add_option("--alpha", run.alpha, "Significance level")->capture_default_str();
    run_cmd->add_option("--mode", run_mode, "Reference: de_warmstart or first_sample")
        ->capture_default_str();
    run_cmd->add_option("--budget", run.budget, "Maximum tested samples per chain");
    run_cmd->add_option("--thinning", run_thinning, "auto, off, or a fixed interval")
        ->capture_default_str();
    run_cmd->add_option("-o,--output-dir", run_output_dir,
                        "Output directory (default $EVSTOP_OUTPUT_DIR or ./evstop_out)");
    run_cmd->add_flag("--clamp", clamp, "Clamp -inf log-likelihoods to the floor");
    run_cmd->add_option("--clamp-floor", clamp_floor, "Floor for clamped -inf values (-30)");
    run_cmd->add_option("-j,--jobs", run.jobs, "Chains processed concurrently")
        ->capture_default_str();

    ReportConfig report;
    std::string report_decisions;
    std::string report_records;
    std::optional<std::string> report_holdout;
    auto* report_cmd = app.add_subcommand("report", "Re-render the ensemble report");
    report_cmd->add_option("--decisions", report_decisions, "decisions.jsonl from run")
        ->required();
    report_cmd->add_option("--records", report_records, "Records used by run")->required();
    report_cmd->add_option("--report-records", report_holdout, "Hold-out records");
    report_cmd->add_flag("--json", report.json, "Emit JSON instead of the table");
    report_cmd->add_flag("--clamp", clamp, "Clamp -inf log-likelihoods to the floor");
    report_cmd->add_option("--clamp-floor", clamp_floor, "Floor for clamped -inf values");

    SimulateConfig sim;
    std::string sim_kind = "exact_null";
    std::optional<std::string> sim_dump;
    std::optional<std::string> sim_output;
    auto* sim_cmd = app.add_subcommand("simulate", "Synthetic scenarios and certification");
    sim_cmd->add_option("--kind", sim_kind, "exact_null, lognormal_alt or gaussian_model")
        ->capture_default_str();
    sim_cmd->add_option("--mu", sim.spec.mu, "Mean log lift per step")->capture_default_str();
    sim_cmd->add_option("--sigma", sim.spec.sigma, "Log-ratio volatility")->capture_default_str();
    sim_cmd->add_option("--m", sim.spec.m, "Validation points")->capture_default_str();
    sim_cmd->add_option("--chains", sim.spec.chains, "Chains to dump or sample")
        ->capture_default_str();
    sim_cmd->add_option("--budget", sim.spec.budget, "Samples per chain")->capture_default_str();
    sim_cmd->add_option("--seed", sim.spec.seed, "Base seed")->capture_default_str();
    sim_cmd->add_option("--alpha", sim.alpha, "Significance level")->capture_default_str();
    sim_cmd->add_option("--reps", sim.replications, "Replications")->capture_default_str();
    sim_cmd->add_option("--dump", sim_dump, "Write records in ingest format to this directory");
    sim_cmd->add_option("--output", sim_output, "Write the result document here");
    sim_cmd->add_option("--n-train", sim.spec.gaussian.n_train)->capture_default_str();
    sim_cmd->add_option("--proposal-sd", sim.spec.gaussian.proposal_sd)->capture_default_str();
    sim_cmd->add_option("--burn-in", sim.spec.gaussian.burn_in)->capture_default_str();
    sim_cmd->add_option("--steps-per-sample", sim.spec.gaussian.steps_per_sample)
        ->capture_default_str();
    sim_cmd->add_option("--init-offset", sim.spec.gaussian.init_offset)->capture_default_str();

    ThinConfig thin;
    std::string thin_records;
    auto* thin_cmd = app.add_subcommand("thin", "Autocorrelation time and thinning interval");
    thin_cmd->add_option("records", thin_records, "Record file or dump directory")->required();
    thin_cmd->add_option("--pilot", thin.pilot, "Use only the first N samples (0 = all)")
        ->capture_default_str();
    thin_cmd->add_flag("--clamp", clamp, "Clamp -inf log-likelihoods to the floor");
    thin_cmd->add_option("--clamp-floor", clamp_floor, "Floor for clamped -inf values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfigError;
    }
    const std::optional<double> floor =
        clamp_floor ? clamp_floor : (clamp ? std::optional<double>(kDefaultClampFloor)
                                           : std::nullopt);

    try {
        if (run_cmd->parsed()) {
            run.inputs.assign(run_inputs.begin(), run_inputs.end());
            if (run_report_input) {
                run.report_input = *run_report_input;
            }
            if (run_output_dir) {
                run.output_dir = *run_output_dir;
            }
            run.mode = parse_reference_mode(run_mode);
            run.thinning = ThinningChoice::parse(run_thinning);
            run.clamp_floor = floor;
            cmd_run(run, out, err);
        } else if (report_cmd->parsed()) {
            report.decisions = report_decisions;
            report.records = report_records;
            if (report_holdout) {
                report.report_records = *report_holdout;
            }
            report.clamp_floor = floor;
            cmd_report(report, out, err);
        } else if (sim_cmd->parsed()) {
            sim.spec.kind = parse_scenario_kind(sim_kind);
            if (sim_dump) {
                sim.dump_dir = *sim_dump;
            }
            if (sim_output) {
                sim.output = *sim_output;
            }
            cmd_simulate(sim, out, err);
        } else if (thin_cmd->parsed()) {
            thin.records = thin_records;
            thin.clamp_floor = floor;
            cmd_thin(thin, out, err);
        }
    } catch (...) {
        return report_failure(std::current_exception(), err);
    }
    return kExitOk;
}

} // namespace evstop::cli
