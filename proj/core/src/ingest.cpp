#include "evstop/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "evstop/error.hpp"

namespace evstop {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

RecordKind parse_kind(std::string_view text, std::size_t line) {
    if (text == "warmstart") {
        return RecordKind::warmstart;
    }
    if (text == "sample" || text == "posterior_sample") {
        return RecordKind::posterior_sample;
    }
    throw ParseError(line, fmt::format("unknown kind '{}' (expected warmstart or sample)", text));
}

std::size_t parse_index(std::string_view text, std::size_t line) {
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw ParseError(line, fmt::format("index '{}' is not a non-negative integer", text));
    }
    return value;
}

double parse_real(std::string_view text, std::size_t line, std::size_t point) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw ParseError(line, fmt::format("loglik[{}] '{}' is not a number", point, text));
    }
    return value;
}

// -inf becomes the clamp floor when allowed; every other non-finite value fails.
double check_point(double value, std::size_t line, std::size_t point,
                   const IngestOptions& options, std::vector<std::string>& warnings) {
    if (std::isfinite(value)) {
        return value;
    }
    if (std::isinf(value) && value < 0.0) {
        if (options.clamp_floor) {
            warnings.push_back(fmt::format("line {}: loglik[{}] = -inf clamped to {}", line,
                                           point, *options.clamp_floor));
            return *options.clamp_floor;
        }
        throw ParseError(line, fmt::format("loglik[{}] is -inf (zero predictive density); "
                                           "enable clamping to replace it with a floor",
                                           point));
    }
    throw ParseError(line, fmt::format("loglik[{}] is not finite", point));
}

LogLikRecord parse_json_line(std::string_view text, std::size_t line,
                             const IngestOptions& options, std::vector<std::string>& warnings) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(line, fmt::format("invalid JSON: {}", e.what()));
    }
    if (!doc.is_object()) {
        throw ParseError(line, "record must be a JSON object");
    }
    const auto field = [&](const char* name) -> const json& {
        const auto it = doc.find(name);
        if (it == doc.end()) {
            throw ParseError(line, fmt::format("missing field '{}'", name));
        }
        return *it;
    };

    LogLikRecord rec;
    rec.line = line;
    const auto& chain = field("chain");
    if (!chain.is_string()) {
        throw ParseError(line, "field 'chain' must be a string");
    }
    rec.chain_id = chain.get<std::string>();
    const auto& kind = field("kind");
    if (!kind.is_string()) {
        throw ParseError(line, "field 'kind' must be a string");
    }
    rec.kind = parse_kind(kind.get<std::string>(), line);
    const auto& index = field("index");
    if (!index.is_number_unsigned() &&
        !(index.is_number_integer() && index.get<std::int64_t>() >= 0)) {
        throw ParseError(line, "field 'index' must be a non-negative integer");
    }
    rec.sample_index = index.get<std::size_t>();
    const auto& loglik = field("loglik");
    if (!loglik.is_array()) {
        throw ParseError(line, "field 'loglik' must be an array");
    }
    rec.loglik.reserve(loglik.size());
    for (std::size_t i = 0; i < loglik.size(); ++i) {
        const auto& v = loglik[i];
        double value = 0.0;
        if (v.is_number()) {
            value = v.get<double>();
        } else if (v.is_string()) {
            // JSON has no infinity literal; accept the usual spellings as strings.
            const auto s = v.get<std::string>();
            if (s == "-inf" || s == "-Infinity") {
                value = -INFINITY;
            } else if (s == "inf" || s == "Infinity") {
                value = INFINITY;
            } else if (s == "nan" || s == "NaN") {
                value = NAN;
            } else {
                throw ParseError(line, fmt::format("loglik[{}] '{}' is not a number", i, s));
            }
        } else {
            throw ParseError(line, fmt::format("loglik[{}] is not a number", i));
        }
        rec.loglik.push_back(check_point(value, line, i, options, warnings));
    }
    return rec;
}

LogLikRecord parse_csv_line(std::string_view text, std::size_t line,
                            const IngestOptions& options, std::vector<std::string>& warnings) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = text.find(',', start);
        cells.push_back(trim(text.substr(start, comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    if (cells.size() < 4) {
        throw ParseError(line, "expected chain,kind,index,ll_1[,...,ll_m]");
    }
    LogLikRecord rec;
    rec.line = line;
    rec.chain_id = std::string(cells[0]);
    if (rec.chain_id.empty()) {
        throw ParseError(line, "empty chain id");
    }
    rec.kind = parse_kind(cells[1], line);
    rec.sample_index = parse_index(cells[2], line);
    rec.loglik.reserve(cells.size() - 3);
    for (std::size_t i = 3; i < cells.size(); ++i) {
        rec.loglik.push_back(
            check_point(parse_real(cells[i], line, i - 3), line, i - 3, options, warnings));
    }
    return rec;
}

} // namespace

ParseResult parse_records(std::istream& in, const IngestOptions& options) {
    ParseResult result;
    std::optional<RecordFormat> format;
    std::map<std::pair<std::string, std::size_t>, std::size_t> seen;
    std::optional<std::pair<std::size_t, std::size_t>> expected_m; // (m, line)

    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto text = trim(raw);
        if (text.empty()) {
            continue;
        }
        if (!format) {
            format = text.front() == '{' ? RecordFormat::jsonl : RecordFormat::csv;
        }
        auto rec = *format == RecordFormat::jsonl
                       ? parse_json_line(text, line, options, result.warnings)
                       : parse_csv_line(text, line, options, result.warnings);

        if (rec.kind == RecordKind::warmstart && rec.sample_index != 0) {
            throw ParseError(line, "warmstart records must use index 0");
        }
        if (rec.kind == RecordKind::posterior_sample && rec.sample_index == 0) {
            throw ParseError(line, "posterior samples are numbered from 1");
        }
        if (rec.loglik.empty()) {
            throw ParseError(line, "loglik must contain at least one point");
        }
        if (!expected_m) {
            expected_m = {rec.loglik.size(), line};
        } else if (rec.loglik.size() != expected_m->first) {
            throw ParseError(line, fmt::format("loglik has {} points, expected {} (as on line {})",
                                               rec.loglik.size(), expected_m->first,
                                               expected_m->second));
        }
        const auto [it, inserted] = seen.emplace(std::pair{rec.chain_id, rec.sample_index}, line);
        if (!inserted) {
            throw ParseError(line, fmt::format("duplicate record for chain '{}' index {} "
                                               "(first seen on line {}, again on line {})",
                                               rec.chain_id, rec.sample_index, it->second, line));
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

ParseResult parse_records(std::string_view text, const IngestOptions& options) {
    std::istringstream in{std::string(text)};
    return parse_records(in, options);
}

std::span<const double> LogLikTable::sample(std::size_t index) const {
    if (index == 0 || index > sample_rows.size()) {
        throw UsageError(fmt::format("chain '{}' has no sample {}", chain_id, index));
    }
    return sample_rows[index - 1];
}

std::vector<LogLikTable> build_tables(std::span<const LogLikRecord> records) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const LogLikRecord*>> by_chain;
    std::optional<std::size_t> m;
    for (const auto& rec : records) {
        if (!m) {
            m = rec.loglik.size();
        } else if (rec.loglik.size() != *m) {
            throw DataError(fmt::format("chain '{}' index {}: {} points, expected {}",
                                        rec.chain_id, rec.sample_index, rec.loglik.size(), *m));
        }
        auto [it, inserted] = by_chain.try_emplace(rec.chain_id);
        if (inserted) {
            order.push_back(rec.chain_id);
        }
        it->second.push_back(&rec);
    }

    std::vector<LogLikTable> tables;
    tables.reserve(order.size());
    for (const auto& chain : order) {
        auto rows = by_chain.at(chain);
        std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
            return a->sample_index < b->sample_index;
        });
        LogLikTable table;
        table.chain_id = chain;
        table.m = *m;
        for (const auto* rec : rows) {
            if (rec->kind == RecordKind::warmstart) {
                if (table.warmstart_row) {
                    throw DataError(fmt::format("chain '{}' has more than one warmstart", chain));
                }
                table.warmstart_row = rec->loglik;
                continue;
            }
            const auto expected = table.sample_rows.size() + 1;
            if (rec->sample_index < expected) {
                throw DataError(fmt::format("chain '{}' has duplicate sample index {}", chain,
                                            rec->sample_index));
            }
            if (rec->sample_index > expected) {
                throw DataError(fmt::format("chain '{}' is missing sample index {}", chain,
                                            expected));
            }
            table.sample_rows.push_back(rec->loglik);
            table.original_indices.push_back(rec->sample_index);
        }
        tables.push_back(std::move(table));
    }
    return tables;
}

void write_records(std::ostream& out, const LogLikTable& table, RecordFormat format) {
    const auto emit = [&](std::string_view kind, std::size_t index,
                          const std::vector<double>& row) {
        if (format == RecordFormat::jsonl) {
            json doc = {{"chain", table.chain_id},
                        {"kind", kind},
                        {"index", index},
                        {"loglik", row}};
            out << doc.dump() << '\n';
        } else {
            out << fmt::format("{},{},{},{}\n", table.chain_id, kind, index,
                               fmt::join(row, ","));
        }
    };
    if (table.warmstart_row) {
        emit("warmstart", 0, *table.warmstart_row);
    }
    for (std::size_t j = 0; j < table.sample_rows.size(); ++j) {
        emit("sample", j + 1, table.sample_rows[j]);
    }
}

std::string to_records(std::span<const LogLikTable> tables, RecordFormat format) {
    std::ostringstream out;
    for (const auto& table : tables) {
        write_records(out, table, format);
    }
    return out.str();
}

std::string_view to_string(ReferenceMode mode) {
    return mode == ReferenceMode::de_warmstart ? "de_warmstart" : "first_sample";
}

ReferenceMode parse_reference_mode(std::string_view text) {
    if (text == "de_warmstart" || text == "de") {
        return ReferenceMode::de_warmstart;
    }
    if (text == "first_sample" || text == "sample") {
        return ReferenceMode::first_sample;
    }
    throw ConfigError(fmt::format("unknown reference mode '{}'", text));
}

Reference select_reference(const LogLikTable& table, ReferenceMode mode) {
    if (mode == ReferenceMode::de_warmstart) {
        if (!table.warmstart_row) {
            throw ConfigError(fmt::format(
                "chain '{}' has no warmstart record; de_warmstart reference needs one",
                table.chain_id));
        }
        return {*table.warmstart_row, 1};
    }
    if (table.sample_rows.empty()) {
        throw ConfigError(fmt::format(
            "chain '{}' has no posterior samples; first_sample reference needs one",
            table.chain_id));
    }
    return {table.sample_rows.front(), 2};
}

} // namespace evstop
