#include "mottsf/cli.hpp"

#include "mottsf/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#ifndef MOTTSF_VERSION
#define MOTTSF_VERSION "unknown"
#endif

namespace mottsf::cli {

namespace {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
        throw UsageError(key + ": expected a number, got '" + text + "'");
    }
    return value;
}

long long parse_integer(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    long long value = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
        throw UsageError(key + ": expected an integer, got '" + text + "'");
    }
    return value;
}

int parse_int(const std::string& key, const std::string& text) {
    const long long v = parse_integer(key, text);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw UsageError(key + ": integer out of range");
    }
    return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    int base = 10;
    if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
        t = t.substr(2);
        base = 16;
    }
    std::uint64_t value = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value, base);
    if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
        throw UsageError(key + ": expected an unsigned 64-bit integer, got '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw UsageError(key + ": expected true or false, got '" + text + "'");
}

SweepMode parse_mode(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "equilibrium") return SweepMode::equilibrium;
    if (t == "dissipative") return SweepMode::dissipative;
    throw UsageError(key + ": expected equilibrium or dissipative, got '" + text + "'");
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<Json(const RunConfig&)> get;
};

template <class T>
Field number_field(T RunConfig::*section, double T::*member) {
    return {[=](RunConfig& c, const std::string& key, const std::string& v) { (c.*section).*member = parse_double(key, v); },
            [=](const RunConfig& c) { return Json((c.*section).*member); }};
}

template <class T>
Field int_field(T RunConfig::*section, int T::*member) {
    return {[=](RunConfig& c, const std::string& key, const std::string& v) { (c.*section).*member = parse_int(key, v); },
            [=](const RunConfig& c) { return Json((c.*section).*member); }};
}

template <class T>
Field bool_field(T RunConfig::*section, bool T::*member) {
    return {[=](RunConfig& c, const std::string& key, const std::string& v) { (c.*section).*member = parse_bool(key, v); },
            [=](const RunConfig& c) { return Json((c.*section).*member); }};
}

Field axis_number(AxisRange RunConfig::*axis, double AxisRange::*member) { return number_field(axis, member); }
Field axis_count(AxisRange RunConfig::*axis) { return int_field(axis, &AxisRange::count); }

Field double_list(std::vector<double>& (*ref)(RunConfig&), const std::vector<double>& (*cref)(const RunConfig&)) {
    return {[=](RunConfig& c, const std::string& key, const std::string& v) {
                std::vector<double> out;
                for (const std::string& item : split_list(v)) out.push_back(parse_double(key, item));
                if (out.empty()) throw UsageError(key + ": empty list");
                ref(c) = std::move(out);
            },
            [=](const RunConfig& c) { return Json(cref(c)); }};
}

// Ordered: this is also the canonical serialization order.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.emplace_back("model.g", number_field(&RunConfig::model, &ModelParams::g));
        t.emplace_back("model.omega", number_field(&RunConfig::model, &ModelParams::omega));
        t.emplace_back("model.delta1", number_field(&RunConfig::model, &ModelParams::delta1));
        t.emplace_back("model.delta2", number_field(&RunConfig::model, &ModelParams::delta2));
        t.emplace_back("model.kappa", number_field(&RunConfig::model, &ModelParams::kappa));
        t.emplace_back("model.gamma1", number_field(&RunConfig::model, &ModelParams::gamma1));
        t.emplace_back("model.gamma2", number_field(&RunConfig::model, &ModelParams::gamma2));
        t.emplace_back("model.z", int_field(&RunConfig::model, &ModelParams::z));

        t.emplace_back("numerics.n_max", int_field(&RunConfig::numerics, &NumericsConfig::n_max));
        t.emplace_back("numerics.dissipative_n_max", int_field(&RunConfig::numerics, &NumericsConfig::dissipative_n_max));
        t.emplace_back("numerics.beta", number_field(&RunConfig::numerics, &NumericsConfig::beta));
        t.emplace_back("numerics.max_iter", int_field(&RunConfig::numerics, &NumericsConfig::max_iter));
        t.emplace_back("numerics.step_tolerance", number_field(&RunConfig::numerics, &NumericsConfig::step_tolerance));
        t.emplace_back("numerics.distinct_tolerance",
                       number_field(&RunConfig::numerics, &NumericsConfig::distinct_tolerance));
        t.emplace_back("numerics.random_starts", int_field(&RunConfig::numerics, &NumericsConfig::random_starts));
        t.emplace_back("numerics.seed",
                       Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                 c.numerics.seed = parse_u64(key, v);
                             },
                             [](const RunConfig& c) { return Json(c.numerics.seed); }});
        t.emplace_back("numerics.warm_start", bool_field(&RunConfig::numerics, &NumericsConfig::warm_start));
        t.emplace_back("numerics.truncation_check", bool_field(&RunConfig::numerics, &NumericsConfig::truncation_check));

        t.emplace_back("grid.mu_lo", axis_number(&RunConfig::mu, &AxisRange::lo));
        t.emplace_back("grid.mu_hi", axis_number(&RunConfig::mu, &AxisRange::hi));
        t.emplace_back("grid.mu_count", axis_count(&RunConfig::mu));
        t.emplace_back("grid.k_lo", axis_number(&RunConfig::k, &AxisRange::lo));
        t.emplace_back("grid.k_hi", axis_number(&RunConfig::k, &AxisRange::hi));
        t.emplace_back("grid.k_count", axis_count(&RunConfig::k));

        t.emplace_back("lobes.axis", Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                               try {
                                                   c.lobes.axis = parse_axis(trim(v));
                                               } catch (const UsageError& e) {
                                                   throw UsageError(key + ": " + e.what());
                                               }
                                           },
                                           [](const RunConfig& c) { return Json(to_string(c.lobes.axis)); }});
        t.emplace_back("lobes.lo", number_field(&RunConfig::lobes, &LobesConfig::lo));
        t.emplace_back("lobes.hi", number_field(&RunConfig::lobes, &LobesConfig::hi));
        t.emplace_back("lobes.count", int_field(&RunConfig::lobes, &LobesConfig::count));
        t.emplace_back("lobes.charges", Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                                  std::vector<int> out;
                                                  for (const std::string& item : split_list(v)) {
                                                      out.push_back(parse_int(key, item));
                                                  }
                                                  if (out.empty()) throw UsageError(key + ": empty list");
                                                  c.lobes.charges = std::move(out);
                                              },
                                              [](const RunConfig& c) { return Json(c.lobes.charges); }});

        t.emplace_back("observables.mu_list",
                       double_list([](RunConfig& c) -> std::vector<double>& { return c.observables.mu_list; },
                                   [](const RunConfig& c) -> const std::vector<double>& { return c.observables.mu_list; }));
        t.emplace_back("observables.k_lo",
                       Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                 c.observables.k.lo = parse_double(key, v);
                             },
                             [](const RunConfig& c) { return Json(c.observables.k.lo); }});
        t.emplace_back("observables.k_hi",
                       Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                 c.observables.k.hi = parse_double(key, v);
                             },
                             [](const RunConfig& c) { return Json(c.observables.k.hi); }});
        t.emplace_back("observables.k_count",
                       Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                 c.observables.k.count = parse_int(key, v);
                             },
                             [](const RunConfig& c) { return Json(c.observables.k.count); }});
        t.emplace_back("observables.mode",
                       Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                 c.observables.mode = parse_mode(key, v);
                             },
                             [](const RunConfig& c) { return Json(mottsf::to_string(c.observables.mode)); }});

        t.emplace_back("spectrum.mu_list",
                       double_list([](RunConfig& c) -> std::vector<double>& { return c.spectrum.mu_list; },
                                   [](const RunConfig& c) -> const std::vector<double>& { return c.spectrum.mu_list; }));
        t.emplace_back("spectrum.k", number_field(&RunConfig::spectrum, &SpectrumConfig::k));
        t.emplace_back("spectrum.channels", Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                                      std::vector<Channel> out;
                                                      for (const std::string& item : split_list(v)) {
                                                          try {
                                                              out.push_back(parse_channel(item));
                                                          } catch (const std::invalid_argument& e) {
                                                              throw UsageError(key + ": " + e.what());
                                                          }
                                                      }
                                                      if (out.empty()) throw UsageError(key + ": empty list");
                                                      c.spectrum.channels = std::move(out);
                                                  },
                                                  [](const RunConfig& c) {
                                                      Json list = Json::array();
                                                      for (Channel ch : c.spectrum.channels) list.push_back(mottsf::to_string(ch));
                                                      return list;
                                                  }});
        t.emplace_back("spectrum.omega_lo", number_field(&RunConfig::spectrum, &SpectrumConfig::omega_lo));
        t.emplace_back("spectrum.omega_hi", number_field(&RunConfig::spectrum, &SpectrumConfig::omega_hi));
        t.emplace_back("spectrum.omega_step", number_field(&RunConfig::spectrum, &SpectrumConfig::omega_step));
        t.emplace_back("spectrum.prominence", number_field(&RunConfig::spectrum, &SpectrumConfig::prominence));

        t.emplace_back("output.directory", Field{[](RunConfig& c, const std::string&, const std::string& v) {
                                                     c.output.directory = trim(v);
                                                 },
                                                 [](const RunConfig& c) { return Json(c.output.directory); }});
        t.emplace_back("output.format", Field{[](RunConfig& c, const std::string& key, const std::string& v) {
                                                  try {
                                                      c.output.format = parse_format(trim(v));
                                                  } catch (const UsageError& e) {
                                                      throw UsageError(key + ": " + e.what());
                                                  }
                                              },
                                              [](const RunConfig& c) { return Json(to_string(c.output.format)); }});
        return t;
    }();
    return table;
}

std::string json_value_text(const std::string& key, const Json& value) {
    switch (value.type()) {
        case Json::value_t::string: return value.get<std::string>();
        case Json::value_t::boolean: return value.get<bool>() ? "true" : "false";
        case Json::value_t::number_unsigned: return std::to_string(value.get<std::uint64_t>());
        case Json::value_t::number_integer: return std::to_string(value.get<std::int64_t>());
        case Json::value_t::number_float: return format_double(value.get<double>());
        case Json::value_t::array: {
            std::string out;
            for (const Json& item : value) {
                if (!out.empty()) out += ',';
                out += json_value_text(key, item);
            }
            return out;
        }
        default: throw UsageError(key + ": unsupported value " + value.dump());
    }
}

RunConfig parse_json_config(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw UsageError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw UsageError("config: top-level JSON value must be an object");
    if (doc.contains("config") && doc["config"].is_object()) doc = doc["config"];

    RunConfig config;
    for (const auto& [section, body] : doc.items()) {
        if (!body.is_object()) throw UsageError("config: section '" + section + "' must be an object");
        for (const auto& [name, value] : body.items()) {
            const std::string key = section + "." + name;
            set_config_value(config, key, json_value_text(key, value));
        }
    }
    return config;
}

RunConfig parse_ini_config(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw UsageError("config line " + std::to_string(number) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(number) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        if (key.find('.') == std::string::npos) {
            if (section.empty()) throw UsageError("config line " + std::to_string(number) + ": key outside a section");
            key = section + "." + key;
        }
        set_config_value(config, key, trim(line.substr(eq + 1)));
    }
    return config;
}

// Cells of an output table; doubles print in shortest round-trip form.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Json>> rows;
};

std::string cell_text(const Json& cell) {
    if (cell.is_number_float()) return format_double(cell.get<double>());
    if (cell.is_string()) return cell.get<std::string>();
    if (cell.is_null()) return "nan";
    return cell.dump();
}

std::string csv_text(const Table& table, const std::vector<std::string>& notes) {
    std::string out = "# mottsf-csv " + table.name + " v" + std::to_string(kFormatVersion) + "\n";
    for (const std::string& note : notes) out += "# " + note + "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i > 0) out += ',';
        out += table.columns[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out += ',';
            out += cell_text(row[i]);
        }
        out += '\n';
    }
    return out;
}

Json finite_or_null(const Json& cell) {
    if (cell.is_number_float() && !std::isfinite(cell.get<double>())) {
        const double v = cell.get<double>();
        if (std::isnan(v)) return nullptr;
        return v > 0 ? "inf" : "-inf";
    }
    return cell;
}

std::string json_text(const Table& table, const std::vector<std::string>& notes) {
    Json doc;
    doc["format"] = "mottsf-table";
    doc["name"] = table.name;
    doc["version"] = kFormatVersion;
    doc["notes"] = notes;
    doc["columns"] = table.columns;
    Json rows = Json::array();
    for (const auto& row : table.rows) {
        Json r = Json::array();
        for (const Json& cell : row) r.push_back(finite_or_null(cell));
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    return doc.dump(1) + "\n";
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
}

void write_table(const RunConfig& config, const std::string& stem, const Table& table,
                 const std::vector<std::string>& notes, std::vector<std::string>& files) {
    const fs::path dir(config.output.directory);
    if (config.output.format != OutputFormat::json) {
        const fs::path path = dir / (stem + ".csv");
        write_file(path, csv_text(table, notes));
        files.push_back(path.string());
    }
    if (config.output.format != OutputFormat::csv) {
        const fs::path path = dir / (stem + ".json");
        write_file(path, json_text(table, notes));
        files.push_back(path.string());
    }
}

Json optional_number(const std::optional<double>& v) {
    return v ? Json(*v) : Json(std::numeric_limits<double>::quiet_NaN());
}

Json timing_json(const CellTiming& t) {
    Json j;
    j["p50_seconds"] = t.p50;
    j["p90_seconds"] = t.p90;
    j["p99_seconds"] = t.p99;
    j["max_seconds"] = t.max;
    j["total_cell_seconds"] = t.total;
    return j;
}

Json truncation_json(const TruncationCheck& t) {
    Json j;
    j["recheck_n_max"] = t.n_max;
    j["points"] = t.points;
    j["max_psi_shift"] = t.max_psi_shift;
    j["max_mean_n_shift"] = t.max_mean_n_shift;
    return j;
}

struct Meta {
    std::string command;
    Json extra = Json::object();
    double compute_seconds = 0.0;
};

void write_meta(const RunConfig& config, Meta meta, double write_seconds, std::vector<std::string>& files) {
    Json doc;
    doc["format_version"] = kFormatVersion;
    doc["tool"] = "mottsf";
    doc["version"] = version();
    doc["command"] = meta.command;
    doc["config"] = Json::parse(config_to_json(config, -1));
    Json timings;
    timings["compute_seconds"] = meta.compute_seconds;
    timings["write_seconds"] = write_seconds;
    timings["wall_seconds"] = meta.compute_seconds + write_seconds;
    doc["timings"] = std::move(timings);
    for (auto& [key, value] : meta.extra.items()) doc[key] = value;
    doc["outputs"] = files;
    const fs::path path = fs::path(config.output.directory) / "meta.json";
    write_file(path, doc.dump(2) + "\n");
    files.push_back(path.string());
}

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

SweepOptions sweep_options(const RunConfig& config, int workers) {
    SweepOptions options;
    options.workers = workers;
    options.seed = config.numerics.seed;
    options.self_consistency = self_consistency_options(config.numerics);
    options.warm_start = config.numerics.warm_start;
    options.truncation_check = config.numerics.truncation_check;
    return options;
}

void validate_common(const RunConfig& config) {
    try {
        config.model.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (config.numerics.n_max < 1 || config.numerics.dissipative_n_max < 1) {
        throw UsageError("numerics: cutoffs must be >= 1");
    }
    if (!(config.numerics.beta > 0.0 && config.numerics.beta <= 1.0)) throw UsageError("numerics.beta must lie in (0, 1]");
    if (config.numerics.max_iter < 1) throw UsageError("numerics.max_iter must be >= 1");
    if (config.numerics.random_starts < 0) throw UsageError("numerics.random_starts must be >= 0");
}

GridSpec grid_spec(const RunConfig& config, SweepMode mode) {
    GridSpec grid;
    grid.mu = config.mu;
    grid.k = config.k;
    grid.params = config.model;
    grid.mode = mode;
    grid.n_max = mode == SweepMode::dissipative ? config.numerics.dissipative_n_max : config.numerics.n_max;
    try {
        grid.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("grid: ") + e.what());
    }
    return grid;
}

// More than 1% failed cells is a degraded run.
int degradation_code(int failed, std::size_t total) {
    return static_cast<double>(failed) > 0.01 * static_cast<double>(total) ? kExitNumeric : kExitOk;
}

Json error_list(const std::vector<SweepRow>& rows) {
    Json list = Json::array();
    for (const SweepRow& row : rows) {
        if (row.error.empty()) continue;
        if (list.size() == 50) break;
        list.push_back(Json{{"mu", row.mu}, {"k", row.k}, {"message", row.error}});
    }
    return list;
}

std::vector<Json> sweep_cells(const SweepRow& row) {
    return {row.mu,
            row.k,
            row.psi_abs,
            row.error.empty() ? mottsf::to_string(row.phase) : "error",
            row.mean_n,
            row.var_n,
            optional_number(row.g2),
            row.mean_N,
            row.kc_overlay,
            row.trunc_flag ? 1 : 0};
}

const std::vector<std::string> kSweepColumns{"mu", "k", "psi", "phase", "mean_n", "var_n", "g2", "mean_N", "kc_overlay",
                                             "trunc_flag"};

std::string sweep_summary(const std::string& what, const SweepTable& table) {
    std::ostringstream s;
    s << what << ": " << table.rows.size() << " cells, " << table.failed_cells << " failed";
    return s.str();
}

void require_dissipation(const RunConfig& config, const std::string& command) {
    if (!config.model.has_dissipation()) {
        throw UsageError(command + ": all decay rates (model.kappa, model.gamma1, model.gamma2) are zero, so the "
                                   "master equation has no unique steady state; use phase-diagram for the "
                                   "equilibrium problem");
    }
}

}  // namespace

const char* version() noexcept { return MOTTSF_VERSION; }

const char* to_string(OutputFormat format) noexcept {
    switch (format) {
        case OutputFormat::csv: return "csv";
        case OutputFormat::json: return "json";
        case OutputFormat::both: return "both";
    }
    return "?";
}

OutputFormat parse_format(const std::string& text) {
    if (text == "csv") return OutputFormat::csv;
    if (text == "json") return OutputFormat::json;
    if (text == "both") return OutputFormat::both;
    throw UsageError("unknown format '" + text + "' (expected csv, json or both)");
}

const char* to_string(LobeAxis axis) noexcept {
    switch (axis) {
        case LobeAxis::delta1: return "delta1";
        case LobeAxis::delta2: return "delta2";
        case LobeAxis::omega: return "omega";
        case LobeAxis::g: return "g";
    }
    return "?";
}

LobeAxis parse_axis(const std::string& text) {
    if (text == "delta1") return LobeAxis::delta1;
    if (text == "delta2") return LobeAxis::delta2;
    if (text == "omega") return LobeAxis::omega;
    if (text == "g") return LobeAxis::g;
    throw UsageError("unknown lobe axis '" + text + "' (expected delta1, delta2, omega or g)");
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[32];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, end);
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            field.set(config, key, value);
            return;
        }
    }
    throw UsageError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
    const std::string t = trim(text);
    if (!t.empty() && t.front() == '{') return parse_json_config(t);
    return parse_ini_config(text);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string config_to_json(const RunConfig& config, int indent) {
    Json doc = Json::object();
    for (const auto& [name, field] : fields()) {
        const auto dot = name.find('.');
        doc[name.substr(0, dot)][name.substr(dot + 1)] = field.get(config);
    }
    return doc.dump(indent);
}

SelfConsistencyOptions self_consistency_options(const NumericsConfig& numerics) {
    SelfConsistencyOptions options;
    options.beta = numerics.beta;
    options.max_iter = numerics.max_iter;
    options.step_tolerance = numerics.step_tolerance;
    options.distinct_tolerance = numerics.distinct_tolerance;
    options.random_starts = numerics.random_starts;
    options.seed = numerics.seed;
    return options;
}

CommandResult cmd_phase_diagram(const RunConfig& config, int workers) {
    validate_common(config);
    const GridSpec grid = grid_spec(config, SweepMode::equilibrium);
    ensure_directory(config.output.directory);

    Meta meta{"phase-diagram"};
    const auto start = Clock::now();
    const SweepTable table = run_equilibrium_sweep(grid, sweep_options(config, workers));
    meta.compute_seconds = seconds_since(start);

    const auto write_start = Clock::now();
    Table out{"phase_diagram", kSweepColumns, {}};
    for (const SweepRow& row : table.rows) out.rows.push_back(sweep_cells(row));

    CommandResult result;
    write_table(config, "phase_diagram", out, {}, result.files);
    meta.extra["cells"] = Json{{"total", table.rows.size()}, {"failed", table.failed_cells}};
    meta.extra["cell_timing"] = timing_json(table.timing);
    meta.extra["truncation"] = truncation_json(table.truncation);
    meta.extra["errors"] = error_list(table.rows);
    write_meta(config, std::move(meta), seconds_since(write_start), result.files);

    result.exit_code = degradation_code(table.failed_cells, table.rows.size());
    result.summary = sweep_summary("phase-diagram", table);
    return result;
}

CommandResult cmd_lobes(const RunConfig& config) {
    validate_common(config);
    const LobesConfig& lobes = config.lobes;
    if (lobes.count < 1) throw UsageError("lobes.count must be >= 1");
    std::vector<double> values{lobes.lo};
    if (lobes.count > 1) {
        try {
            const AxisRange axis{lobes.lo, lobes.hi, lobes.count};
            axis.validate("lobes axis");
            values = axis.values();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    ensure_directory(config.output.directory);

    Meta meta{"lobes"};
    const auto start = Clock::now();
    Table out{"lobes", {"axis_value", "N", "mu_boundary"}, {}};
    for (const double value : values) {
        ModelParams params = config.model;
        switch (lobes.axis) {
            case LobeAxis::delta1: params.delta1 = value; break;
            case LobeAxis::delta2: params.delta2 = value; break;
            case LobeAxis::omega: params.omega = value; break;
            case LobeAxis::g: params.g = value; break;
        }
        std::vector<LobeBoundary> boundaries;
        try {
            boundaries = lobe_boundaries(params, lobes.charges);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("lobes: ") + e.what());
        }
        for (const LobeBoundary& b : boundaries) out.rows.push_back({value, b.charge_low, b.mu_boundary});
    }
    meta.compute_seconds = seconds_since(start);

    const auto write_start = Clock::now();
    CommandResult result;
    write_table(config, "lobes", out, {std::string("axis=") + to_string(lobes.axis)}, result.files);
    meta.extra["axis"] = to_string(lobes.axis);
    meta.extra["rows"] = out.rows.size();
    write_meta(config, std::move(meta), seconds_since(write_start), result.files);
    result.summary = "lobes: " + std::to_string(values.size()) + " axis points";
    return result;
}

CommandResult cmd_dissipative_diagram(const RunConfig& config, int workers) {
    validate_common(config);
    require_dissipation(config, "dissipative-diagram");
    const GridSpec grid = grid_spec(config, SweepMode::dissipative);
    ensure_directory(config.output.directory);

    Meta meta{"dissipative-diagram"};
    const auto start = Clock::now();
    const SweepTable table = run_dissipative_sweep(grid, sweep_options(config, workers));
    meta.compute_seconds = seconds_since(start);

    const auto write_start = Clock::now();
    std::vector<std::string> columns = kSweepColumns;
    for (const char* c : {"psi_re", "psi_im", "label", "n_attractors"}) columns.emplace_back(c);
    Table out{"dissipative_diagram", columns, {}};
    Table mask{"multistability", {"mu", "k", "n_attractors", "multistable"}, {}};
    int multistable = 0;
    for (const SweepRow& row : table.rows) {
        std::vector<Json> cells = sweep_cells(row);
        cells.emplace_back(row.psi.real());
        cells.emplace_back(row.psi.imag());
        cells.emplace_back(!row.error.empty() ? "error" : row.label ? mottsf::to_string(*row.label) : "");
        cells.emplace_back(row.n_attractors);
        out.rows.push_back(std::move(cells));
        const bool multi = row.label == DynamicsLabel::multistable;
        multistable += multi ? 1 : 0;
        mask.rows.push_back({row.mu, row.k, row.n_attractors, multi ? 1 : 0});
    }

    CommandResult result;
    write_table(config, "dissipative_diagram", out, {}, result.files);
    write_table(config, "multistability", mask, {}, result.files);
    Json labels = Json::object();
    for (DynamicsLabel l : {DynamicsLabel::converged, DynamicsLabel::oscillatory, DynamicsLabel::multistable,
                            DynamicsLabel::indeterminate}) {
        labels[mottsf::to_string(l)] =
            std::count_if(table.rows.begin(), table.rows.end(), [l](const SweepRow& r) { return r.label == l; });
    }
    meta.extra["cells"] = Json{{"total", table.rows.size()}, {"failed", table.failed_cells}, {"labels", labels}};
    meta.extra["cell_timing"] = timing_json(table.timing);
    meta.extra["truncation"] = truncation_json(table.truncation);
    meta.extra["errors"] = error_list(table.rows);
    write_meta(config, std::move(meta), seconds_since(write_start), result.files);

    result.exit_code = degradation_code(table.failed_cells, table.rows.size());
    result.summary = sweep_summary("dissipative-diagram", table) + ", " + std::to_string(multistable) + " multistable";
    return result;
}

CommandResult cmd_observables(const RunConfig& config, int workers) {
    validate_common(config);
    const ObservablesConfig& obs = config.observables;
    const bool dissipative = obs.mode == SweepMode::dissipative;
    if (dissipative) require_dissipation(config, "observables");
    if (obs.mu_list.empty()) throw UsageError("observables.mu_list is empty");
    try {
        obs.k.validate("observables k range");
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (obs.k.lo < 0.0) throw UsageError("observables k range: hopping must be >= 0");
    ensure_directory(config.output.directory);

    Meta meta{"observables"};
    const auto start = Clock::now();
    const int n_max = dissipative ? config.numerics.dissipative_n_max : config.numerics.n_max;
    const SweepTable table =
        run_observable_cuts(config.model, obs.mu_list, obs.k, n_max, dissipative, sweep_options(config, workers));
    meta.compute_seconds = seconds_since(start);

    const auto write_start = Clock::now();
    Table out{"observables", {"mu", "k", "mean_n", "var_n", "g2", "flag"}, {}};
    for (const SweepRow& row : table.rows) {
        std::string flag;
        if (!row.error.empty()) {
            flag = "error";
        } else if (dissipative) {
            flag = row.label ? mottsf::to_string(*row.label) : "";
        } else {
            flag = mottsf::to_string(row.phase);
        }
        out.rows.push_back({row.mu, row.k, row.mean_n, row.var_n, optional_number(row.g2), flag});
    }
    CommandResult result;
    write_table(config, "observables", out, {std::string("mode=") + mottsf::to_string(obs.mode)}, result.files);
    meta.extra["cells"] = Json{{"total", table.rows.size()}, {"failed", table.failed_cells}};
    meta.extra["cell_timing"] = timing_json(table.timing);
    meta.extra["errors"] = error_list(table.rows);
    write_meta(config, std::move(meta), seconds_since(write_start), result.files);

    result.exit_code = degradation_code(table.failed_cells, table.rows.size());
    result.summary = sweep_summary("observables", table);
    return result;
}

CommandResult cmd_spectrum(const RunConfig& config, int workers) {
    validate_common(config);
    require_dissipation(config, "spectrum");
    const SpectrumConfig& sc = config.spectrum;
    if (sc.mu_list.empty() || sc.channels.empty()) throw UsageError("spectrum: mu_list and channels must be non-empty");
    if (!(sc.k >= 0.0)) throw UsageError("spectrum.k must be >= 0");
    if (!(sc.prominence >= 0.0 && sc.prominence < 1.0)) throw UsageError("spectrum.prominence must lie in [0, 1)");
    std::vector<double> omega;
    try {
        omega = uniform_grid(sc.omega_lo, sc.omega_hi, sc.omega_step);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("spectrum omega grid: ") + e.what());
    }
    ensure_directory(config.output.directory);

    Meta meta{"spectrum"};
    const auto start = Clock::now();
    std::vector<LatticePoint> points;
    for (const double mu : sc.mu_list) points.push_back({mu, sc.k});
    const std::vector<SpectrumRecord> records = run_spectra(config.model, points, sc.channels, omega,
                                                            config.numerics.dissipative_n_max, sc.prominence,
                                                            sweep_options(config, workers));
    meta.compute_seconds = seconds_since(start);

    const auto write_start = Clock::now();
    CommandResult result;
    Table peaks{"peaks", {"mu", "k", "channel", "flag", "n_ss", "omega", "height"}, {}};
    Json details = Json::array();
    int failed = 0;
    for (const SpectrumRecord& record : records) {
        const std::string channel = mottsf::to_string(record.spectrum.channel);
        const std::string flag = record.error.empty() ? mottsf::to_string(record.spectrum.flag) : "error";
        failed += record.error.empty() ? 0 : 1;

        Table spectrum{"spectrum", {"omega", "S"}, {}};
        if (record.error.empty() && record.spectrum.flag == SpectrumFlag::normal) {
            for (std::size_t i = 0; i < record.spectrum.values.size(); ++i) {
                spectrum.rows.push_back({record.spectrum.omega_grid[i], record.spectrum.values[i]});
            }
        }
        const std::vector<std::string> notes{"mu=" + format_double(record.point.mu) + " k=" +
                                                 format_double(record.point.k) + " channel=" + channel,
                                             "flag=" + flag + " n_ss=" + format_double(record.spectrum.n_ss)};
        write_table(config, "spectrum_" + format_double(record.point.mu) + "_" + channel, spectrum, notes,
                    result.files);

        if (record.peaks.empty()) {
            peaks.rows.push_back({record.point.mu, record.point.k, channel, flag, record.spectrum.n_ss,
                                  std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN()});
        }
        for (const Peak& p : record.peaks) {
            peaks.rows.push_back({record.point.mu, record.point.k, channel, flag, record.spectrum.n_ss, p.omega, p.height});
        }
        Json d;
        d["mu"] = record.point.mu;
        d["k"] = record.point.k;
        d["channel"] = channel;
        d["flag"] = flag;
        d["psi_abs"] = std::abs(record.psi);
        d["label"] = mottsf::to_string(record.label);
        d["n_peaks"] = record.peaks.size();
        d["tau_truncated"] = record.spectrum.truncated;
        d["clamped_values"] = record.spectrum.clamped;
        d["most_negative"] = record.spectrum.most_negative;
        if (!record.error.empty()) d["error"] = record.error;
        details.push_back(std::move(d));
    }
    write_table(config, "peaks", peaks, {}, result.files);
    meta.extra["spectra"] = std::move(details);
    write_meta(config, std::move(meta), seconds_since(write_start), result.files);

    result.exit_code = degradation_code(failed, records.size());
    result.summary = "spectrum: " + std::to_string(records.size()) + " spectra, " + std::to_string(failed) + " failed";
    return result;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mean-field phase diagrams, steady states and emission spectra of coupled Lambda-emitter cavities",
                 "mottsf"};
    app.set_version_flag("--version", std::string(version()));
    app.fallthrough();
    app.require_subcommand(1, 1);

    std::string config_path;
    std::string out_dir;
    std::string format;
    int workers_flag = 0;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "Config file (sectioned key = value, or JSON / meta.json)");
    app.add_option("--out", out_dir, "Output directory (overrides output.directory)");
    app.add_option("--workers", workers_flag, "Worker threads (overrides MOTTSF_WORKERS)")->check(CLI::PositiveNumber);
    app.add_option("--format", format, "csv, json or both")->check(CLI::IsMember({"csv", "json", "both"}));
    CLI::Option* seed_option = app.add_option("--seed", seed, "Multistart seed (overrides numerics.seed)");

    CLI::App* phase = app.add_subcommand("phase-diagram", "Equilibrium order parameter over the (mu, k) grid");
    CLI::App* lobes = app.add_subcommand("lobes", "Mott-lobe boundaries along one model parameter");
    CLI::App* dissipative = app.add_subcommand("dissipative-diagram", "Self-consistent steady states over the grid");
    CLI::App* observables = app.add_subcommand("observables", "Photon statistics along k for a list of mu");
    CLI::App* spectrum = app.add_subcommand("spectrum", "Normalized emission spectra at steady state");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (!out_dir.empty()) config.output.directory = out_dir;
        if (!format.empty()) config.output.format = parse_format(format);
        if (seed_option->count() > 0) config.numerics.seed = seed;

        int workers = workers_flag;
        if (workers == 0) {
            if (const char* env = std::getenv("MOTTSF_WORKERS"); env != nullptr && *env != '\0') {
                workers = parse_int("MOTTSF_WORKERS", env);
                if (workers < 1) throw UsageError("MOTTSF_WORKERS must be >= 1");
            } else {
                workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
            }
        }

        CommandResult result;
        if (phase->parsed()) {
            result = cmd_phase_diagram(config, workers);
        } else if (lobes->parsed()) {
            result = cmd_lobes(config);
        } else if (dissipative->parsed()) {
            result = cmd_dissipative_diagram(config, workers);
        } else if (observables->parsed()) {
            result = cmd_observables(config, workers);
        } else if (spectrum->parsed()) {
            result = cmd_spectrum(config, workers);
        }
        for (const std::string& file : result.files) out << "wrote " << file << "\n";
        out << result.summary << "\n";
        if (result.exit_code == kExitNumeric) err << "error: more than 1% of cells failed (see meta.json)\n";
        return result.exit_code;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace mottsf::cli
