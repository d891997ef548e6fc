#pragma once

// File formats: item and exemplar ingestion, result export, references and
// run configuration.
//
// CSV follows RFC 4180 (UTF-8, optional BOM, quoted fields may contain
// commas, quotes and newlines). JSON-lines files hold one object per line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "blueprint/blueprint.hpp"
#include "blueprint/classify.hpp"
#include "blueprint/error.hpp"
#include "blueprint/llm_config.hpp"
#include "blueprint/metrics.hpp"
#include "blueprint/pipeline.hpp"

namespace blueprint {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

using CsvRow = std::vector<std::string>;

inline std::vector<CsvRow> parse_csv(std::string_view data) {
  if (data.starts_with("\xEF\xBB\xBF")) data.remove_prefix(3);
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    // Blank lines carry no record.
    if (!(row.size() == 1 && row[0].empty() && !field_started)) rows.push_back(std::move(row));
    row.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          throw ParseError("CSV line " + std::to_string(line) +
                           ": quote inside unquoted field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < data.size() && data[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw ParseError("CSV ends inside a quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_line(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  out += '\n';
  return out;
}

/// CSV document with a header row and name-based column access.
class CsvTable {
 public:
  explicit CsvTable(std::vector<CsvRow> rows) {
    if (rows.empty()) throw ParseError("CSV file has no header row");
    header_ = std::move(rows.front());
    rows_.assign(std::make_move_iterator(rows.begin() + 1),
                 std::make_move_iterator(rows.end()));
    for (std::size_t r = 0; r < rows_.size(); ++r)
      if (rows_[r].size() != header_.size())
        throw ParseError("CSV row " + std::to_string(r + 1) + " has " +
                         std::to_string(rows_[r].size()) + " fields, header has " +
                         std::to_string(header_.size()));
  }

  const CsvRow& header() const noexcept { return header_; }
  const std::vector<CsvRow>& rows() const noexcept { return rows_; }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
      if (header_[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw ParseError("missing required column '" + std::string(name) + "'");
  }

 private:
  CsvRow header_;
  std::vector<CsvRow> rows_;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const fs::path& path) {
  try {
    return CsvTable(parse_csv(read_file(path)));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline bool is_jsonl(const fs::path& path) {
  auto ext = text::lower(path.extension().string());
  return ext == ".jsonl" || ext == ".ndjson";
}

/// Each non-blank line of a JSON-lines file, with its 1-based line number.
inline std::vector<std::pair<std::size_t, nlohmann::json>> read_jsonl(
    const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::size_t, nlohmann::json>> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw ParseError("expected a JSON object");
      out.emplace_back(n, std::move(j));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(n) + ": " +
                       e.what());
    }
  }
  return out;
}

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
inline void write_atomically(const fs::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move output into place at " + path.string());
  }
}

// ---------------------------------------------------------------------------
// Items and exemplars
// ---------------------------------------------------------------------------

namespace detail {

inline std::string json_text(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_null()) return {};
  return j.dump();
}

inline Item checked_item(std::string id, std::string stem,
                         std::optional<std::string> key, const std::string& where,
                         std::unordered_set<std::string>& ids) {
  if (text::trim(id).empty()) throw ParseError(where + ": empty id");
  if (text::trim(stem).empty()) throw ParseError(where + ": empty stem");
  if (!ids.insert(id).second)
    throw ParseError(where + ": duplicate id '" + id + "'");
  if (key && text::trim(*key).empty()) key.reset();
  return Item::make(std::move(id), std::move(stem), std::move(key));
}

}  // namespace detail

/// Items from CSV (columns id, stem and optional answer_key) or JSON lines
/// with the same keys. File order is preserved.
inline std::vector<Item> load_items(const fs::path& path) {
  std::vector<Item> items;
  std::unordered_set<std::string> ids;
  if (is_jsonl(path)) {
    for (const auto& [line, j] : read_jsonl(path)) {
      auto where = path.string() + " line " + std::to_string(line);
      for (const char* key : {"id", "stem"})
        if (!j.contains(key))
          throw ParseError(where + ": missing required column '" + key + "'");
      std::optional<std::string> answer;
      if (j.contains("answer_key") && !j["answer_key"].is_null())
        answer = detail::json_text(j["answer_key"]);
      items.push_back(detail::checked_item(detail::json_text(j["id"]),
                                           detail::json_text(j["stem"]),
                                           std::move(answer), where, ids));
    }
    return items;
  }
  auto table = read_csv(path);
  std::size_t id_col, stem_col;
  try {
    id_col = table.require("id");
    stem_col = table.require("stem");
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  auto key_col = table.column("answer_key");
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    const auto& row = table.rows()[r];
    std::optional<std::string> answer;
    if (key_col) answer = row[*key_col];
    items.push_back(detail::checked_item(row[id_col], row[stem_col],
                                         std::move(answer),
                                         path.string() + " row " + std::to_string(r + 1),
                                         ids));
  }
  return items;
}

/// Exemplars from a CSV with case-sensitive columns Text and Category.
inline std::vector<Exemplar> load_exemplars(const fs::path& path) {
  auto table = read_csv(path);
  std::size_t text_col, cat_col;
  try {
    text_col = table.require("Text");
    cat_col = table.require("Category");
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  std::vector<Exemplar> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    const auto& row = table.rows()[r];
    auto where = path.string() + " row " + std::to_string(r + 1);
    if (text::trim(row[text_col]).empty()) throw ParseError(where + ": empty Text");
    if (text::trim(row[cat_col]).empty()) throw ParseError(where + ": empty Category");
    out.push_back({row[text_col], std::string(text::trim(row[cat_col]))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string item_id;
  std::string text;
  /// Category1..N; entries past a failure are empty.
  std::vector<std::string> categories;
  std::string failure;

  CategoryPath path() const {
    CategoryPath p;
    for (const auto& c : categories) {
      if (c.empty()) break;
      p.labels.push_back(c);
    }
    return p;
  }
};

inline std::string audit_path_for(const fs::path& output) {
  return output.string() + ".audit.jsonl";
}

inline std::string format_failure(const Failure& f) {
  return "level " + std::to_string(f.level) + ": " + f.reason;
}

inline std::vector<std::string> result_header(std::size_t depth) {
  std::vector<std::string> h{"id", "text"};
  for (std::size_t k = 1; k <= depth; ++k) h.push_back("Category" + std::to_string(k));
  h.push_back("failure");
  return h;
}

inline nlohmann::ordered_json audit_entry(const ClassificationRecord& rec) {
  nlohmann::ordered_json j;
  j["id"] = rec.item_id;
  j["path"] = rec.path.labels;
  auto decisions = nlohmann::ordered_json::array();
  for (const auto& d : rec.decisions)
    decisions.push_back({{"level", d.level},
                         {"mode", std::string(to_string(d.mode))},
                         {"auto_selected", d.auto_selected},
                         {"candidates", d.candidates_offered},
                         {"chosen", d.chosen},
                         {"raw_output", d.raw_output}});
  j["decisions"] = std::move(decisions);
  if (rec.failure)
    j["failure"] = {{"level", rec.failure->level}, {"reason", rec.failure->reason}};
  else
    j["failure"] = nullptr;
  return j;
}

/// Writes the result table (id,text,Category1..N,failure) and its JSON-lines
/// audit sidecar. Both files are replaced atomically.
inline void write_results(std::span<const ClassificationRecord> records,
                          std::span<const Item> items, std::size_t depth,
                          const fs::path& path) {
  if (records.size() != items.size())
    throw ValidationError("records and items differ in length");
  std::string table = csv_line(result_header(depth));
  std::string audit;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.item_id != items[i].id)
      throw ValidationError("record '" + rec.item_id + "' is not aligned with item '" +
                            items[i].id + "'");
    std::vector<std::string> row{rec.item_id, items[i].combined};
    for (std::size_t k = 0; k < depth; ++k)
      row.push_back(k < rec.path.size() ? rec.path[k] : std::string());
    row.push_back(rec.failure ? format_failure(*rec.failure) : std::string());
    table += csv_line(row);
    audit += audit_entry(rec).dump() + "\n";
  }
  write_atomically(path, table);
  write_atomically(audit_path_for(path), audit);
}

inline std::vector<std::size_t> category_columns(const CsvTable& table) {
  std::vector<std::size_t> cols;
  for (std::size_t k = 1;; ++k) {
    auto c = table.column("Category" + std::to_string(k));
    if (!c) break;
    cols.push_back(*c);
  }
  return cols;
}

inline std::vector<ResultRow> read_results(const fs::path& path) {
  auto table = read_csv(path);
  const auto id_col = table.require("id");
  const auto text_col = table.column("text");
  const auto fail_col = table.column("failure");
  const auto cols = category_columns(table);
  std::vector<ResultRow> out;
  for (const auto& row : table.rows()) {
    ResultRow r;
    r.item_id = row[id_col];
    if (text_col) r.text = row[*text_col];
    for (auto c : cols) r.categories.push_back(row[c]);
    if (fail_col) r.failure = row[*fail_col];
    out.push_back(std::move(r));
  }
  return out;
}

/// Reference paths: CSV with id and Category1..N columns, or JSON lines
/// {"id": ..., "path": [...]}.
inline std::vector<ReferencePath> load_references(const fs::path& path) {
  std::vector<ReferencePath> out;
  if (is_jsonl(path)) {
    for (const auto& [line, j] : read_jsonl(path)) {
      auto where = path.string() + " line " + std::to_string(line);
      if (!j.contains("id") || !j.contains("path") || !j["path"].is_array())
        throw ParseError(where + ": expected {\"id\": ..., \"path\": [...]}");
      ReferencePath r{detail::json_text(j["id"]), {}};
      for (const auto& l : j["path"]) r.path.labels.push_back(detail::json_text(l));
      out.push_back(std::move(r));
    }
    return out;
  }
  for (auto& row : read_results(path)) out.push_back({row.item_id, row.path()});
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  fs::path blueprint;
  fs::path items;
  std::optional<fs::path> exemplars;
  fs::path output;
  /// One mode per level; empty selects default_levels().
  std::vector<Mode> modes;
  std::string backend = "mock";
  /// Ground truth for the mock backend (reference file format).
  std::optional<fs::path> oracle;
  double noise = 0.0;
  LlmConfig llm = LlmConfig::from_env();
  std::size_t concurrency = 1;
  std::uint64_t seed = 42;
};

namespace detail {

inline std::string cfg_string(const ordered_json& j, std::string_view key) {
  if (!j.is_string() && !j.is_number())
    throw ConfigError("config key '" + std::string(key) + "' must be a scalar");
  return j.is_string() ? j.get<std::string>() : j.dump();
}

inline double cfg_number(const ordered_json& j, std::string_view key) {
  try {
    if (j.is_number()) return j.get<double>();
    std::size_t used = 0;
    auto s = cfg_string(j, key);
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' must be a number");
  }
}

inline std::uint64_t cfg_count(const ordered_json& j, std::string_view key) {
  double v = cfg_number(j, key);
  if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
    throw ConfigError("config key '" + std::string(key) +
                      "' must be a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

}  // namespace detail

inline std::vector<Mode> parse_modes(std::string_view list) {
  std::vector<Mode> out;
  if (text::trim(list).empty()) return out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto comma = list.find(',', pos);
    auto part = text::trim(list.substr(pos, comma == std::string_view::npos
                                                ? list.size() - pos
                                                : comma - pos));
    if (part.empty()) throw ConfigError("empty entry in mode list '" + std::string(list) + "'");
    out.push_back(parse_mode(part));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

/// Reads a YAML or JSON run configuration. Relative paths resolve against
/// the configuration file's directory.
inline RunConfig load_run_config(const fs::path& path) {
  ordered_json doc;
  try {
    doc = detail::load_tree(read_file(path));
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path.string() + ": expected a mapping");
  const auto base = path.parent_path();
  auto resolve = [&](const ordered_json& j, std::string_view key) {
    fs::path p = detail::cfg_string(j, key);
    return p.is_absolute() ? p : base / p;
  };
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "blueprint") cfg.blueprint = resolve(value, key);
    else if (key == "items") cfg.items = resolve(value, key);
    else if (key == "exemplars") cfg.exemplars = resolve(value, key);
    else if (key == "output") cfg.output = resolve(value, key);
    else if (key == "oracle") cfg.oracle = resolve(value, key);
    else if (key == "backend") cfg.backend = detail::cfg_string(value, key);
    else if (key == "noise") cfg.noise = detail::cfg_number(value, key);
    else if (key == "concurrency") cfg.concurrency = detail::cfg_count(value, key);
    else if (key == "seed") cfg.seed = detail::cfg_count(value, key);
    else if (key == "modes") {
      if (value.is_array()) {
        for (const auto& m : value) cfg.modes.push_back(parse_mode(detail::cfg_string(m, key)));
      } else {
        cfg.modes = parse_modes(detail::cfg_string(value, key));
      }
    } else if (key == "llm") {
      if (!value.is_object()) throw ConfigError("config key 'llm' must be a mapping");
      for (const auto& [k, v] : value.items()) {
        if (k == "base_url") cfg.llm.base_url = detail::cfg_string(v, k);
        else if (k == "api_key") cfg.llm.api_key = detail::cfg_string(v, k);
        else if (k == "organization") cfg.llm.organization = detail::cfg_string(v, k);
        else if (k == "model") cfg.llm.model = detail::cfg_string(v, k);
        else if (k == "temperature") cfg.llm.temperature = detail::cfg_number(v, k);
        else if (k == "timeout_ms")
          cfg.llm.timeout = std::chrono::milliseconds(detail::cfg_count(v, k));
        else if (k == "max_retries")
          cfg.llm.max_retries = static_cast<int>(detail::cfg_count(v, k));
        else if (k == "max_in_flight") cfg.llm.max_in_flight = detail::cfg_count(v, k);
        else throw ConfigError("unknown llm config key '" + k + "'");
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

}  // namespace blueprint
