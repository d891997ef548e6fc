#pragma once

// Command-line driver: validate, classify, simulate, score, multilabel.
//
// Exit status: 0 success, 1 some items failed (outputs still written),
// 2 configuration or input errors.

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blueprint/blueprint.hpp"
#include "blueprint/classify.hpp"
#include "blueprint/io.hpp"
#include "blueprint/llm_client.hpp"
#include "blueprint/metrics.hpp"
#include "blueprint/pipeline.hpp"
#include "blueprint/simulation.hpp"

namespace blueprint::cli {

enum ExitCode : int { kOk = 0, kItemFailures = 1, kConfigError = 2 };

/// Injection points for tests.
struct Environment {
  /// Builds the transport for the LLM backend; HttplibTransport when unset.
  std::function<std::shared_ptr<Transport>(const LlmConfig&)> transport;
  /// Backoff sleeper for the LLM backend; real sleeping when unset.
  LlmClient::Sleeper sleeper;
};

namespace detail {

struct LlmFlags {
  std::optional<std::string> base_url, model;
  std::optional<double> temperature;
  std::optional<int> max_retries;
  std::optional<std::size_t> max_in_flight;
  std::optional<long long> timeout_ms;

  void add_to(CLI::App& app) {
    app.add_option("--base-url", base_url, "Chat-completions base URL");
    app.add_option("--model", model, "Model id");
    app.add_option("--temperature", temperature, "Sampling temperature")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--max-retries", max_retries, "Retries for transient errors")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--max-in-flight", max_in_flight, "Concurrent request cap")
        ->check(CLI::PositiveNumber);
    app.add_option("--timeout-ms", timeout_ms, "Request timeout")
        ->check(CLI::PositiveNumber);
  }

  bool any() const {
    return base_url || model || temperature || max_retries || max_in_flight ||
           timeout_ms;
  }

  void apply(LlmConfig& cfg) const {
    if (base_url) cfg.base_url = *base_url;
    if (model) cfg.model = *model;
    if (temperature) cfg.temperature = *temperature;
    if (max_retries) cfg.max_retries = *max_retries;
    if (max_in_flight) cfg.max_in_flight = *max_in_flight;
    if (timeout_ms) cfg.timeout = std::chrono::milliseconds(*timeout_ms);
  }
};

inline std::unique_ptr<LlmClient> make_llm(const LlmConfig& cfg,
                                           const Environment& env) {
  auto transport = env.transport ? env.transport(cfg) : nullptr;
  return std::make_unique<LlmClient>(cfg, std::move(transport), env.sleeper);
}

inline std::string level_counts(const Blueprint& bp) {
  std::vector<std::string> parts;
  for (std::size_t k = 1; k <= bp.depth(); ++k)
    parts.push_back(std::to_string(bp.labels_at_level(k).size()));
  return text::join(parts, "/");
}

inline std::size_t max_fan_out(const Blueprint& bp, std::size_t level) {
  std::size_t best = level == 1 ? bp.roots().size() : 0;
  if (level > 1)
    for (const auto* n : blueprint::detail::nodes_at_level(bp, level - 1))
      best = std::max(best, n->children.size());
  return best;
}

inline void write_json(const nlohmann::ordered_json& j,
                       const std::optional<std::string>& path, std::ostream& out) {
  auto doc = j.dump(2) + "\n";
  if (path)
    write_atomically(*path, doc);
  else
    out << doc;
}

inline std::vector<PoolEntry> load_pool(const fs::path& path) {
  auto table = read_csv(path);
  const auto word_col = table.require("word");
  const auto cols = category_columns(table);
  if (cols.empty()) throw ParseError(path.string() + ": no Category1 column");
  std::vector<PoolEntry> pool;
  for (const auto& row : table.rows()) {
    PoolEntry e{row[word_col], {}};
    for (auto c : cols)
      if (!row[c].empty()) e.path.labels.push_back(row[c]);
    pool.push_back(std::move(e));
  }
  return pool;
}

}  // namespace detail

class Driver {
 public:
  Driver(std::ostream& out, std::ostream& err, Environment env)
      : out_(out), err_(err), env_(std::move(env)) {}

  int run(std::vector<std::string> args) {
    CLI::App app{"Hierarchical exam-item classification against a blueprint"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // validate
    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Lint a blueprint file");
    validate->add_option("blueprint", validate_path, "Blueprint file")->required();

    // classify
    RunConfig rc;
    std::optional<std::string> config_path, bp_path, items_path, ex_path, out_path,
        oracle_path, modes, backend;
    std::optional<double> noise;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> concurrency;
    bool dry_run = false;
    detail::LlmFlags llm_flags;
    auto* classify = app.add_subcommand("classify", "Classify items through a blueprint");
    classify->add_option("--config", config_path, "Run configuration (YAML/JSON)");
    classify->add_option("--blueprint", bp_path, "Blueprint file");
    classify->add_option("--items", items_path, "Items (CSV or JSONL)");
    classify->add_option("--exemplars", ex_path, "Exemplar CSV (Text,Category)");
    classify->add_option("--output", out_path, "Result CSV path");
    classify->add_option("--modes", modes, "Per-level modes, e.g. few_shot,zero_shot");
    classify->add_option("--backend", backend, "mock or llm")
        ->check(CLI::IsMember({"mock", "llm"}));
    classify->add_option("--oracle", oracle_path, "Ground truth for the mock backend");
    classify->add_option("--noise", noise, "Mock error rate")->check(CLI::Range(0.0, 1.0));
    classify->add_option("--seed", seed, "Mock noise seed");
    classify->add_option("--concurrency", concurrency, "Items in flight")
        ->check(CLI::PositiveNumber);
    classify->add_flag("--dry-run", dry_run, "Print the call plan without classifying");
    llm_flags.add_to(*classify);

    // simulate
    std::size_t sim_sample = 10, sim_reps = 100, sim_workers = 1;
    std::uint64_t sim_seed = 42;
    double sim_noise = 0.0;
    std::vector<std::size_t> sim_noise_levels;
    std::string sim_backend = "mock";
    std::optional<std::string> sim_bp, sim_pool, sim_out, sim_modes;
    detail::LlmFlags sim_llm;
    auto* simulate = app.add_subcommand("simulate", "Repeated-subsampling accuracy study");
    simulate->add_option("--sample", sim_sample, "Words per repetition")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--repetitions", sim_reps, "Number of repetitions")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim_seed, "Sampling seed");
    simulate->add_option("--noise", sim_noise, "Mock error rate")->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--noise-levels", sim_noise_levels, "Levels receiving noise")
        ->delimiter(',');
    simulate->add_option("--backend", sim_backend, "mock or llm")
        ->check(CLI::IsMember({"mock", "llm"}));
    simulate->add_option("--blueprint", sim_bp, "Blueprint (default: built-in fixture)");
    simulate->add_option("--pool", sim_pool, "Word pool CSV (word,Category1..N)");
    simulate->add_option("--modes", sim_modes, "Per-level modes");
    simulate->add_option("--workers", sim_workers, "Parallel repetitions")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--output", sim_out, "Report JSON path");
    sim_llm.add_to(*simulate);

    // score
    std::string pred_path, ref_path;
    std::optional<std::string> score_out;
    auto* score = app.add_subcommand("score", "Score predictions against references");
    score->add_option("--predictions", pred_path, "Result CSV")->required();
    score->add_option("--references", ref_path, "Reference CSV or JSONL")->required();
    score->add_option("--output", score_out, "Report JSON path");

    // multilabel
    std::string ml_items, ml_labels, ml_out;
    std::size_t ml_max = 1, ml_concurrency = 1;
    std::string ml_backend = "mock";
    std::optional<std::string> ml_oracle;
    detail::LlmFlags ml_llm;
    auto* multi = app.add_subcommand("multilabel", "Flat multi-label classification");
    multi->add_option("--items", ml_items, "Items (CSV or JSONL)")->required();
    multi->add_option("--labels", ml_labels, "Blueprint whose roots are the labels")
        ->required();
    multi->add_option("--max-labels", ml_max, "Most labels per item")->required()
        ->check(CLI::PositiveNumber);
    multi->add_option("--output", ml_out, "Result CSV path")->required();
    multi->add_option("--backend", ml_backend, "mock or llm")
        ->check(CLI::IsMember({"mock", "llm"}));
    multi->add_option("--oracle", ml_oracle, "CSV id,labels (';'-separated) for the mock");
    multi->add_option("--concurrency", ml_concurrency, "Items in flight")
        ->check(CLI::PositiveNumber);
    ml_llm.add_to(*multi);

    try {
      std::reverse(args.begin(), args.end());
      app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out_, err_);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out_, err_);
    } catch (const CLI::ParseError& e) {
      app.exit(e, out_, err_);
      return kConfigError;
    }

    try {
      if (*validate) return run_validate(validate_path);
      if (*classify) {
        if (config_path) rc = load_run_config(*config_path);
        if (bp_path) rc.blueprint = *bp_path;
        if (items_path) rc.items = *items_path;
        if (ex_path) rc.exemplars = fs::path(*ex_path);
        if (out_path) rc.output = *out_path;
        if (modes) rc.modes = parse_modes(*modes);
        if (backend) rc.backend = *backend;
        if (oracle_path) rc.oracle = fs::path(*oracle_path);
        if (noise) rc.noise = *noise;
        if (seed) rc.seed = *seed;
        if (concurrency) rc.concurrency = *concurrency;
        if (rc.backend == "mock" && llm_flags.any())
          throw ConfigError("LLM options given with --backend mock");
        llm_flags.apply(rc.llm);
        return run_classify(rc, dry_run);
      }
      if (*simulate) {
        if (sim_backend == "mock" && sim_llm.any())
          throw ConfigError("LLM options given with --backend mock");
        if (sim_backend == "llm" && (sim_noise > 0.0 || !sim_noise_levels.empty()))
          throw ConfigError("--noise applies to the mock backend only");
        SimulationSpec spec;
        if (sim_bp) spec.blueprint = load_blueprint(*sim_bp);
        if (sim_pool) spec.pool = detail::load_pool(*sim_pool);
        spec.sample_size = sim_sample;
        spec.repetitions = sim_reps;
        spec.seed = sim_seed;
        spec.backend = sim_backend;
        spec.workers = sim_workers;
        if (sim_modes) {
          auto ms = parse_modes(*sim_modes);
          for (std::size_t k = 0; k < ms.size(); ++k) spec.levels.push_back({k + 1, ms[k]});
        }
        LlmConfig llm = LlmConfig::from_env();
        sim_llm.apply(llm);
        return run_simulate(spec, sim_noise, sim_noise_levels, llm, sim_out);
      }
      if (*score) return run_score(pred_path, ref_path, score_out);
      if (*multi) {
        if (ml_backend == "mock" && ml_llm.any())
          throw ConfigError("LLM options given with --backend mock");
        if (ml_backend == "llm" && ml_oracle)
          throw ConfigError("--oracle applies to the mock backend only");
        LlmConfig llm = LlmConfig::from_env();
        ml_llm.apply(llm);
        return run_multilabel(ml_items, ml_labels, ml_max, ml_out, ml_backend,
                              ml_oracle, llm, ml_concurrency);
      }
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kConfigError;
    }
    return kConfigError;
  }

 private:
  int run_validate(const std::string& path) {
    auto bp = load_blueprint(path);
    out_ << "title: " << (bp.title().empty() ? "(untitled)" : bp.title()) << "\n";
    out_ << "depth: " << bp.depth() << "\n";
    out_ << "level counts: " << detail::level_counts(bp) << "\n";
    out_ << "leaves: " << leaf_paths(bp).size() << "\n";
    return kOk;
  }

  int run_classify(RunConfig rc, bool dry_run) {
    if (rc.blueprint.empty()) throw ConfigError("no blueprint given");
    if (rc.items.empty()) throw ConfigError("no items given");
    if (!dry_run && rc.output.empty()) throw ConfigError("no output path given");
    if (rc.backend != "mock" && rc.backend != "llm")
      throw ConfigError("unknown backend '" + rc.backend + "'");
    if (rc.backend == "llm" && (rc.oracle || rc.noise > 0.0))
      throw ConfigError("--oracle and --noise apply to the mock backend only");
    if (rc.backend == "mock" && !rc.oracle && !dry_run)
      throw ConfigError("the mock backend needs --oracle");
    if (rc.concurrency < 1) throw ConfigError("concurrency must be positive");

    auto bp = load_blueprint(rc.blueprint);
    if (rc.exemplars) bp = attach_exemplars(bp, load_exemplars(*rc.exemplars));
    auto items = load_items(rc.items);
    std::vector<LevelConfig> levels;
    if (rc.modes.empty()) {
      levels = default_levels(bp);
    } else {
      if (rc.modes.size() != bp.depth())
        throw ConfigError("got " + std::to_string(rc.modes.size()) +
                          " modes for a blueprint of depth " +
                          std::to_string(bp.depth()));
      for (std::size_t k = 0; k < rc.modes.size(); ++k)
        levels.push_back({k + 1, rc.modes[k]});
    }
    validate_levels(bp, levels);

    if (dry_run) {
      out_ << "items: " << items.size() << "\n";
      for (std::size_t k = 1; k <= bp.depth(); ++k)
        out_ << "level " << k << ": " << bp.labels_at_level(k).size()
             << " categories, up to " << detail::max_fan_out(bp, k)
             << " candidates per decision ("
             << to_string(mode_for(levels, k)) << ")\n";
      const auto per_item = max_calls_per_item(bp);
      out_ << "estimated backend calls: " << items.size() * per_item
           << " (upper bound; " << per_item << " per item)\n";
      return kOk;
    }

    std::unique_ptr<Backend> backend;
    if (rc.backend == "mock") {
      MockBackend::Options opts;
      opts.noise_rate = rc.noise;
      opts.seed = rc.seed;
      auto mock = std::make_unique<MockBackend>(opts);
      std::unordered_map<std::string, CategoryPath> truth;
      for (auto& r : load_references(*rc.oracle)) truth[r.item_id] = std::move(r.path);
      for (const auto& item : items)
        if (auto it = truth.find(item.id); it != truth.end())
          mock->add_truth(item.combined, it->second);
      backend = std::move(mock);
    } else {
      backend = detail::make_llm(rc.llm, env_);
    }

    auto records = classify_batch(bp, items, levels, *backend, rc.concurrency);
    write_results(records, items, bp.depth(), rc.output);
    std::size_t failed = 0;
    for (const auto& r : records)
      if (!r.ok()) ++failed;
    out_ << "classified " << items.size() << " items (" << failed
         << " failed); wrote " << rc.output.string() << "\n";
    return failed ? kItemFailures : kOk;
  }

  int run_simulate(const SimulationSpec& spec, double noise,
                   const std::vector<std::size_t>& noise_levels,
                   const LlmConfig& llm, const std::optional<std::string>& out) {
    std::unique_ptr<Backend> backend;
    if (spec.backend == "mock") {
      MockBackend::Options opts{noise, spec.seed, noise_levels};
      backend = std::make_unique<MockBackend>(oracle_backend(spec.pool, opts));
    } else {
      backend = detail::make_llm(llm, env_);
    }
    auto report = run_simulation(spec, *backend);
    out_ << summary_table(report);
    if (out) detail::write_json(to_json(report), out, out_);
    return report.failed_items ? kItemFailures : kOk;
  }

  int run_score(const std::string& predictions, const std::string& references,
                const std::optional<std::string>& out) {
    std::vector<ClassificationRecord> records;
    for (const auto& row : read_results(predictions))
      records.push_back({row.item_id, row.path(), {}, std::nullopt});
    auto refs = load_references(references);
    detail::write_json(to_json(score_records(records, refs)), out, out_);
    return kOk;
  }

  int run_multilabel(const std::string& items_path, const std::string& labels_path,
                     std::size_t max_labels, const std::string& out_path,
                     const std::string& backend_name,
                     const std::optional<std::string>& oracle, const LlmConfig& llm,
                     std::size_t concurrency) {
    auto items = load_items(items_path);
    auto labels = load_blueprint(labels_path);
    auto candidates = labels.children_of({});
    std::unique_ptr<Backend> backend;
    if (backend_name == "mock") {
      if (!oracle) throw ConfigError("the mock backend needs --oracle");
      auto table = read_csv(*oracle);
      const auto id_col = table.require("id");
      const auto labels_col = table.require("labels");
      std::unordered_map<std::string, CategoryPath> truth;
      for (const auto& row : table.rows()) {
        CategoryPath p;
        std::string_view rest = row[labels_col];
        while (!rest.empty()) {
          auto semi = rest.find(';');
          auto part = text::trim(rest.substr(0, semi));
          if (!part.empty()) p.labels.emplace_back(part);
          rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
        }
        truth[row[id_col]] = std::move(p);
      }
      auto mock = std::make_unique<MockBackend>();
      for (const auto& item : items)
        if (auto it = truth.find(item.id); it != truth.end())
          mock->add_truth(item.combined, it->second);
      backend = std::move(mock);
    } else {
      backend = detail::make_llm(llm, env_);
    }
    auto records = classify_multi_batch(items, candidates, max_labels, *backend, concurrency);
    std::string table = csv_line(std::vector<std::string>{"id", "text", "labels", "dropped", "failure"});
    std::size_t failed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.failure) ++failed;
      table += csv_line(std::vector<std::string>{
          r.item_id, items[i].combined, text::join(r.decision.chosen, ";"),
          text::join(r.decision.dropped_lines, ";"), r.failure.value_or("")});
    }
    write_atomically(out_path, table);
    out_ << "classified " << items.size() << " items (" << failed
         << " failed); wrote " << out_path << "\n";
    return failed ? kItemFailures : kOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  Environment env_;
};

inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr, Environment env = {}) {
  return Driver(out, err, std::move(env)).run(std::move(args));
}

}  // namespace blueprint::cli
