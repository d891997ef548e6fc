#pragma once

// Repeated-subsampling accuracy study on a small fixture hierarchy, plus
// synthetic fixtures for larger rehearsal runs.

#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "blueprint/blueprint.hpp"
#include "blueprint/classify.hpp"
#include "blueprint/metrics.hpp"
#include "blueprint/pipeline.hpp"
#include "blueprint/rng.hpp"

namespace blueprint {

struct PoolEntry {
  std::string word;
  CategoryPath path;
};

/// The Animal/Plant reference hierarchy: 2 roots, 4 groups, 8 leaves.
inline Blueprint fixture_blueprint() {
  auto leaf = [](std::string n) { return BlueprintNode{std::move(n), {}, {}, {}}; };
  auto group = [](std::string n, std::vector<BlueprintNode> c) {
    return BlueprintNode{std::move(n), {}, {}, std::move(c)};
  };
  return Blueprint(
      "Animal and plant example",
      {group("Animal", {group("Mammal", {leaf("Dog"), leaf("Cat")}),
                        group("Bird", {leaf("Eagle"), leaf("Sparrow")})}),
       group("Plant", {group("Tree", {leaf("Oak"), leaf("Pine")}),
                       group("Flower", {leaf("Rose"), leaf("Tulip")})})},
      3);
}

/// Twenty words, five for each of Rose, Tulip, Cat and Dog. The other four
/// leaves only ever appear as distractor candidates.
inline std::vector<PoolEntry> fixture_pool() {
  std::vector<PoolEntry> pool;
  auto add = [&](std::initializer_list<const char*> words, CategoryPath path) {
    for (const char* w : words) pool.push_back({w, path});
  };
  add({"Damask rose", "Floribunda", "Rosehip", "Eglantine", "Tea rose"},
      {{"Plant", "Flower", "Rose"}});
  add({"Darwin hybrid", "Parrot tulip", "Tulipa gesneriana", "Keizerskroon",
       "Triumph tulip"},
      {{"Plant", "Flower", "Tulip"}});
  add({"Meow", "Siamese", "Persian", "Maine Coon", "Purr"},
      {{"Animal", "Mammal", "Cat"}});
  add({"Woof", "Beagle", "Labrador", "Dachshund", "Poodle"},
      {{"Animal", "Mammal", "Dog"}});
  return pool;
}

/// Mock backend whose oracle answers with each pool entry's true path.
inline MockBackend oracle_backend(std::span<const PoolEntry> pool,
                                  MockBackend::Options opts = {}) {
  MockBackend mock(std::move(opts));
  for (const auto& e : pool) mock.add_truth(e.word, e.path);
  return mock;
}

struct SimulationSpec {
  Blueprint blueprint = fixture_blueprint();
  std::vector<PoolEntry> pool = fixture_pool();
  std::size_t sample_size = 10;
  std::size_t repetitions = 100;
  std::uint64_t seed = 42;
  /// Label echoed in the report ("mock" or "llm").
  std::string backend = "mock";
  /// Empty means default_levels(blueprint).
  std::vector<LevelConfig> levels;
  /// Repetitions run in parallel on this many workers.
  std::size_t workers = 1;
};

struct SimulationReport {
  std::vector<MetricsReport> repetitions;
  /// Arithmetic mean over repetitions of each repetition's mean weighted F1.
  double mean_weighted_f1 = 0.0;
  /// Mean weighted F1 with all repetitions' pairs pooled per level.
  double pooled_weighted_f1 = 0.0;
  /// Per-level averages over repetitions.
  std::vector<LevelScore> level_means;
  std::size_t failed_items = 0;
  std::uint64_t seed = 0;
  nlohmann::ordered_json spec_echo;
};

/// Indices of `k` distinct draws from [0, n), by partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t k,
                                                           Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i)
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

inline void validate(const SimulationSpec& spec) {
  if (spec.sample_size < 1) throw ConfigError("sample size must be positive");
  if (spec.repetitions < 1) throw ConfigError("repetitions must be positive");
  if (spec.sample_size > spec.pool.size())
    throw ConfigError("sample size " + std::to_string(spec.sample_size) +
                      " exceeds pool size " + std::to_string(spec.pool.size()));
  for (const auto& e : spec.pool) {
    const auto* node = spec.blueprint.find(e.path);
    if (e.path.empty() || !node || !node->is_leaf())
      throw ConfigError("pool entry '" + e.word + "' has path '" + e.path.str() +
                        "', which is not a leaf path of the blueprint");
  }
}

/// Runs the study. Repetition r samples with a generator seeded from
/// (seed, r) alone and uses call keys (r << 32 | j), so results do not
/// depend on execution order or worker count.
inline SimulationReport run_simulation(const SimulationSpec& spec,
                                       Backend& backend) {
  validate(spec);
  const auto levels =
      spec.levels.empty() ? default_levels(spec.blueprint) : spec.levels;
  validate_levels(spec.blueprint, levels);

  struct RepResult {
    MetricsReport metrics;
    std::vector<CategoryPath> predicted, reference;
    std::size_t failed = 0;
  };
  std::vector<RepResult> reps(spec.repetitions);
  detail::parallel_for(spec.repetitions, spec.workers, [&](std::size_t r) {
    Rng rng(derive_seed(spec.seed, {r}));
    auto picks = sample_without_replacement(spec.pool.size(), spec.sample_size, rng);
    std::vector<ClassificationRecord> records;
    std::vector<ReferencePath> refs;
    for (std::size_t j = 0; j < picks.size(); ++j) {
      const auto& entry = spec.pool[picks[j]];
      auto item = Item::make("r" + std::to_string(r) + "-" + std::to_string(j),
                             entry.word);
      records.push_back(classify_item(spec.blueprint, item, levels, backend,
                                      (std::uint64_t{r} << 32) | j));
      refs.push_back({item.id, entry.path});
    }
    auto& out = reps[r];
    out.metrics = score_records(records, refs);
    for (std::size_t j = 0; j < records.size(); ++j) {
      out.predicted.push_back(records[j].path);
      out.reference.push_back(refs[j].path);
      if (!records[j].ok()) ++out.failed;
    }
  });

  SimulationReport rep;
  rep.seed = spec.seed;
  std::vector<CategoryPath> all_pred, all_ref;
  double sum = 0.0;
  for (auto& r : reps) {
    sum += r.metrics.mean_weighted_f1;
    rep.failed_items += r.failed;
    all_pred.insert(all_pred.end(), r.predicted.begin(), r.predicted.end());
    all_ref.insert(all_ref.end(), r.reference.begin(), r.reference.end());
    for (const auto& l : r.metrics.per_level) {
      if (rep.level_means.size() < l.level) rep.level_means.resize(l.level);
      auto& m = rep.level_means[l.level - 1];
      m.level = l.level;
      m.weighted_f1 += l.weighted_f1;
      m.macro_f1 += l.macro_f1;
      m.accuracy += l.accuracy;
      m.support += l.support;
    }
    rep.repetitions.push_back(std::move(r.metrics));
  }
  const double n = static_cast<double>(spec.repetitions);
  rep.mean_weighted_f1 = sum / n;
  for (auto& m : rep.level_means) {
    m.weighted_f1 /= n;
    m.macro_f1 /= n;
    m.accuracy /= n;
  }
  rep.pooled_weighted_f1 = score_paths(all_pred, all_ref).mean_weighted_f1;

  auto modes = nlohmann::ordered_json::array();
  for (const auto& lc : levels) modes.push_back(std::string(to_string(lc.mode)));
  rep.spec_echo = {{"blueprint", spec.blueprint.title()},
                   {"depth", spec.blueprint.depth()},
                   {"pool_size", spec.pool.size()},
                   {"sample_size", spec.sample_size},
                   {"repetitions", spec.repetitions},
                   {"seed", spec.seed},
                   {"backend", spec.backend},
                   {"modes", modes}};
  return rep;
}

inline nlohmann::ordered_json to_json(const SimulationReport& r) {
  nlohmann::ordered_json j;
  j["spec"] = r.spec_echo;
  j["seed"] = r.seed;
  j["mean_weighted_f1"] = r.mean_weighted_f1;
  j["pooled_weighted_f1"] = r.pooled_weighted_f1;
  j["failed_items"] = r.failed_items;
  auto levels = nlohmann::ordered_json::array();
  for (const auto& l : r.level_means)
    levels.push_back({{"level", l.level},
                      {"weighted_f1", l.weighted_f1},
                      {"macro_f1", l.macro_f1},
                      {"accuracy", l.accuracy}});
  j["level_means"] = std::move(levels);
  auto reps = nlohmann::ordered_json::array();
  for (const auto& m : r.repetitions) reps.push_back(to_json(m));
  j["repetitions"] = std::move(reps);
  return j;
}

inline std::string summary_table(const SimulationReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "repetitions: " << r.repetitions.size() << "  seed: " << r.seed
     << "  failed items: " << r.failed_items << "\n";
  os << "level  weighted_f1  macro_f1  accuracy\n";
  for (const auto& l : r.level_means)
    os << std::setw(5) << l.level << "  " << std::setw(11) << l.weighted_f1
       << "  " << std::setw(8) << l.macro_f1 << "  " << std::setw(8)
       << l.accuracy << "\n";
  os << "mean weighted F1 (mean of repetitions): " << r.mean_weighted_f1 << "\n";
  os << "mean weighted F1 (pooled):              " << r.pooled_weighted_f1 << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

/// Blueprint with exactly `counts[k]` nodes at level k+1. Children are spread
/// as evenly as possible over the parents, earlier parents taking the
/// remainder. Every node gets a definition; level-1 nodes get
/// `root_exemplars` exemplars each.
inline Blueprint synthetic_blueprint(std::span<const std::size_t> counts,
                                     std::size_t root_exemplars = 0) {
  if (counts.empty() || counts[0] == 0)
    throw ValidationError("synthetic blueprint needs at least one root");
  std::vector<std::vector<BlueprintNode>> levels(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (k > 0 && counts[k] < counts[k - 1])
      throw ValidationError("each level needs at least one child per parent");
    for (std::size_t i = 0; i < counts[k]; ++i) {
      BlueprintNode n;
      n.name = "L" + std::to_string(k + 1) + "-" + std::to_string(i + 1);
      n.definition = "Synthetic category " + n.name;
      if (k == 0)
        for (std::size_t e = 0; e < root_exemplars; ++e)
          n.exemplars.push_back(
              {"Prototypical item " + std::to_string(e + 1) + " for " + n.name,
               n.name});
      levels[k].push_back(std::move(n));
    }
  }
  for (std::size_t k = counts.size() - 1; k > 0; --k) {
    auto& parents = levels[k - 1];
    auto& kids = levels[k];
    const std::size_t base = kids.size() / parents.size();
    const std::size_t extra = kids.size() % parents.size();
    std::size_t next = 0;
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const std::size_t take = base + (p < extra ? 1 : 0);
      for (std::size_t c = 0; c < take; ++c)
        parents[p].children.push_back(std::move(kids[next++]));
    }
  }
  return Blueprint("Synthetic blueprint", std::move(levels[0]), counts.size());
}

/// All root-to-leaf paths in document order.
inline std::vector<CategoryPath> leaf_paths(const Blueprint& bp) {
  std::vector<CategoryPath> out;
  CategoryPath cur;
  auto walk = [&](auto&& self, std::span<const BlueprintNode> nodes) -> void {
    for (const auto& n : nodes) {
      cur.labels.push_back(n.name);
      if (n.is_leaf())
        out.push_back(cur);
      else
        self(self, n.children);
      cur.labels.pop_back();
    }
  };
  walk(walk, bp.roots());
  return out;
}

/// `n` items, each assigned a uniformly drawn leaf path as ground truth.
inline std::vector<PoolEntry> synthetic_pool(const Blueprint& bp, std::size_t n,
                                             std::uint64_t seed) {
  auto leaves = leaf_paths(bp);
  Rng rng(seed);
  std::vector<PoolEntry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& path = leaves[rng.below(leaves.size())];
    out.push_back({"Item " + std::to_string(i + 1) + ": a question about " +
                       path.labels.back(),
                   path});
  }
  return out;
}

}  // namespace blueprint
