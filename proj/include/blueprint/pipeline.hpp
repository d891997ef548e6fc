#pragma once

// Sequential top-down classification of items through a blueprint.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "blueprint/blueprint.hpp"
#include "blueprint/classify.hpp"
#include "blueprint/error.hpp"

namespace blueprint {

inline constexpr std::string_view kAnswerSeparator = "\n\nAnswer: ";

/// Classifier input: the stem, then the answer key when one is given.
/// Distractor options are never part of the input.
inline std::string combine_text(std::string_view stem,
                                std::optional<std::string_view> answer_key) {
  if (text::trim(stem).empty()) throw ValidationError("item stem is empty");
  std::string out(stem);
  if (answer_key && !text::trim(*answer_key).empty()) {
    out += kAnswerSeparator;
    out += *answer_key;
  }
  return out;
}

struct Item {
  std::string id;
  std::string stem;
  std::optional<std::string> answer_key;
  std::string combined;

  static Item make(std::string id, std::string stem,
                   std::optional<std::string> answer_key = std::nullopt) {
    auto combined = combine_text(
        stem, answer_key ? std::optional<std::string_view>(*answer_key)
                         : std::nullopt);
    return {std::move(id), std::move(stem), std::move(answer_key),
            std::move(combined)};
  }
};

struct LevelConfig {
  std::size_t level = 1;
  Mode mode = Mode::zero_shot;

  friend bool operator==(const LevelConfig&, const LevelConfig&) = default;
};

struct Failure {
  std::size_t level = 0;
  std::string reason;
};

/// Audit trail for one item. `decisions` holds one entry per level reached,
/// including auto-selected levels (flagged, no backend call).
struct ClassificationRecord {
  std::string item_id;
  CategoryPath path;
  std::vector<Decision> decisions;
  std::optional<Failure> failure;

  bool ok() const noexcept { return !failure.has_value(); }

  std::size_t backend_calls() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(decisions.begin(), decisions.end(),
                      [](const Decision& d) { return !d.auto_selected; }));
  }
};

namespace detail {

inline void collect_level(std::span<const BlueprintNode> nodes, std::size_t level,
                          std::size_t k,
                          std::vector<const BlueprintNode*>& out) {
  for (const auto& n : nodes) {
    if (level == k)
      out.push_back(&n);
    else
      collect_level(n.children, level + 1, k, out);
  }
}

inline std::vector<const BlueprintNode*> nodes_at_level(const Blueprint& bp,
                                                        std::size_t k) {
  std::vector<const BlueprintNode*> out;
  collect_level(bp.roots(), 1, k, out);
  return out;
}

inline bool level_has_exemplars(const Blueprint& bp, std::size_t k) {
  auto nodes = nodes_at_level(bp, k);
  return !nodes.empty() &&
         std::all_of(nodes.begin(), nodes.end(),
                     [](const BlueprintNode* n) { return !n->exemplars.empty(); });
}

}  // namespace detail

/// Level 1 is few-shot when every level-1 node has exemplars; all other
/// levels are zero-shot.
inline std::vector<LevelConfig> default_levels(const Blueprint& bp) {
  std::vector<LevelConfig> out;
  for (std::size_t k = 1; k <= bp.depth(); ++k)
    out.push_back({k, (k == 1 && detail::level_has_exemplars(bp, 1))
                          ? Mode::few_shot
                          : Mode::zero_shot});
  return out;
}

/// Throws ConfigError unless `levels` covers 1..depth exactly once each and
/// every few-shot level has exemplars on all of its nodes.
inline void validate_levels(const Blueprint& bp,
                            std::span<const LevelConfig> levels) {
  std::vector<int> seen(bp.depth() + 1, 0);
  for (const auto& lc : levels) {
    if (lc.level < 1 || lc.level > bp.depth())
      throw ConfigError("level " + std::to_string(lc.level) +
                        " is outside the blueprint depth " +
                        std::to_string(bp.depth()));
    if (seen[lc.level]++)
      throw ConfigError("level " + std::to_string(lc.level) +
                        " configured twice");
    if (lc.mode == Mode::few_shot) {
      for (const auto* n : detail::nodes_at_level(bp, lc.level))
        if (n->exemplars.empty())
          throw ConfigError("few_shot at level " + std::to_string(lc.level) +
                            " but '" + n->name + "' has no exemplars");
    }
  }
  for (std::size_t k = 1; k <= bp.depth(); ++k)
    if (!seen[k])
      throw ConfigError("no mode configured for level " + std::to_string(k));
}

inline Mode mode_for(std::span<const LevelConfig> levels, std::size_t k) {
  for (const auto& lc : levels)
    if (lc.level == k) return lc.mode;
  return Mode::zero_shot;
}

/// Walks the blueprint from the roots, one backend decision per level.
/// Never throws for backend problems: they end the walk and are recorded as
/// the record's failure.
inline ClassificationRecord classify_item(const Blueprint& bp, const Item& item,
                                          std::span<const LevelConfig> levels,
                                          Backend& backend,
                                          std::uint64_t item_key = 0) {
  ClassificationRecord rec;
  rec.item_id = item.id;
  for (std::size_t level = 1;; ++level) {
    auto nodes = bp.child_nodes(rec.path);
    if (nodes.empty()) break;
    const auto mode = mode_for(levels, level);
    if (nodes.size() == 1) {
      Decision d;
      d.chosen = nodes.front().name;
      d.candidates_offered = {nodes.front().name};
      d.mode = mode;
      d.level = level;
      d.auto_selected = true;
      rec.path.labels.push_back(d.chosen);
      rec.decisions.push_back(std::move(d));
      continue;
    }
    std::vector<CandidateLabel> candidates;
    candidates.reserve(nodes.size());
    for (const auto& n : nodes) candidates.push_back(n.as_candidate());
    try {
      auto d = backend.classify(item.combined, candidates, mode,
                                CallContext{item_key, level});
      // The chosen label must be one of the offered candidates, whatever the
      // backend claims.
      d.chosen = normalize_label(d.chosen, candidates);
      d.candidates_offered = detail::names_of(candidates);
      d.mode = mode;
      d.level = level;
      rec.path.labels.push_back(d.chosen);
      rec.decisions.push_back(std::move(d));
    } catch (const std::exception& e) {
      rec.failure = Failure{level, e.what()};
      break;
    }
  }
  return rec;
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, std::size_t concurrency, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(concurrency, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
}

}  // namespace detail

/// Classifies items on at most `concurrency` workers. Output order equals
/// input order; item i uses call key i.
inline std::vector<ClassificationRecord> classify_batch(
    const Blueprint& bp, std::span<const Item> items,
    std::span<const LevelConfig> levels, Backend& backend,
    std::size_t concurrency = 1) {
  validate_levels(bp, levels);
  std::vector<ClassificationRecord> out(items.size());
  detail::parallel_for(items.size(), concurrency, [&](std::size_t i) {
    out[i] = classify_item(bp, items[i], levels, backend, i);
  });
  return out;
}

/// Returns a copy of `bp` with exemplars appended to the nodes they name.
/// Labels are matched exactly first, then case-insensitively, anywhere in
/// the tree; a label matching several nodes is rejected as ambiguous.
inline Blueprint attach_exemplars(const Blueprint& bp,
                                  std::span<const Exemplar> table) {
  std::vector<BlueprintNode> roots(bp.roots().begin(), bp.roots().end());
  auto gather = [&](auto&& self, std::vector<BlueprintNode>& nodes,
                    std::string_view label, bool exact,
                    std::vector<BlueprintNode*>& hits) -> void {
    for (auto& n : nodes) {
      if (exact ? n.name == label : text::iequals(n.name, label))
        hits.push_back(&n);
      self(self, n.children, label, exact, hits);
    }
  };
  for (std::size_t row = 0; row < table.size(); ++row) {
    const auto& ex = table[row];
    std::vector<BlueprintNode*> hits;
    gather(gather, roots, ex.label, true, hits);
    if (hits.empty()) gather(gather, roots, ex.label, false, hits);
    const auto where = " (exemplar row " + std::to_string(row + 1) + ")";
    if (hits.empty())
      throw ValidationError("unknown category label '" + ex.label + "'" + where);
    if (hits.size() > 1)
      throw ValidationError("ambiguous category label '" + ex.label +
                            "' matches " + std::to_string(hits.size()) +
                            " nodes" + where);
    hits.front()->exemplars.push_back({ex.text, hits.front()->name});
  }
  return Blueprint(bp.title(), std::move(roots), bp.declared_levels());
}

/// Upper bound on backend calls for one item: the largest number of levels
/// with two or more candidates along any root-to-leaf path.
inline std::size_t max_calls_per_item(const Blueprint& bp) {
  auto walk = [](auto&& self, std::span<const BlueprintNode> nodes) -> std::size_t {
    if (nodes.empty()) return 0;
    std::size_t best = 0;
    for (const auto& n : nodes) best = std::max(best, self(self, n.children));
    return best + (nodes.size() > 1 ? 1 : 0);
  };
  return walk(walk, bp.roots());
}

// ---------------------------------------------------------------------------
// Flat multi-label runs
// ---------------------------------------------------------------------------

struct MultiLabelRecord {
  std::string item_id;
  MultiLabelDecision decision;
  std::optional<std::string> failure;
};

inline std::vector<MultiLabelRecord> classify_multi_batch(
    std::span<const Item> items, std::span<const CandidateLabel> candidates,
    std::size_t max_labels, Backend& backend, std::size_t concurrency = 1) {
  if (candidates.empty()) throw ConfigError("no candidate labels");
  if (max_labels < 1 || max_labels > candidates.size())
    throw ConfigError("max labels must lie in 1.." +
                      std::to_string(candidates.size()));
  std::vector<MultiLabelRecord> out(items.size());
  detail::parallel_for(items.size(), concurrency, [&](std::size_t i) {
    auto& rec = out[i];
    rec.item_id = items[i].id;
    rec.decision.max_labels = max_labels;
    try {
      rec.decision = backend.classify_multi(items[i].combined, candidates,
                                            max_labels, CallContext{i, 1});
    } catch (const std::exception& e) {
      rec.failure = e.what();
    }
  });
  return out;
}

}  // namespace blueprint
