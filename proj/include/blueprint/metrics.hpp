#pragma once

// Scoring of predicted category paths against reference paths.

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "blueprint/blueprint.hpp"
#include "blueprint/error.hpp"
#include "blueprint/pipeline.hpp"

namespace blueprint {

/// Label scored in place of a level the classifier never reached.
inline constexpr std::string_view kMissingLabel = "\xE2\x8A\xA5";  // U+22A5

struct LabeledPair {
  std::string predicted;
  std::string reference;
};

namespace detail {

struct ClassCounts {
  std::size_t true_pos = 0;
  std::size_t predicted = 0;
  std::size_t support = 0;
};

inline std::map<std::string, ClassCounts> class_counts(
    std::span<const LabeledPair> pairs) {
  std::map<std::string, ClassCounts> counts;
  for (const auto& p : pairs) {
    ++counts[p.reference].support;
    ++counts[p.predicted].predicted;
    if (p.predicted == p.reference) ++counts[p.reference].true_pos;
  }
  return counts;
}

inline double f1_of(const ClassCounts& c) {
  const double precision =
      c.predicted ? static_cast<double>(c.true_pos) / c.predicted : 0.0;
  const double recall =
      c.support ? static_cast<double>(c.true_pos) / c.support : 0.0;
  return precision + recall > 0.0
             ? 2.0 * precision * recall / (precision + recall)
             : 0.0;
}

inline void require_pairs(std::span<const LabeledPair> pairs) {
  if (pairs.empty()) throw ValidationError("no labeled pairs to score");
}

}  // namespace detail

/// Per-class F1 averaged with weights proportional to reference support.
inline double weighted_f1(std::span<const LabeledPair> pairs) {
  detail::require_pairs(pairs);
  double total = 0.0;
  for (const auto& [label, c] : detail::class_counts(pairs))
    if (c.support) total += static_cast<double>(c.support) * detail::f1_of(c);
  return total / static_cast<double>(pairs.size());
}

/// Unweighted mean of per-class F1 over every label seen on either side.
inline double macro_f1(std::span<const LabeledPair> pairs) {
  detail::require_pairs(pairs);
  auto counts = detail::class_counts(pairs);
  double total = 0.0;
  for (const auto& [label, c] : counts) total += detail::f1_of(c);
  return total / static_cast<double>(counts.size());
}

inline double accuracy(std::span<const LabeledPair> pairs) {
  detail::require_pairs(pairs);
  auto hits = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) {
    return p.predicted == p.reference;
  });
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

struct ConditionalAgreement {
  std::size_t level = 2;
  /// 1.0 when no item is eligible; check `defined`.
  double agreement = 1.0;
  std::size_t eligible = 0;
  bool defined = false;
};

/// Agreement at level k among items that agree at every shallower level.
/// A level missing on either side never agrees.
inline ConditionalAgreement conditional_agreement(
    std::span<const CategoryPath> predicted,
    std::span<const CategoryPath> reference, std::size_t k) {
  if (k < 2) throw std::invalid_argument("conditional agreement needs level >= 2");
  if (predicted.size() != reference.size())
    throw std::invalid_argument("predicted and reference lists differ in length");
  auto agree_at = [](const CategoryPath& a, const CategoryPath& b,
                     std::size_t level) {
    return a.size() >= level && b.size() >= level &&
           a[level - 1] == b[level - 1];
  };
  ConditionalAgreement out;
  out.level = k;
  std::size_t agreeing = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    bool eligible = true;
    for (std::size_t l = 1; l < k && eligible; ++l)
      eligible = agree_at(predicted[i], reference[i], l);
    if (!eligible) continue;
    ++out.eligible;
    if (agree_at(predicted[i], reference[i], k)) ++agreeing;
  }
  out.defined = out.eligible > 0;
  out.agreement = out.defined ? static_cast<double>(agreeing) / out.eligible : 1.0;
  return out;
}

struct LevelScore {
  std::size_t level = 1;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  std::vector<LevelScore> per_level;
  std::vector<ConditionalAgreement> conditional;
  /// Mean of the per-level weighted F1 values (the headline number).
  double mean_weighted_f1 = 0.0;
  /// Weighted F1 on each item's deepest reference level only.
  double leaf_weighted_f1 = 0.0;
  /// Weighted F1 over the pairs of all levels pooled together.
  double pooled_weighted_f1 = 0.0;
};

struct ReferencePath {
  std::string item_id;
  CategoryPath path;
};

/// Scoring pairs at `level` (1-based) for every item whose reference reaches
/// that level. Unreached predicted levels score as kMissingLabel.
inline std::vector<LabeledPair> pairs_at_level(
    std::span<const CategoryPath> predicted,
    std::span<const CategoryPath> reference, std::size_t level) {
  std::vector<LabeledPair> out;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i].size() < level) continue;
    out.push_back({predicted[i].size() >= level ? predicted[i][level - 1]
                                                : std::string(kMissingLabel),
                   reference[i][level - 1]});
  }
  return out;
}

/// Scores aligned path lists (same item at the same index).
inline MetricsReport score_paths(std::span<const CategoryPath> predicted,
                                 std::span<const CategoryPath> reference) {
  if (predicted.size() != reference.size())
    throw ValidationError("predicted and reference lists differ in length");
  if (reference.empty()) throw ValidationError("no items to score");
  std::size_t levels = 0;
  for (const auto& r : reference) levels = std::max(levels, r.size());
  if (levels == 0) throw ValidationError("reference paths are all empty");

  MetricsReport rep;
  std::vector<LabeledPair> pooled, leaf;
  for (std::size_t k = 1; k <= levels; ++k) {
    auto pairs = pairs_at_level(predicted, reference, k);
    if (pairs.empty()) continue;
    rep.per_level.push_back({k, weighted_f1(pairs), macro_f1(pairs),
                             accuracy(pairs), pairs.size()});
    for (const auto& p : pairs) {
      auto tag = std::to_string(k) + ":";
      pooled.push_back({tag + p.predicted, tag + p.reference});
    }
    if (k >= 2) rep.conditional.push_back(conditional_agreement(predicted, reference, k));
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto n = reference[i].size();
    if (n == 0) continue;
    leaf.push_back({predicted[i].size() >= n ? predicted[i][n - 1]
                                             : std::string(kMissingLabel),
                    reference[i][n - 1]});
  }
  double sum = 0.0;
  for (const auto& l : rep.per_level) sum += l.weighted_f1;
  rep.mean_weighted_f1 = sum / static_cast<double>(rep.per_level.size());
  rep.leaf_weighted_f1 = weighted_f1(leaf);
  rep.pooled_weighted_f1 = weighted_f1(pooled);
  return rep;
}

/// Scores pipeline records against references matched by item id. A failed
/// record's path stops before the failing level, so it scores as wrong there
/// and below.
inline MetricsReport score_records(std::span<const ClassificationRecord> records,
                                   std::span<const ReferencePath> references) {
  if (records.size() != references.size())
    throw ValidationError("got " + std::to_string(records.size()) +
                          " records but " + std::to_string(references.size()) +
                          " references");
  std::unordered_map<std::string, const CategoryPath*> by_id;
  for (const auto& r : references)
    if (!by_id.emplace(r.item_id, &r.path).second)
      throw ValidationError("duplicate reference id '" + r.item_id + "'");
  std::vector<CategoryPath> predicted, reference;
  predicted.reserve(records.size());
  reference.reserve(records.size());
  for (const auto& rec : records) {
    auto it = by_id.find(rec.item_id);
    if (it == by_id.end())
      throw ValidationError("no reference for item id '" + rec.item_id + "'");
    predicted.push_back(rec.path);
    reference.push_back(*it->second);
  }
  return score_paths(predicted, reference);
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  auto levels = nlohmann::ordered_json::array();
  for (const auto& l : r.per_level)
    levels.push_back({{"level", l.level},
                      {"weighted_f1", l.weighted_f1},
                      {"macro_f1", l.macro_f1},
                      {"accuracy", l.accuracy},
                      {"support", l.support}});
  auto cond = nlohmann::ordered_json::array();
  for (const auto& c : r.conditional)
    cond.push_back({{"level", c.level},
                    {"agreement", c.agreement},
                    {"eligible", c.eligible},
                    {"defined", c.defined}});
  j["per_level"] = std::move(levels);
  j["conditional"] = std::move(cond);
  j["mean_weighted_f1"] = r.mean_weighted_f1;
  j["leaf_weighted_f1"] = r.leaf_weighted_f1;
  j["pooled_weighted_f1"] = r.pooled_weighted_f1;
  return j;
}

}  // namespace blueprint
