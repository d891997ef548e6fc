#pragma once

// Backend-agnostic classification contract.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blueprint/blueprint.hpp"
#include "blueprint/candidate.hpp"
#include "blueprint/error.hpp"
#include "blueprint/rng.hpp"
#include "blueprint/text.hpp"

namespace blueprint {

/// Outcome of one single-label decision.
struct Decision {
  std::string chosen;
  std::string raw_output;
  std::vector<std::string> candidates_offered;
  Mode mode = Mode::zero_shot;
  /// Blueprint level this decision was made at (0 outside a hierarchy).
  std::size_t level = 0;
  /// Set when the pipeline picked the only candidate without a backend call.
  bool auto_selected = false;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct MultiLabelDecision {
  std::vector<std::string> chosen;
  std::size_t max_labels = 1;
  std::string raw_output;
  /// Reply lines that matched no candidate and were dropped.
  std::vector<std::string> dropped_lines;

  bool has_warnings() const noexcept { return !dropped_lines.empty(); }
};

/// Where a backend call sits in a run. Mock backends derive their noise
/// stream from it, so results do not depend on scheduling.
struct CallContext {
  std::uint64_t item_key = 0;
  std::size_t level = 1;
};

/// A text classifier. Implementations must be safe for concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Picks one of `candidates`. Throws on transport failure or when the
  /// reply cannot be resolved to a candidate.
  virtual Decision classify(std::string_view text,
                            std::span<const CandidateLabel> candidates,
                            Mode mode, const CallContext& ctx) = 0;

  /// Picks between 0 and `max_labels` of `candidates`.
  virtual MultiLabelDecision classify_multi(
      std::string_view text, std::span<const CandidateLabel> candidates,
      std::size_t max_labels, const CallContext& ctx) = 0;
};

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSystemPrompt =
    "You are an expert in assessment development. You classify exam items "
    "into the categories of an exam blueprint.";

namespace detail {

inline void render_candidates(std::string& out,
                              std::span<const CandidateLabel> candidates) {
  out += "Categories:\n";
  for (const auto& c : candidates) {
    out += "- ";
    out += c.name;
    if (c.definition && !text::trim(*c.definition).empty()) {
      out += ", Definition: ";
      out += text::trim(*c.definition);
    }
    out += '\n';
  }
}

inline void render_examples(std::string& out,
                            std::span<const CandidateLabel> candidates) {
  std::size_t n = 0;
  for (const auto& c : candidates) n += c.exemplars.size();
  if (n == 0) return;
  out += "\nLabeled examples:\n";
  std::size_t i = 0;
  for (const auto& c : candidates) {
    for (const auto& e : c.exemplars) {
      out += "\n### Example " + std::to_string(++i) + "\n";
      out += "Text: ";
      out += e.text;
      out += "\nCategory: ";
      out += c.name;
      out += '\n';
    }
  }
}

inline void render_item(std::string& out, std::string_view item) {
  out += "\nItem to classify:\n<<<\n";
  out += item;
  out += "\n>>>\n\n";
}

}  // namespace detail

/// User message for a single-label decision. Pure function of its inputs.
inline std::string build_prompt(std::string_view item,
                                std::span<const CandidateLabel> candidates,
                                Mode mode) {
  if (candidates.empty()) throw ValidationError("no candidate labels offered");
  std::string out;
  out += "Classify the exam item below into exactly one of the categories.\n\n";
  detail::render_candidates(out, candidates);
  if (mode == Mode::few_shot) detail::render_examples(out, candidates);
  detail::render_item(out, item);
  out +=
      "Reply with exactly one category name from the list above. The name "
      "must be your entire reply, with no explanation or punctuation.";
  return out;
}

/// User message for a multi-label decision.
inline std::string build_multi_prompt(std::string_view item,
                                      std::span<const CandidateLabel> candidates,
                                      std::size_t max_labels) {
  if (candidates.empty()) throw ValidationError("no candidate labels offered");
  std::string out;
  out += "Decide which of the categories apply to the exam item below.\n\n";
  detail::render_candidates(out, candidates);
  detail::render_item(out, item);
  out += "Reply with between 0 and " + std::to_string(max_labels) +
         " category names from the list above, one per line, and nothing "
         "else. Reply with an empty message if no category applies.";
  return out;
}

// ---------------------------------------------------------------------------
// Output normalization
// ---------------------------------------------------------------------------

/// Strips a trailing definition, surrounding whitespace and one final period.
inline std::string clean_output(std::string_view raw) {
  std::size_t cut = std::string_view::npos;
  for (std::string_view marker : {"Defination:", "Definition:"})
    cut = std::min(cut, text::ifind(raw, marker));
  auto s = text::trim(raw.substr(0, cut));
  if (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return std::string(text::trim(s));
}

/// Resolved candidate name, or nullopt when the output is off-menu or
/// ambiguous.
inline std::optional<std::string> try_normalize_label(
    std::string_view raw, std::span<const CandidateLabel> candidates) {
  const auto s = clean_output(raw);
  if (s.empty()) return std::nullopt;
  for (const auto& c : candidates)
    if (c.name == s) return c.name;
  for (const auto& c : candidates)
    if (text::iequals(c.name, s)) return c.name;
  const CandidateLabel* hit = nullptr;
  for (const auto& c : candidates) {
    if (text::ifind(s, c.name) != std::string_view::npos) {
      if (hit) return std::nullopt;
      hit = &c;
    }
  }
  if (hit) return hit->name;
  return std::nullopt;
}

/// Maps a backend reply onto a candidate name in its canonical spelling.
inline std::string normalize_label(std::string_view raw,
                                   std::span<const CandidateLabel> candidates) {
  if (candidates.empty()) throw ValidationError("no candidate labels offered");
  if (auto name = try_normalize_label(raw, candidates)) return *name;
  std::vector<std::string> names;
  for (const auto& c : candidates) names.push_back(c.name);
  throw UnresolvableOutput("output '" + std::string(text::trim(raw)) +
                           "' does not name exactly one of [" +
                           text::join(names, ", ") + "]");
}

/// Resolves a line-per-label reply. Unresolvable lines are dropped and
/// reported; duplicates collapse; at most `max_labels` are kept.
inline MultiLabelDecision normalize_multi(std::string_view raw,
                                          std::span<const CandidateLabel> candidates,
                                          std::size_t max_labels) {
  MultiLabelDecision d;
  d.max_labels = max_labels;
  d.raw_output = std::string(raw);
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    auto line = raw.substr(pos, nl == std::string_view::npos ? raw.size() - pos
                                                             : nl - pos);
    pos = nl == std::string_view::npos ? raw.size() + 1 : nl + 1;
    // Bullet markers are tolerated.
    line = text::trim(line);
    if (line.starts_with("- ") || line.starts_with("* ")) line.remove_prefix(2);
    if (line.empty()) continue;
    auto name = try_normalize_label(line, candidates);
    if (!name) {
      if (!text::iequals(clean_output(line), "none"))
        d.dropped_lines.emplace_back(line);
      continue;
    }
    if (std::find(d.chosen.begin(), d.chosen.end(), *name) != d.chosen.end())
      continue;
    if (d.chosen.size() < max_labels) d.chosen.push_back(*name);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// Error injection for the mock: with probability `rate` a uniformly chosen
/// other candidate replaces the oracle's answer.
struct Noise {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

using TextOracle = std::map<std::string, std::string, std::less<>>;

namespace detail {

inline std::vector<std::string> names_of(std::span<const CandidateLabel> c) {
  std::vector<std::string> out;
  out.reserve(c.size());
  for (const auto& x : c) out.push_back(x.name);
  return out;
}

inline Decision mock_decide(const std::string& oracle_reply,
                            std::span<const CandidateLabel> candidates,
                            Mode mode, const std::optional<Noise>& noise) {
  auto truth = normalize_label(oracle_reply, candidates);
  Decision d;
  d.mode = mode;
  d.candidates_offered = names_of(candidates);
  d.chosen = truth;
  d.raw_output = "[oracle] " + truth;
  if (noise && noise->rate > 0.0 && candidates.size() > 1) {
    Rng rng(noise->seed);
    if (rng.uniform01() < noise->rate) {
      std::vector<const std::string*> others;
      for (const auto& name : d.candidates_offered)
        if (name != truth) others.push_back(&name);
      d.chosen = *others[rng.below(others.size())];
      d.raw_output = "[noise] " + d.chosen;
    }
  }
  return d;
}

}  // namespace detail

/// Single decision from an oracle table, optionally corrupted by seeded noise.
inline Decision mock_classify(std::string_view text,
                              std::span<const CandidateLabel> candidates,
                              const TextOracle& oracle,
                              const std::optional<Noise>& noise = std::nullopt,
                              Mode mode = Mode::zero_shot) {
  if (candidates.empty()) throw ValidationError("no candidate labels offered");
  auto it = oracle.find(text);
  if (it == oracle.end())
    throw UnresolvableOutput("oracle has no answer for '" + std::string(text) +
                             "'");
  return detail::mock_decide(it->second, candidates, mode, noise);
}

/// Deterministic backend answering from ground-truth paths.
///
/// At level k the oracle reply is the k-th label of the item's true path.
/// Noise, when enabled, is drawn from a stream keyed by (seed, item, level)
/// and applied only at the listed levels (all levels when empty).
class MockBackend final : public Backend {
 public:
  struct Options {
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> noisy_levels;
  };

  MockBackend() = default;
  explicit MockBackend(Options opts) : opts_(std::move(opts)) {}

  void add_truth(std::string text, CategoryPath path) {
    truth_.insert_or_assign(std::move(text), std::move(path));
  }

  std::size_t size() const noexcept { return truth_.size(); }

  Decision classify(std::string_view text,
                    std::span<const CandidateLabel> candidates, Mode mode,
                    const CallContext& ctx) override {
    if (candidates.empty()) throw ValidationError("no candidate labels offered");
    auto it = truth_.find(text);
    if (it == truth_.end())
      throw UnresolvableOutput("oracle has no answer for this item");
    const auto& path = it->second;
    if (ctx.level == 0 || ctx.level > path.size())
      throw UnresolvableOutput("oracle path '" + path.str() +
                               "' has no label at level " +
                               std::to_string(ctx.level));
    std::optional<Noise> noise;
    if (noisy(ctx.level))
      noise = Noise{opts_.noise_rate,
                    derive_seed(opts_.seed, {ctx.item_key, ctx.level})};
    auto d = detail::mock_decide(path[ctx.level - 1], candidates, mode, noise);
    d.level = ctx.level;
    return d;
  }

  MultiLabelDecision classify_multi(std::string_view text,
                                    std::span<const CandidateLabel> candidates,
                                    std::size_t max_labels,
                                    const CallContext&) override {
    auto it = truth_.find(text);
    if (it == truth_.end())
      throw UnresolvableOutput("oracle has no answer for this item");
    std::string reply = text::join(it->second.labels, "\n");
    return normalize_multi(reply, candidates, max_labels);
  }

 private:
  bool noisy(std::size_t level) const {
    if (opts_.noise_rate <= 0.0) return false;
    return opts_.noisy_levels.empty() ||
           std::find(opts_.noisy_levels.begin(), opts_.noisy_levels.end(),
                     level) != opts_.noisy_levels.end();
  }

  Options opts_;
  std::map<std::string, CategoryPath, std::less<>> truth_;
};

}  // namespace blueprint
