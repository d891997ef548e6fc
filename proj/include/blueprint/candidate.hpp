#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blueprint/error.hpp"

namespace blueprint {

/// A labeled training example rendered into few-shot prompts.
struct Exemplar {
  std::string text;
  std::string label;

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

/// One option offered to a classifier backend for a single decision.
struct CandidateLabel {
  std::string name;
  std::optional<std::string> definition;
  std::vector<Exemplar> exemplars;

  friend bool operator==(const CandidateLabel&, const CandidateLabel&) = default;
};

enum class Mode { zero_shot, few_shot };

inline std::string_view to_string(Mode m) noexcept {
  return m == Mode::few_shot ? "few_shot" : "zero_shot";
}

/// Accepts "zero_shot"/"few_shot" and the hyphenated spellings.
inline Mode parse_mode(std::string_view s) {
  if (s == "zero_shot" || s == "zero-shot") return Mode::zero_shot;
  if (s == "few_shot" || s == "few-shot") return Mode::few_shot;
  throw ConfigError("unknown classification mode '" + std::string(s) +
                    "' (expected zero_shot or few_shot)");
}

}  // namespace blueprint
