#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>

#include "blueprint/error.hpp"

namespace blueprint {

struct LlmConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::optional<std::string> organization;
  std::string model = "gpt-4-1106-preview";
  double temperature = 0.0;
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
  std::size_t max_in_flight = 4;
  /// First retry waits about this long; each further retry doubles it.
  std::chrono::milliseconds backoff_base{1'000};
  /// Relative jitter applied to every backoff delay (0.2 = +/-20%).
  double backoff_jitter = 0.2;

  void validate() const {
    if (base_url.empty()) throw ConfigError("base URL is empty");
    if (model.empty()) throw ConfigError("model id is empty");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
    if (max_retries < 0) throw ConfigError("max retries must be >= 0");
    if (max_in_flight < 1) throw ConfigError("max in-flight must be >= 1");
    if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
    if (backoff_jitter < 0.0 || backoff_jitter >= 1.0)
      throw ConfigError("backoff jitter must lie in [0, 1)");
  }

  /// Defaults overlaid with BLUEPRINT_API_KEY, BLUEPRINT_ORG_ID and
  /// BLUEPRINT_BASE_URL when set.
  static LlmConfig from_env() {
    LlmConfig cfg;
    if (const char* v = std::getenv("BLUEPRINT_API_KEY")) cfg.api_key = v;
    if (const char* v = std::getenv("BLUEPRINT_ORG_ID"); v && *v)
      cfg.organization = v;
    if (const char* v = std::getenv("BLUEPRINT_BASE_URL"); v && *v)
      cfg.base_url = v;
    return cfg;
  }
};

}  // namespace blueprint
