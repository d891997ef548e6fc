// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "blueprint/cli.hpp"
#include "blueprint/llm_client.hpp"
#include "blueprint/simulation.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/stub_server.hpp"
#include "support/tempdir.hpp"

using namespace blueprint;
using namespace std::chrono_literals;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

SimulationReport noisy_study(double p) {
  SimulationSpec spec;
  MockBackend::Options opts;
  opts.noise_rate = p;
  opts.seed = spec.seed;
  auto mock = oracle_backend(spec.pool, opts);
  return run_simulation(spec, mock);
}

Outcome oracle_perfection() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto rep = noisy_study(0.0);
  const double secs = seconds_since(t0);
  o.expect(rep.repetitions.size() == 100, "expected 100 repetitions");
  o.expect(rep.mean_weighted_f1 == 1.0, "mean F1 " + fmt(rep.mean_weighted_f1));
  for (const auto& r : rep.repetitions)
    for (const auto& l : r.per_level)
      if (l.weighted_f1 != 1.0) {
        o.expect(false, "level " + std::to_string(l.level) + " F1 " + fmt(l.weighted_f1));
        return o;
      }
  o.expect(secs < 5.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail = "mean F1 1.0 at all levels in " + fmt(secs) + " s";
  return o;
}

Outcome noise_monotonicity() {
  Outcome o;
  double prev = 2.0;
  std::string trail;
  double level1_at_01 = -1;
  for (double p : {0.0, 0.1, 0.3, 0.5}) {
    auto rep = noisy_study(p);
    o.expect(rep.mean_weighted_f1 <= prev, "F1 rose at p=" + fmt(p));
    prev = rep.mean_weighted_f1;
    trail += (trail.empty() ? "" : " ") + fmt(rep.mean_weighted_f1);
    if (p == 0.1) level1_at_01 = rep.level_means[0].accuracy;
  }
  o.expect(std::abs(level1_at_01 - 0.9) <= 0.03, "level-1 accuracy at p=0.1 is " + fmt(level1_at_01));
  if (o.pass)
    o.detail = "mean F1 " + trail + "; level-1 accuracy at p=0.1 " + fmt(level1_at_01);
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  Rng rng(20240117);
  double worst = 0.0;
  const int cases = 2000;
  for (int i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng.below(12), classes = 1 + rng.below(4);
    std::vector<LabeledPair> pairs;
    for (std::size_t j = 0; j < n; ++j)
      pairs.push_back({"c" + std::to_string(rng.below(classes)),
                       "c" + std::to_string(rng.below(classes))});
    worst = std::max(worst, std::abs(weighted_f1(pairs) -
                                     testing_support::brute_force_weighted_f1(pairs)));
  }
  o.expect(worst <= 1e-12, "max deviation " + fmt(worst));
  std::vector<LabeledPair> hand{{"A", "A"}, {"B", "A"}, {"B", "B"}, {"B", "B"}};
  const double f1 = weighted_f1(hand);
  o.expect(f1 == 0.5 * (2.0 / 3.0) + 0.5 * 0.8, "hand case F1 " + fmt(f1));
  o.expect(std::abs(f1 - 0.7333333333333333) < 1e-15, "hand case F1 " + fmt(f1));
  o.expect(accuracy(hand) == 0.75, "hand case accuracy " + fmt(accuracy(hand)));
  if (o.pass)
    o.detail = std::to_string(cases) + " instances, max deviation " + fmt(worst) +
               "; AABB/ABBB F1 0.733333, accuracy 0.75";
  return o;
}

Outcome path_validity() {
  Outcome o;
  Rng rng(4242);
  const int blueprints = 600;
  std::size_t records = 0;
  for (int b = 0; b < blueprints && o.pass; ++b) {
    auto bp = testing_support::random_blueprint(rng, 5, 6);
    MockBackend mock;
    std::vector<Item> items;
    std::vector<CategoryPath> truth;
    for (int i = 0; i < 4; ++i) {
      auto path = testing_support::random_leaf_path(bp, rng);
      items.push_back(Item::make(std::to_string(i), "item " + std::to_string(i)));
      mock.add_truth(items.back().combined, path);
      truth.push_back(path);
    }
    std::vector<LevelConfig> levels;
    for (std::size_t k = 1; k <= bp.depth(); ++k) levels.push_back({k, Mode::zero_shot});
    auto recs = classify_batch(bp, items, levels, mock);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& rec = recs[i];
      ++records;
      o.expect(rec.ok() && rec.path == truth[i], "blueprint " + std::to_string(b) + " item " +
                                                     std::to_string(i) + " missed its oracle path");
      for (std::size_t k = 1; k <= rec.path.size(); ++k)
        o.expect(bp.is_valid(rec.path.prefix(k)), "broken chain in blueprint " + std::to_string(b));
      o.expect(rec.decisions.size() == rec.path.size(), "decision count mismatch");
      for (std::size_t k = 0; k < rec.decisions.size(); ++k)
        o.expect(rec.decisions[k].candidates_offered ==
                     detail::names_of(children_of(bp, rec.path.prefix(k))),
                 "candidate set differs from children at level " + std::to_string(k + 1));
    }
  }
  if (o.pass)
    o.detail = std::to_string(blueprints) + " blueprints, " + std::to_string(records) +
               " records, all chains valid";
  return o;
}

Outcome determinism() {
  Outcome o;
  testing_support::TempDir dir;
  auto bp = fixture_blueprint();
  auto pool = synthetic_pool(bp, 200, 77);
  std::vector<Item> items;
  for (std::size_t i = 0; i < pool.size(); ++i)
    items.push_back(Item::make(std::to_string(i + 1), pool[i].word));
  MockBackend::Options opts;
  opts.noise_rate = 0.2;
  opts.seed = 99;
  auto mock = oracle_backend(pool, opts);
  auto levels = default_levels(bp);
  auto a = dir.path() / "c1.csv", b = dir.path() / "c8.csv";
  write_results(classify_batch(bp, items, levels, mock, 1), items, bp.depth(), a);
  write_results(classify_batch(bp, items, levels, mock, 8), items, bp.depth(), b);
  o.expect(testing_support::slurp(a) == testing_support::slurp(b), "result files differ");
  o.expect(testing_support::slurp(audit_path_for(a)) == testing_support::slurp(audit_path_for(b)),
           "audit files differ");

  auto sim = [] {
    SimulationSpec spec;
    spec.workers = 4;
    MockBackend::Options m;
    m.noise_rate = 0.3;
    m.seed = spec.seed;
    auto backend = oracle_backend(spec.pool, m);
    return to_json(run_simulation(spec, backend)).dump();
  };
  o.expect(sim() == sim(), "simulation reports differ");
  if (o.pass) o.detail = "200 items identical at concurrency 1 and 8; simulation reports identical";
  return o;
}

Outcome normalization() {
  Outcome o;
  std::vector<CandidateLabel> cd{{"Cat", std::nullopt, {}}, {"Dog", std::nullopt, {}}};
  std::vector<CandidateLabel> ap{{"Animal", std::nullopt, {}}, {"Plant", std::nullopt, {}}};
  struct Row {
    std::string raw;
    const std::vector<CandidateLabel>* cands;
    std::string expected;
  };
  const std::vector<Row> table{{"Cat. Defination: a small feline", &cd, "Cat"},
                               {"Cat.", &cd, "Cat"},
                               {"Cat", &cd, "Cat"},
                               {"animal.", &ap, "Animal"},
                               {"PLANT", &ap, "Plant"},
                               {"Catdog", &cd, ""},
                               {"Fungus", &ap, ""}};
  for (const auto& r : table) {
    auto got = try_normalize_label(r.raw, *r.cands);
    if (r.expected.empty()) {
      bool threw = false;
      try {
        normalize_label(r.raw, *r.cands);
      } catch (const UnresolvableOutput&) {
        threw = true;
      }
      o.expect(threw && !got, "'" + r.raw + "' should be unresolvable");
    } else {
      o.expect(got == r.expected, "'" + r.raw + "' gave '" + got.value_or("<none>") + "'");
    }
  }
  if (o.pass) o.detail = std::to_string(table.size()) + " cases";
  return o;
}

Outcome wire_protocol() {
  Outcome o;
  testing_support::StubServer server;
  o.expect(server.base_url().rfind("http://127.0.0.1:", 0) == 0, "stub is not on loopback");
  server.script({{429, "{}"}, {200, "animal."}});
  std::vector<std::chrono::milliseconds> sleeps;
  LlmConfig cfg;
  cfg.base_url = server.base_url();
  cfg.api_key = "acceptance";
  cfg.max_in_flight = 2;
  cfg.timeout = 10s;
  LlmClient client(cfg, nullptr, [&](auto d) { sleeps.push_back(d); });
  std::vector<CandidateLabel> ap{{"Animal", "Feeds on organic matter", {}},
                                 {"Plant", "Photosynthesizes", {}}};
  auto first = llm_classify("Meow", ap, Mode::zero_shot, client);
  o.expect(first.decision.chosen == "Animal", "chose " + first.decision.chosen);
  o.expect(first.record.attempts == 2, "429 not retried");
  o.expect(sleeps.size() == 1 && sleeps[0] >= 800ms && sleeps[0] <= 1200ms, "no backoff before retry");

  auto seen = server.seen();
  o.expect(seen.size() == 2, "expected 2 requests");
  if (!seen.empty()) {
    const auto& body = seen.back().body;
    o.expect(seen.back().path == "/v1/chat/completions", "path " + seen.back().path);
    o.expect(body.is_object() && body["temperature"] == 0.0, "temperature not 0");
    o.expect(body.contains("model") && body["messages"].size() == 2 &&
                 body["messages"][0]["role"] == "system" && body["messages"][1]["role"] == "user",
             "malformed request body");
    o.expect(seen.back().authorization == "Bearer acceptance", "missing bearer token");
  }

  server.fallback([](const auto&) { return testing_support::StubServer::Reply{200, "Plant", 30ms}; });
  std::vector<std::jthread> workers;
  for (int t = 0; t < 8; ++t)
    workers.emplace_back([&] { client.classify("Rose", ap, Mode::zero_shot, {}); });
  workers.clear();
  o.expect(server.peak_concurrency() <= 2,
           "peak in-flight " + std::to_string(server.peak_concurrency()) + " > 2");
  o.expect(client.requests_sent() == server.seen().size(), "requests escaped the stub");
  if (o.pass)
    o.detail = "temperature 0, 429 retried after " + std::to_string(sleeps[0].count()) +
               " ms, peak in-flight " + std::to_string(server.peak_concurrency()) +
               " (limit 2), all requests on loopback";
  return o;
}

Outcome large_blueprint_rehearsal() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  testing_support::TempDir dir;
  std::size_t counts[] = {5, 57, 212};
  auto bp = synthetic_blueprint(counts, 10);
  auto pool = synthetic_pool(bp, 200, 2024);
  std::string items = "id,stem\n", refs = "id,Category1,Category2,Category3\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto id = std::to_string(i + 1);
    items += csv_line(std::vector<std::string>{id, pool[i].word});
    refs += csv_line(std::vector<std::string>{id, pool[i].path[0], pool[i].path[1], pool[i].path[2]});
  }
  auto bp_path = dir.write("blueprint.json", serialize_blueprint(bp));
  auto items_path = dir.write("items.csv", items);
  auto refs_path = dir.write("references.csv", refs);
  auto out = dir.path() / "results.csv";

  // The first level runs few-shot over 5 x 10 exemplars.
  auto prompt = build_prompt(pool[0].word, children_of(bp, {}), Mode::few_shot);
  std::size_t blocks = 0;
  for (auto p = prompt.find("### Example"); p != std::string::npos; p = prompt.find("### Example", p + 1))
    ++blocks;
  o.expect(blocks == 50, "few-shot prompt has " + std::to_string(blocks) + " examples");

  std::ostringstream sink, err;
  int code = cli::run({"classify", "--blueprint", bp_path.string(), "--items", items_path.string(),
                       "--oracle", refs_path.string(), "--noise", "0.1", "--output", out.string()},
                      sink, err);
  o.expect(code == 0 || code == 1, "classify exited " + std::to_string(code) + ": " + err.str());
  std::ostringstream report_out;
  code = cli::run({"score", "--predictions", out.string(), "--references", refs_path.string()},
                  report_out, err);
  o.expect(code == 0, "score exited " + std::to_string(code) + ": " + err.str());
  const double secs = seconds_since(t0);
  if (!o.pass) return o;
  auto report = nlohmann::json::parse(report_out.str());
  o.expect(report["per_level"].size() == 3, "report lacks three levels");
  for (const auto& l : report["per_level"]) o.expect(l["support"] == 200, "support is not 200");
  const auto& cond = report["conditional"];
  o.expect(!cond.empty() && cond[0]["level"] == 2 && cond[0]["defined"] == true,
           "no level-2 conditional agreement");
  o.expect(secs < 30.0, "took " + fmt(secs) + " s");
  if (o.pass)
    o.detail = "mean F1 " + fmt(report["mean_weighted_f1"].get<double>()) +
               ", level-2 conditional " + fmt(cond[0]["agreement"].get<double>()) + " over " +
               std::to_string(cond[0]["eligible"].get<int>()) + " items in " + fmt(secs) + " s";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle perfection", oracle_perfection},
      {"noise monotonicity", noise_monotonicity},
      {"metrics oracle equivalence", metrics_oracle},
      {"path validity fuzz", path_validity},
      {"determinism and concurrency", determinism},
      {"normalization contract", normalization},
      {"wire-protocol conformance", wire_protocol},
      {"large blueprint rehearsal", large_blueprint_rehearsal},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed ? 1 : 0;
}
