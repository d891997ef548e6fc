#include <catch_amalgamated.hpp>

#include <set>

#include "blueprint/simulation.hpp"

using namespace blueprint;

namespace {

SimulationReport run(double noise, std::size_t reps = 100, std::uint64_t seed = 42,
                     std::size_t workers = 1) {
  SimulationSpec spec;
  spec.repetitions = reps;
  spec.seed = seed;
  spec.workers = workers;
  MockBackend::Options opts;
  opts.noise_rate = noise;
  opts.seed = seed;
  auto mock = oracle_backend(spec.pool, opts);
  return run_simulation(spec, mock);
}

}  // namespace

TEST_CASE("fixture pool covers four leaves with five words each", "[simulation]") {
  auto bp = fixture_blueprint();
  auto pool = fixture_pool();
  CHECK(pool.size() == 20);
  std::map<std::string, int> per_leaf;
  for (const auto& e : pool) {
    CHECK(bp.find(e.path)->is_leaf());
    ++per_leaf[e.path.str()];
  }
  CHECK(per_leaf.size() == 4);
  for (const auto& [_, n] : per_leaf) CHECK(n == 5);
}

TEST_CASE("sampling draws distinct indices", "[simulation]") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    auto s = sample_without_replacement(20, 10, rng);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 10);
    for (auto x : s) CHECK(x < 20);
  }
  CHECK(sample_without_replacement(5, 5, rng).size() == 5);
}

TEST_CASE("oracle backend scores perfectly", "[simulation]") {
  auto rep = run(0.0);
  CHECK(rep.repetitions.size() == 100);
  CHECK(rep.mean_weighted_f1 == 1.0);
  CHECK(rep.pooled_weighted_f1 == 1.0);
  CHECK(rep.failed_items == 0);
  REQUIRE(rep.level_means.size() == 3);
  for (const auto& l : rep.level_means) CHECK(l.accuracy == 1.0);
}

TEST_CASE("noise degrades every level monotonically", "[simulation]") {
  std::vector<double> ps{0.0, 0.1, 0.3, 0.5};
  std::vector<SimulationReport> reps;
  for (double p : ps) reps.push_back(run(p));
  for (std::size_t i = 1; i < reps.size(); ++i) {
    CHECK(reps[i].mean_weighted_f1 < reps[i - 1].mean_weighted_f1);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(reps[i].level_means[k].accuracy <= reps[i - 1].level_means[k].accuracy);
  }
  CHECK(reps[1].level_means[0].accuracy == Catch::Approx(0.9).margin(0.03));
}

TEST_CASE("noise confined to the leaves halves leaf accuracy", "[simulation]") {
  SimulationSpec spec;
  MockBackend::Options opts;
  opts.noise_rate = 0.5;
  opts.seed = 42;
  opts.noisy_levels = {3};
  auto mock = oracle_backend(spec.pool, opts);
  auto rep = run_simulation(spec, mock);
  CHECK(rep.level_means[0].accuracy == 1.0);
  CHECK(rep.level_means[1].accuracy == 1.0);
  CHECK(rep.level_means[2].accuracy == Catch::Approx(0.5).margin(0.03));
  CHECK(rep.failed_items == 0);
}

TEST_CASE("same seed gives the same report regardless of workers", "[simulation]") {
  auto a = to_json(run(0.2, 50, 7, 1)).dump();
  auto b = to_json(run(0.2, 50, 7, 4)).dump();
  CHECK(a == b);
  CHECK(a != to_json(run(0.2, 50, 8, 1)).dump());
}

TEST_CASE("simulation rejects impossible specs", "[simulation]") {
  SimulationSpec spec;
  auto mock = oracle_backend(spec.pool, {});
  spec.sample_size = 21;
  CHECK_THROWS_AS(run_simulation(spec, mock), ConfigError);
  spec.sample_size = 0;
  CHECK_THROWS_AS(run_simulation(spec, mock), ConfigError);
  spec.sample_size = 10;
  spec.repetitions = 0;
  CHECK_THROWS_AS(run_simulation(spec, mock), ConfigError);
  spec.repetitions = 1;
  spec.pool.push_back({"Moss", {{"Plant"}}});
  CHECK_THROWS_WITH(run_simulation(spec, mock), Catch::Matchers::ContainsSubstring("Moss"));
}

TEST_CASE("report echoes the spec and tabulates levels", "[simulation]") {
  auto rep = run(0.0, 3);
  auto j = to_json(rep);
  CHECK(j["spec"]["sample_size"] == 10);
  CHECK(j["spec"]["repetitions"] == 3);
  CHECK(j["spec"]["seed"] == 42);
  CHECK(j["repetitions"].size() == 3);
  auto table = summary_table(rep);
  CHECK_THAT(table, Catch::Matchers::ContainsSubstring("mean weighted F1 (mean of repetitions): 1.0000"));
}

TEST_CASE("synthetic blueprint has the requested level sizes", "[simulation]") {
  std::size_t counts[] = {5, 57, 212};
  auto bp = synthetic_blueprint(counts, 10);
  CHECK(bp.depth() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(labels_at_level(bp, k + 1).size() == counts[k]);
  for (const auto& r : bp.roots()) CHECK(r.exemplars.size() == 10);
  CHECK(leaf_paths(bp).size() == 212);
  auto pool = synthetic_pool(bp, 200, 3);
  CHECK(pool.size() == 200);
  for (const auto& e : pool) CHECK(bp.find(e.path)->is_leaf());
  std::size_t bad[] = {3, 2};
  CHECK_THROWS_AS(synthetic_blueprint(bad), ValidationError);
}
