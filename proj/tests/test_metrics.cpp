#include <catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "blueprint/metrics.hpp"
#include "blueprint/rng.hpp"
#include "support/oracles.hpp"

using namespace blueprint;

namespace {

std::vector<LabeledPair> zip(const std::vector<std::string>& truth,
                             const std::vector<std::string>& pred) {
  std::vector<LabeledPair> out;
  for (std::size_t i = 0; i < truth.size(); ++i) out.push_back({pred[i], truth[i]});
  return out;
}

std::vector<LabeledPair> random_pairs(Rng& rng) {
  const std::size_t n = 1 + rng.below(12);
  const std::size_t classes = 1 + rng.below(4);
  std::vector<LabeledPair> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"c" + std::to_string(rng.below(classes)),
                   "c" + std::to_string(rng.below(classes))});
  return out;
}

}  // namespace

TEST_CASE("hand-derived confusion matrix", "[metrics]") {
  auto pairs = zip({"A", "A", "B", "B"}, {"A", "B", "B", "B"});
  // F1_A = 2/3, F1_B = 4/5, equal support.
  const double expected = 0.5 * (2.0 / 3.0) + 0.5 * 0.8;
  CHECK(weighted_f1(pairs) == Catch::Approx(expected).epsilon(1e-15));
  CHECK(weighted_f1(pairs) == Catch::Approx(0.733333333333).epsilon(1e-9));
  CHECK(weighted_f1(pairs) == testing_support::brute_force_weighted_f1(pairs));
  CHECK(accuracy(pairs) == 0.75);
  CHECK(macro_f1(pairs) == Catch::Approx(expected).epsilon(1e-15));
}

TEST_CASE("perfect and fully wrong predictions", "[metrics]") {
  auto right = zip({"A", "B", "B"}, {"A", "B", "B"});
  CHECK(weighted_f1(right) == 1.0);
  CHECK(accuracy(right) == 1.0);
  auto flipped = zip({"A", "B", "A", "B"}, {"B", "A", "B", "A"});
  CHECK(weighted_f1(flipped) == 0.0);
  CHECK(accuracy(flipped) == 0.0);
  CHECK(accuracy(zip({"A"}, {"B"})) == 0.0);
  CHECK_THROWS_AS(weighted_f1({}), ValidationError);
  CHECK_THROWS_AS(accuracy({}), ValidationError);
}

TEST_CASE("weighted F1 matches the confusion-matrix oracle", "[metrics][property]") {
  Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    auto pairs = random_pairs(rng);
    REQUIRE(std::abs(weighted_f1(pairs) - testing_support::brute_force_weighted_f1(pairs)) <= 1e-12);
  }
}

TEST_CASE("scores are perfect exactly when every pair matches", "[metrics][property]") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    auto pairs = random_pairs(rng);
    const bool all = std::all_of(pairs.begin(), pairs.end(),
                                 [](const auto& p) { return p.predicted == p.reference; });
    REQUIRE((weighted_f1(pairs) == 1.0) == all);
    REQUIRE((accuracy(pairs) == 1.0) == all);
  }
}

TEST_CASE("metrics ignore pair order", "[metrics][property]") {
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    auto pairs = random_pairs(rng);
    auto shuffled = pairs;
    for (std::size_t j = shuffled.size(); j > 1; --j)
      std::swap(shuffled[j - 1], shuffled[rng.below(j)]);
    REQUIRE(weighted_f1(shuffled) == Catch::Approx(weighted_f1(pairs)).epsilon(1e-12));
    REQUIRE(macro_f1(shuffled) == Catch::Approx(macro_f1(pairs)).epsilon(1e-12));
    REQUIRE(accuracy(shuffled) == accuracy(pairs));
  }
}

TEST_CASE("conditional agreement", "[metrics]") {
  using P = CategoryPath;
  std::vector<P> ref{{{"A", "X"}}, {{"A", "Y"}}, {{"B", "Z"}}, {{"B", "W"}}};

  SECTION("identical paths agree everywhere") {
    auto c = conditional_agreement(ref, ref, 2);
    CHECK(c.agreement == 1.0);
    CHECK(c.eligible == 4);
    CHECK(c.defined);
  }
  SECTION("three agree at level 1, two of them at level 2") {
    std::vector<P> pred{{{"A", "X"}}, {{"A", "Q"}}, {{"B", "Z"}}, {{"A", "W"}}};
    auto c = conditional_agreement(pred, ref, 2);
    CHECK(c.eligible == 3);
    CHECK(c.agreement == Catch::Approx(2.0 / 3.0));
  }
  SECTION("no level-1 agreement leaves level 2 undefined") {
    std::vector<P> pred{{{"B"}}, {{"B"}}, {{"A"}}, {{"A"}}};
    auto c = conditional_agreement(pred, ref, 2);
    CHECK(c.eligible == 0);
    CHECK_FALSE(c.defined);
  }
  SECTION("missing levels never agree") {
    std::vector<P> pred{{{"A"}}, {{"A", "Y"}}, {{"B", "Z"}}, {{"B", "W"}}};
    auto c = conditional_agreement(pred, ref, 2);
    CHECK(c.eligible == 4);
    CHECK(c.agreement == 0.75);
  }
  CHECK_THROWS_AS(conditional_agreement(ref, ref, 1), std::invalid_argument);
  CHECK_THROWS_AS(conditional_agreement(ref, std::vector<P>{}, 2), std::invalid_argument);
}

TEST_CASE("eligible sets shrink with depth", "[metrics][property]") {
  Rng rng(99);
  for (int i = 0; i < 300; ++i) {
    std::vector<CategoryPath> pred, ref;
    for (int j = 0; j < 10; ++j) {
      CategoryPath a, b;
      for (int k = 0; k < 4; ++k) {
        a.labels.push_back(std::to_string(rng.below(2)));
        b.labels.push_back(std::to_string(rng.below(2)));
      }
      pred.push_back(a);
      ref.push_back(b);
    }
    for (std::size_t k = 3; k <= 4; ++k)
      REQUIRE(conditional_agreement(pred, ref, k).eligible <=
              conditional_agreement(pred, ref, k - 1).eligible);
  }
}

TEST_CASE("score_records treats failed levels as wrong", "[metrics]") {
  std::vector<ReferencePath> refs{{"1", {{"Animal", "Mammal", "Cat"}}},
                                  {"2", {{"Animal", "Mammal", "Dog"}}},
                                  {"3", {{"Plant", "Flower", "Rose"}}},
                                  {"4", {{"Plant", "Flower", "Tulip"}}}};
  std::vector<ClassificationRecord> recs;
  for (const auto& r : refs) recs.push_back({r.item_id, r.path, {}, std::nullopt});

  SECTION("perfect batch") {
    auto rep = score_records(recs, refs);
    REQUIRE(rep.per_level.size() == 3);
    for (const auto& l : rep.per_level) {
      CHECK(l.weighted_f1 == 1.0);
      CHECK(l.accuracy == 1.0);
      CHECK(l.support == 4);
    }
    CHECK(rep.mean_weighted_f1 == 1.0);
    CHECK(rep.leaf_weighted_f1 == 1.0);
    CHECK(rep.pooled_weighted_f1 == 1.0);
  }

  SECTION("one record failed at level 2") {
    recs[1].path = {{"Animal"}};
    recs[1].failure = Failure{2, "unresolvable"};
    auto rep = score_records(recs, refs);
    CHECK(rep.per_level[0].accuracy == 1.0);
    CHECK(rep.per_level[1].accuracy == 0.75);
    CHECK(rep.per_level[2].accuracy == 0.75);
    // Level-2 pairs: Mammal,missing,Flower,Flower vs Mammal,Mammal,Flower,Flower.
    std::vector<LabeledPair> l2{{"Mammal", "Mammal"},
                                {std::string(kMissingLabel), "Mammal"},
                                {"Flower", "Flower"},
                                {"Flower", "Flower"}};
    CHECK(rep.per_level[1].weighted_f1 ==
          Catch::Approx(testing_support::brute_force_weighted_f1(l2)).epsilon(1e-12));
    REQUIRE(rep.conditional.size() == 2);
    CHECK(rep.conditional[0].eligible == 4);
    CHECK(rep.conditional[0].agreement == 0.75);
    CHECK(rep.conditional[1].eligible == 3);
    CHECK(rep.conditional[1].agreement == 1.0);
  }

  SECTION("records are matched by id, not position") {
    std::reverse(recs.begin(), recs.end());
    CHECK(score_records(recs, refs).mean_weighted_f1 == 1.0);
  }

  SECTION("id mismatches are errors") {
    recs[0].item_id = "99";
    CHECK_THROWS_AS(score_records(recs, refs), ValidationError);
    recs.pop_back();
    CHECK_THROWS_AS(score_records(recs, refs), ValidationError);
  }
}

TEST_CASE("report JSON uses stable field names", "[metrics]") {
  std::vector<CategoryPath> p{{{"A", "X"}}, {{"B", "Y"}}};
  auto j = to_json(score_paths(p, p));
  CHECK(j.contains("per_level"));
  CHECK(j.contains("conditional"));
  CHECK(j["mean_weighted_f1"] == 1.0);
  CHECK(j["per_level"][0]["weighted_f1"] == 1.0);
  CHECK(j["conditional"][0]["defined"] == true);
  CHECK(j["conditional"][0]["eligible"] == 2);
}
