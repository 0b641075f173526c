#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "ktrace/relation.hpp"

using namespace ktrace;

namespace {

// Pearson correlation over the expanded (earlier, later) response pairs;
// an independent route to the same coefficient.
double pearson_of_table(const ContingencyTable& t) {
  std::vector<std::pair<int, int>> samples;
  for (int k = 0; k < t.n00; ++k) samples.push_back({0, 0});
  for (int k = 0; k < t.n01; ++k) samples.push_back({0, 1});
  for (int k = 0; k < t.n10; ++k) samples.push_back({1, 0});
  for (int k = 0; k < t.n11; ++k) samples.push_back({1, 1});
  const double n = static_cast<double>(samples.size());
  double mx = 0, my = 0;
  for (auto [x, y] : samples) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (auto [x, y] : samples) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("phi matches a hand-computed table exactly") {
  ContingencyTable t{2, 1, 1, 2};
  CHECK(phi(t) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("phi agrees with pearson correlation on random tables") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> count(0, 30);
  int non_degenerate = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ContingencyTable t{count(rng), count(rng), count(rng), count(rng)};
    if (t.row0() == 0 || t.row1() == 0 || t.col0() == 0 || t.col1() == 0) {
      CHECK(phi(t) == 0.0);
      continue;
    }
    ++non_degenerate;
    CHECK(phi(t) == doctest::Approx(pearson_of_table(t)).epsilon(1e-12));
  }
  CHECK(non_degenerate > 150);
}

TEST_CASE("phi edge behavior") {
  CHECK(phi({0, 0, 0, 0}) == 0.0);
  CHECK(phi({5, 0, 0, 0}) == 0.0);   // only one outcome ever seen
  CHECK(phi({3, 0, 0, 7}) == 1.0);   // perfect agreement
  CHECK(phi({0, 4, 4, 0}) == -1.0);  // perfect disagreement
  CHECK(phi({0, 0, 3, 4}) == 0.0);   // empty earlier-0 row
}

TEST_CASE("pair accumulation counts ordered pairs per student") {
  std::vector<StudentLog> students(1);
  // exercises: 0,1,0 with responses 1,0,1
  students[0].interactions = {{0, 0, 1, 10}, {1, 0, 0, 20}, {0, 0, 1, 30}};
  auto pairs = accumulate_pairs(students);
  CHECK(pairs.increments == 3);
  CHECK(pairs.capped_students == 0);

  const auto* t10 = pairs.find(1, 0);  // earlier 0 -> later 1
  REQUIRE(t10 != nullptr);
  CHECK(t10->n10 == 1);  // earlier correct, later incorrect
  CHECK(t10->total() == 1);

  const auto* t00 = pairs.find(0, 0);  // the self pair from positions 0 and 2
  REQUIRE(t00 != nullptr);
  CHECK(t00->n11 == 1);

  const auto* t01 = pairs.find(0, 1);  // earlier 1 -> later 0
  REQUIRE(t01 != nullptr);
  CHECK(t01->n01 == 1);  // earlier incorrect, later correct

  CHECK(pairs.find(1, 1) == nullptr);
}

TEST_CASE("pair cap truncates deterministically") {
  std::vector<StudentLog> students(1);
  for (int i = 0; i < 10; ++i)
    students[0].interactions.push_back({i, 0, 1, 10ll * i});

  auto full = accumulate_pairs(students);
  CHECK(full.increments == 45);  // 10 choose 2
  CHECK(full.capped_students == 0);

  auto capped = accumulate_pairs(students, 7);
  CHECK(capped.increments == 7);
  CHECK(capped.capped_students == 1);
  // earliest pairs survive: later=1..3 complete, later=4 partially
  CHECK(capped.find(1, 0) != nullptr);
  CHECK(capped.find(3, 2) != nullptr);
  CHECK(capped.find(4, 0) != nullptr);
  CHECK(capped.find(4, 1) == nullptr);
  CHECK(capped.find(9, 8) == nullptr);

  auto again = accumulate_pairs(students, 7);
  CHECK(again.increments == capped.increments);
  CHECK(again.tables.size() == capped.tables.size());

  CHECK_THROWS_AS(accumulate_pairs(students, 0), std::invalid_argument);
}

TEST_CASE("relation matrix applies skill bonus and threshold") {
  // Two students answer the 0 -> 1 sequence in perfect agreement (phi 1),
  // two answer 2 -> 3 in perfect disagreement (phi -1).
  std::vector<StudentLog> students(4);
  students[0].interactions = {{0, 0, 0, 10}, {1, 0, 0, 20}};
  students[1].interactions = {{0, 0, 1, 10}, {1, 0, 1, 20}};
  students[2].interactions = {{2, 1, 0, 10}, {3, 2, 1, 20}};
  students[3].interactions = {{2, 1, 1, 10}, {3, 2, 0, 20}};
  auto pairs = accumulate_pairs(students);
  std::vector<int> skill_of = {0, 0, 1, 2, 0};

  SUBCASE("theta 0.8 keeps strong or same-skill links") {
    auto m = build_relation_matrix(pairs, skill_of, 0.8);
    CHECK(m.get(1, 0) == 2.0);   // phi 1 plus the skill bonus
    CHECK(m.get(3, 2) == 0.0);   // phi -1, different skills
    CHECK(m.get(2, 3) == 0.0);   // never observed, different skills
    // never-observed same-skill pairs carry the bare bonus
    CHECK(m.get(0, 1) == 1.0);
    CHECK(m.get(0, 0) == 1.0);
    CHECK(m.get(4, 0) == 1.0);
    CHECK(m.get(4, 4) == 1.0);
    CHECK(m.get(2, 2) == 1.0);   // self pairs count as same-skill
  }

  SUBCASE("theta above every value empties the matrix") {
    auto m = build_relation_matrix(pairs, skill_of, 3.0);
    CHECK(m.stored() == 0);
    CHECK(m.get(1, 0) == 0.0);
  }

  SUBCASE("unobserved same-skill pairs appear only below theta 1") {
    std::vector<int> merged = {0, 0, 0, 0, 0};
    auto lo = build_relation_matrix(pairs, merged, 0.5);
    CHECK(lo.get(2, 0) == 1.0);  // never co-observed, same skill now
    CHECK(lo.get(0, 2) == 1.0);
    auto hi = build_relation_matrix(pairs, merged, 1.0);
    CHECK(hi.get(2, 0) == 0.0);
    CHECK(hi.get(1, 0) == 2.0);  // observed value still clears theta
  }
}

TEST_CASE("relation matrix roundtrips through disk") {
  RelationMatrix m(5, 0.75);
  m.set(1, 0, 1.9375);
  m.set(4, 2, 0.8125);
  m.set(0, 0, 2.0);
  m.set(3, 1, 0.123456789012345678);

  auto dir = std::filesystem::temp_directory_path() / "ktrace_relation_tests";
  std::filesystem::create_directories(dir);
  auto path = (dir / "relations.txt").string();
  m.save(path);
  auto loaded = RelationMatrix::load(path);
  CHECK(loaded.exercise_count() == 5);
  CHECK(loaded.theta() == 0.75);
  CHECK(loaded.stored() == 4);
  CHECK(loaded.get(1, 0) == 1.9375);
  CHECK(loaded.get(4, 2) == 0.8125);
  CHECK(loaded.get(3, 1) == m.get(3, 1));
  CHECK(loaded.get(2, 2) == 0.0);

  CHECK_THROWS_AS(RelationMatrix::load("/nonexistent/relations.txt"), std::runtime_error);
  CHECK_THROWS_AS(m.set(5, 0, 1.0), std::out_of_range);
  CHECK_THROWS_AS(m.set(0, -1, 1.0), std::out_of_range);
}

TEST_CASE("forget coefficients decay exponentially in the gap") {
  const std::int64_t hour = 3'600'000;
  std::vector<std::int64_t> past = {0, 2 * hour, 4 * hour, 5 * hour};
  auto k = forget_coefficients(past, 5 * hour, 2.0);
  REQUIRE(k.size() == 4);
  CHECK(k[0] == doctest::Approx(std::exp(-2.5)).epsilon(1e-15));
  CHECK(k[1] == doctest::Approx(std::exp(-1.5)).epsilon(1e-15));
  CHECK(k[2] == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(k[3] == 1.0);  // zero gap
  CHECK(k[0] < k[1]);
  CHECK(k[1] < k[2]);

  // larger strength forgets more slowly
  auto slow = forget_coefficients(past, 5 * hour, 10.0);
  for (std::size_t i = 0; i + 1 < past.size(); ++i) CHECK(slow[i] > k[i]);

  ForgetDiagnostics diag;
  auto clamped = forget_coefficients({6 * hour, 3 * hour}, 5 * hour, 2.0, &diag);
  CHECK(clamped[0] == 1.0);  // future timestamp treated as zero gap
  CHECK(diag.negative_gaps_clamped == 1);

  CHECK_THROWS_AS(forget_coefficients(past, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(forget_coefficients(past, 0, -1.0), std::invalid_argument);
}

TEST_CASE("relation_row gathers matrix entries for a history") {
  RelationMatrix m(4, 0.0);
  m.set(2, 0, 1.5);
  m.set(2, 3, 0.25);
  auto row = relation_row(m, 2, {0, 1, 3, 0});
  REQUIRE(row.size() == 4);
  CHECK(row[0] == 1.5);
  CHECK(row[1] == 0.0);
  CHECK(row[2] == 0.25);
  CHECK(row[3] == 1.5);
}
