// Exercise relation mining: per-pair response contingency tables, the phi
// correlation coefficient, the sparse relation matrix with skill-similarity
// bonus, and time-gap forgetting coefficients.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ktrace/data.hpp"

namespace ktrace {

// Counts over ordered occurrences (j strictly earlier than i within one
// student). n[r_j][r_i]: first index is the earlier response.
struct ContingencyTable {
  std::int64_t n00 = 0;
  std::int64_t n01 = 0;
  std::int64_t n10 = 0;
  std::int64_t n11 = 0;

  std::int64_t total() const { return n00 + n01 + n10 + n11; }
  std::int64_t row0() const { return n00 + n01; }  // earlier response 0
  std::int64_t row1() const { return n10 + n11; }
  std::int64_t col0() const { return n00 + n10; }  // later response 0
  std::int64_t col1() const { return n01 + n11; }

  void add(int earlier_response, int later_response);
};

double phi(const ContingencyTable& t);  // 0 when any marginal is empty

inline std::uint64_t pair_key(int later, int earlier) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(later)) << 32) |
         static_cast<std::uint32_t>(earlier);
}

struct PairTables {
  // Keyed by (later exercise i, earlier exercise j).
  std::map<std::uint64_t, ContingencyTable> tables;
  std::int64_t increments = 0;
  int capped_students = 0;

  const ContingencyTable* find(int later, int earlier) const;
};

// Every ordered pair (earlier position, later position) inside each student's
// sequence contributes one increment, capped per student to bound quadratic
// blowup on very long sequences (earliest pairs kept, deterministic).
PairTables accumulate_pairs(const std::vector<StudentLog>& students,
                            std::int64_t max_pairs_per_student = 2'000'000);

class RelationMatrix {
 public:
  RelationMatrix() = default;
  RelationMatrix(int exercise_count, double theta)
      : exercise_count_(exercise_count), theta_(theta) {}

  int exercise_count() const { return exercise_count_; }
  double theta() const { return theta_; }
  std::size_t stored() const { return entries_.size(); }

  // A[i][j]: influence of earlier exercise j on later exercise i. Zero when
  // the thresholded value was not stored.
  double get(int later, int earlier) const;
  void set(int later, int earlier, double value);

  void save(const std::string& path) const;
  static RelationMatrix load(const std::string& path);

  const std::map<std::uint64_t, double>& entries() const { return entries_; }

 private:
  int exercise_count_ = 0;
  double theta_ = 0.8;
  std::map<std::uint64_t, double> entries_;
};

// phi + 1 for same-skill pairs, phi alone otherwise; kept only when the sum
// exceeds theta. Same-skill pairs never observed together still enter with
// value 1 when 1 > theta.
RelationMatrix build_relation_matrix(const PairTables& pairs, const std::vector<int>& skill_of,
                                     double theta);

struct ForgetDiagnostics {
  std::int64_t negative_gaps_clamped = 0;
};

// exp(-max(0, gap)/strength) with the gap measured in hours. strength must be
// positive; timestamps after next_timestamp_ms count as zero gap.
std::vector<double> forget_coefficients(const std::vector<std::int64_t>& past_timestamps_ms,
                                        std::int64_t next_timestamp_ms, double strength_hours,
                                        ForgetDiagnostics* diag = nullptr);

// Relation row used when predicting next_exercise after the given history.
std::vector<double> relation_row(const RelationMatrix& relations, int next_exercise,
                                 const std::vector<int>& past_exercises);

}  // namespace ktrace
