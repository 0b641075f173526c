#include "ktrace/relation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ktrace {

void ContingencyTable::add(int earlier_response, int later_response) {
  if (earlier_response == 0)
    later_response == 0 ? ++n00 : ++n01;
  else
    later_response == 0 ? ++n10 : ++n11;
}

double phi(const ContingencyTable& t) {
  const auto r0 = t.row0(), r1 = t.row1(), c0 = t.col0(), c1 = t.col1();
  if (r0 == 0 || r1 == 0 || c0 == 0 || c1 == 0) return 0.0;
  const double num = static_cast<double>(t.n11) * static_cast<double>(t.n00) -
                     static_cast<double>(t.n01) * static_cast<double>(t.n10);
  const double den = std::sqrt(static_cast<double>(r1) * static_cast<double>(r0) *
                               static_cast<double>(c1) * static_cast<double>(c0));
  return std::clamp(num / den, -1.0, 1.0);
}

const ContingencyTable* PairTables::find(int later, int earlier) const {
  auto it = tables.find(pair_key(later, earlier));
  return it == tables.end() ? nullptr : &it->second;
}

PairTables accumulate_pairs(const std::vector<StudentLog>& students,
                            std::int64_t max_pairs_per_student) {
  if (max_pairs_per_student < 1) throw std::invalid_argument("pair cap must be positive");
  PairTables out;
  for (const auto& s : students) {
    const auto& seq = s.interactions;
    std::int64_t budget = max_pairs_per_student;
    bool capped = false;
    for (std::size_t later = 1; later < seq.size() && !capped; ++later) {
      for (std::size_t earlier = 0; earlier < later; ++earlier) {
        if (budget == 0) {
          capped = true;
          break;
        }
        --budget;
        out.tables[pair_key(seq[later].exercise_id, seq[earlier].exercise_id)].add(
            seq[earlier].response, seq[later].response);
        ++out.increments;
      }
    }
    if (capped) ++out.capped_students;
  }
  return out;
}

double RelationMatrix::get(int later, int earlier) const {
  auto it = entries_.find(pair_key(later, earlier));
  return it == entries_.end() ? 0.0 : it->second;
}

void RelationMatrix::set(int later, int earlier, double value) {
  if (later < 0 || later >= exercise_count_ || earlier < 0 || earlier >= exercise_count_)
    throw std::out_of_range("relation index out of range");
  entries_[pair_key(later, earlier)] = value;
}

void RelationMatrix::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write relation file: " + path);
  out << "# exercises=" << exercise_count_ << " theta=" << theta_ << "\n";
  out << "i,j,value\n";
  out.precision(17);
  for (const auto& [key, value] : entries_)
    out << static_cast<std::uint32_t>(key >> 32) << ',' << static_cast<std::uint32_t>(key)
        << ',' << value << "\n";
  if (!out) throw std::runtime_error("failed writing relation file: " + path);
}

RelationMatrix RelationMatrix::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open relation file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# exercises=", 0) != 0)
    throw std::runtime_error(path + ": missing relation header");
  int exercise_count = 0;
  double theta = 0.0;
  {
    std::istringstream hs(line.substr(2));
    std::string a, b;
    hs >> a >> b;
    if (a.rfind("exercises=", 0) != 0 || b.rfind("theta=", 0) != 0)
      throw std::runtime_error(path + ": malformed relation header");
    exercise_count = std::stoi(a.substr(10));
    theta = std::stod(b.substr(6));
  }
  if (!std::getline(in, line) || line != "i,j,value")
    throw std::runtime_error(path + ": missing column line");

  RelationMatrix m(exercise_count, theta);
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int i = 0, j = 0;
    double v = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ls >> i >> c1 >> j >> c2 >> v) || c1 != ',' || c2 != ',')
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected i,j,value");
    m.set(i, j, v);
  }
  return m;
}

RelationMatrix build_relation_matrix(const PairTables& pairs, const std::vector<int>& skill_of,
                                     double theta) {
  const int E = static_cast<int>(skill_of.size());
  RelationMatrix m(E, theta);
  for (const auto& [key, table] : pairs.tables) {
    const int later = static_cast<int>(key >> 32);
    const int earlier = static_cast<int>(key & 0xffffffffULL);
    if (later >= E || earlier >= E)
      throw std::out_of_range("pair table references exercise outside the catalog");
    const double sim =
        skill_of[static_cast<std::size_t>(later)] == skill_of[static_cast<std::size_t>(earlier)]
            ? 1.0
            : 0.0;
    const double value = phi(table) + sim;
    if (value > theta) m.set(later, earlier, value);
  }
  if (1.0 > theta) {
    // Same-skill pairs with no observed co-occurrence still carry the
    // similarity bonus alone.
    std::vector<std::vector<int>> by_skill;
    for (int e = 0; e < E; ++e) {
      const auto s = static_cast<std::size_t>(skill_of[static_cast<std::size_t>(e)]);
      if (by_skill.size() <= s) by_skill.resize(s + 1);
      by_skill[s].push_back(e);
    }
    for (const auto& group : by_skill)
      for (int later : group)
        for (int earlier : group)
          if (!pairs.find(later, earlier)) m.set(later, earlier, 1.0);
  }
  return m;
}

std::vector<double> forget_coefficients(const std::vector<std::int64_t>& past_timestamps_ms,
                                        std::int64_t next_timestamp_ms, double strength_hours,
                                        ForgetDiagnostics* diag) {
  if (!(strength_hours > 0.0)) throw std::invalid_argument("forgetting strength must be positive");
  std::vector<double> out;
  out.reserve(past_timestamps_ms.size());
  for (auto ts : past_timestamps_ms) {
    double gap_hours = static_cast<double>(next_timestamp_ms - ts) / 3600e3;
    if (gap_hours < 0.0) {
      gap_hours = 0.0;
      if (diag) ++diag->negative_gaps_clamped;
    }
    out.push_back(std::exp(-gap_hours / strength_hours));
  }
  return out;
}

std::vector<double> relation_row(const RelationMatrix& relations, int next_exercise,
                                 const std::vector<int>& past_exercises) {
  std::vector<double> out;
  out.reserve(past_exercises.size());
  for (int e : past_exercises) out.push_back(relations.get(next_exercise, e));
  return out;
}

}  // namespace ktrace
