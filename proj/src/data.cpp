#include "ktrace/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ktrace {

int encode_interaction(int exercise_id, int response, int exercise_count) {
  if (response != 0 && response != 1) throw std::invalid_argument("response must be 0 or 1");
  if (exercise_id < 0) throw std::invalid_argument("negative exercise id");
  if (exercise_id >= exercise_count) return 2 * exercise_count + response;  // out of vocabulary
  return exercise_id + response * exercise_count;
}

std::pair<int, int> decode_interaction(int interaction_id, int exercise_count) {
  if (interaction_id < 0 || interaction_id >= interaction_vocab(exercise_count))
    throw std::invalid_argument("interaction id out of range");
  if (interaction_id >= 2 * exercise_count)
    return {exercise_count, interaction_id - 2 * exercise_count};
  return {interaction_id % exercise_count, interaction_id / exercise_count};
}

// --- ingestion --------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !s.empty();
}

bool parse_int(const std::string& s, int& out) {
  std::int64_t v = 0;
  if (!parse_int64(s, v)) return false;
  if (v < INT32_MIN || v > INT32_MAX) return false;
  out = static_cast<int>(v);
  return true;
}

}  // namespace

std::string IngestResult::report() const {
  std::ostringstream os;
  os << "students=" << students.size() << " rows_ok=" << rows_ok
     << " rejected=" << rejected.size() << " exercises=" << exercise_count
     << " skills=" << skill_count << " skill_conflicts=" << skill_conflicts << "\n";
  for (const auto& r : rejected) os << "  line " << r.line << ": " << r.reason << "\n";
  return os.str();
}

IngestResult ingest_log(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty log file: " + path);
  auto header = split_csv(line);
  for (auto& h : header) h = trim(h);

  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("log file " + path + " is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_student = column(options.col_student);
  const std::size_t c_time = column(options.col_timestamp);
  const std::size_t c_exercise = column(options.col_exercise);
  const std::size_t c_skill = column(options.col_skill);
  const std::size_t c_response = column(options.col_response);

  IngestResult result;
  std::unordered_map<std::string, std::size_t> index_of;
  std::unordered_map<int, int> skill_map;
  int max_exercise = -1;
  int max_skill = -1;
  int line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    auto reject = [&](const std::string& why) {
      result.rejected.push_back({line_no, why});
    };
    if (fields.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, got " +
             std::to_string(fields.size()));
      continue;
    }
    const std::string student = trim(fields[c_student]);
    Interaction it;
    if (student.empty()) {
      reject("empty student id");
      continue;
    }
    if (!parse_int64(trim(fields[c_time]), it.timestamp_ms)) {
      reject("bad timestamp '" + trim(fields[c_time]) + "'");
      continue;
    }
    if (!parse_int(trim(fields[c_exercise]), it.exercise_id) || it.exercise_id < 0) {
      reject("bad exercise id '" + trim(fields[c_exercise]) + "'");
      continue;
    }
    if (!parse_int(trim(fields[c_skill]), it.skill_tag) || it.skill_tag < 0) {
      reject("bad skill tag '" + trim(fields[c_skill]) + "'");
      continue;
    }
    int resp = 0;
    if (!parse_int(trim(fields[c_response]), resp) || (resp != 0 && resp != 1)) {
      reject("response must be 0 or 1, got '" + trim(fields[c_response]) + "'");
      continue;
    }
    it.response = resp;

    auto [pos, inserted] = index_of.try_emplace(student, result.students.size());
    if (inserted) result.students.push_back({student, {}});
    result.students[pos->second].interactions.push_back(it);

    auto [sk, fresh] = skill_map.try_emplace(it.exercise_id, it.skill_tag);
    if (!fresh && sk->second != it.skill_tag) ++result.skill_conflicts;  // first tag wins
    max_exercise = std::max(max_exercise, it.exercise_id);
    max_skill = std::max(max_skill, it.skill_tag);
    ++result.rows_ok;
  }

  result.exercise_count = max_exercise + 1;
  result.skill_count = max_skill + 1;
  result.skill_of.assign(static_cast<std::size_t>(result.exercise_count), 0);
  for (const auto& [e, s] : skill_map) result.skill_of[static_cast<std::size_t>(e)] = s;
  for (auto& stu : result.students)
    std::stable_sort(stu.interactions.begin(), stu.interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp_ms < b.timestamp_ms;
                     });
  return result;
}

// --- manifest ---------------------------------------------------------------

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "exercise_count=" << exercise_count << "\n";
  out << "skill_count=" << skill_count << "\n";
  out << "window_len=" << window_len << "\n";
  for (std::size_t e = 0; e < skill_of.size(); ++e)
    out << "skill." << e << "=" << skill_of[e] << "\n";
  for (const auto& [id, split] : split)
    out << "split." << id << "=" << (split == Split::train ? "train" : "test") << "\n";
  if (!out) throw std::runtime_error("failed writing manifest: " + path);
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  DatasetManifest m;
  std::map<int, int> skills;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto bad = [&](const std::string& why) {
      return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + why);
    };
    if (key == "exercise_count") {
      if (!parse_int(value, m.exercise_count)) throw bad("bad exercise_count");
    } else if (key == "skill_count") {
      if (!parse_int(value, m.skill_count)) throw bad("bad skill_count");
    } else if (key == "window_len") {
      if (!parse_int(value, m.window_len)) throw bad("bad window_len");
    } else if (key.rfind("skill.", 0) == 0) {
      int e = 0, s = 0;
      if (!parse_int(key.substr(6), e) || !parse_int(value, s)) throw bad("bad skill entry");
      skills[e] = s;
    } else if (key.rfind("split.", 0) == 0) {
      if (value != "train" && value != "test") throw bad("split must be train or test");
      m.split[key.substr(6)] = value == "train" ? Split::train : Split::test;
    } else {
      throw bad("unknown key '" + key + "'");
    }
  }
  m.skill_of.assign(static_cast<std::size_t>(m.exercise_count), 0);
  for (const auto& [e, s] : skills) {
    if (e < 0 || e >= m.exercise_count) throw std::runtime_error(path + ": skill index out of range");
    m.skill_of[static_cast<std::size_t>(e)] = s;
  }
  return m;
}

DatasetManifest make_manifest(const IngestResult& data, int window_len,
                              double train_fraction, std::uint64_t seed) {
  if (window_len < 2) throw std::invalid_argument("window_len must be at least 2");
  if (train_fraction < 0.0 || train_fraction > 1.0)
    throw std::invalid_argument("train_fraction must be inside [0, 1]");
  DatasetManifest m;
  m.exercise_count = data.exercise_count;
  m.skill_count = data.skill_count;
  m.window_len = window_len;
  m.skill_of = data.skill_of;

  std::vector<std::string> ids;
  ids.reserve(data.students.size());
  for (const auto& s : data.students) ids.push_back(s.student_id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  for (std::size_t i = 0; i < ids.size(); ++i)
    m.split[ids[i]] = i < n_train ? Split::train : Split::test;
  return m;
}

// --- windowing --------------------------------------------------------------

namespace {

EncodedWindow encode_span(const Interaction* items, int count, int window_len,
                          int exercise_count, int student_index) {
  EncodedWindow w;
  w.student_index = student_index;
  w.pad = window_len - count;
  const auto L = static_cast<std::size_t>(window_len);
  w.interaction_ids.assign(L, 0);
  w.exercise_ids.assign(L, 0);
  w.labels.assign(L, 0);
  w.timestamps.assign(L, 0);
  w.valid_mask.assign(L, 0);
  for (int i = 0; i < count; ++i) {
    const auto slot = static_cast<std::size_t>(w.pad + i);
    const Interaction& it = items[i];
    w.interaction_ids[slot] = encode_interaction(it.exercise_id, it.response, exercise_count);
    w.timestamps[slot] = it.timestamp_ms;
    if (i + 1 < count) {
      const Interaction& next = items[i + 1];
      w.exercise_ids[slot] = std::min(next.exercise_id, oov_exercise_index(exercise_count));
      w.labels[slot] = next.response;
      w.valid_mask[slot] = 1;
    }
  }
  return w;
}

}  // namespace

std::vector<EncodedWindow> window_sequences(const std::vector<Interaction>& interactions,
                                            int window_len, int exercise_count) {
  if (window_len < 2) throw std::invalid_argument("window_len must be at least 2");
  std::vector<EncodedWindow> out;
  const auto n = interactions.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(window_len)) {
    const int count = static_cast<int>(std::min<std::size_t>(window_len, n - start));
    out.push_back(encode_span(interactions.data() + start, count, window_len, exercise_count, 0));
  }
  return out;
}

WindowSet window_cohort(const std::vector<StudentLog>& students, int window_len,
                        int exercise_count) {
  WindowSet set;
  set.student_ids.reserve(students.size());
  for (const auto& s : students) {
    const int idx = static_cast<int>(set.student_ids.size());
    set.student_ids.push_back(s.student_id);
    auto ws = window_sequences(s.interactions, window_len, exercise_count);
    for (auto& w : ws) {
      w.student_index = idx;
      set.windows.push_back(std::move(w));
    }
  }
  return set;
}

long WindowSet::total_targets() const {
  long n = 0;
  for (const auto& w : windows) n += w.target_count();
  return n;
}

EncodedWindow make_rolling_window(const std::vector<Interaction>& sequence,
                                  std::size_t target_index, int window_len,
                                  int exercise_count, int student_index) {
  if (target_index < 1 || target_index >= sequence.size())
    throw std::invalid_argument("rolling target needs at least one prior interaction");
  const auto keep = std::min<std::size_t>(target_index, static_cast<std::size_t>(window_len) - 1);
  const auto first = target_index - keep;
  EncodedWindow w = encode_span(sequence.data() + first, static_cast<int>(keep) + 1, window_len,
                                exercise_count, student_index);
  // Only the slot predicting the target stays valid.
  for (std::size_t j = 0; j + 2 < w.valid_mask.size(); ++j) w.valid_mask[j] = 0;
  return w;
}

// --- synthetic generator ----------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::vector<StudentLog> generate_synthetic(const SynthConfig& cfg,
                                           std::vector<std::vector<int>>* planted_partners) {
  if (cfg.students < 1) throw std::invalid_argument("students must be positive");
  if (cfg.skills < 1 || cfg.exercises < cfg.skills)
    throw std::invalid_argument("need exercises >= skills >= 1");
  if (cfg.min_interactions < 2 || cfg.max_interactions < cfg.min_interactions)
    throw std::invalid_argument("bad interaction count range");
  if (!(cfg.forgetting_halflife_hours > 0.0))
    throw std::invalid_argument("forgetting_halflife_hours must be positive");

  const int E = cfg.exercises;
  const int S = cfg.skills;

  // Shared world: skill of each exercise, difficulties, skill relation graph.
  std::mt19937_64 world_rng(splitmix64(cfg.seed));
  std::vector<int> skill_of(static_cast<std::size_t>(E));
  for (int e = 0; e < E; ++e)
    skill_of[static_cast<std::size_t>(e)] = static_cast<int>(
        (static_cast<std::int64_t>(e) * S) / E);
  std::vector<std::vector<int>> exercises_of(static_cast<std::size_t>(S));
  for (int e = 0; e < E; ++e)
    exercises_of[static_cast<std::size_t>(skill_of[static_cast<std::size_t>(e)])].push_back(e);

  std::normal_distribution<double> diff_dist(0.0, cfg.difficulty_sd);
  std::vector<double> difficulty(static_cast<std::size_t>(E));
  for (auto& d : difficulty) d = cfg.difficulty_shift + diff_dist(world_rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<int>> related(static_cast<std::size_t>(S));
  for (int a = 0; a < S; ++a)
    for (int b = a + 1; b < S; ++b)
      if (unit(world_rng) < cfg.skill_graph_density) {
        related[static_cast<std::size_t>(a)].push_back(b);
        related[static_cast<std::size_t>(b)].push_back(a);
      }

  // Partner draws sit behind the count guard; partner-free configs leave the
  // world stream untouched.
  std::vector<std::vector<int>> partners(static_cast<std::size_t>(E));
  std::vector<std::vector<double>> partner_sign(static_cast<std::size_t>(E));
  if (cfg.partner_count > 0 && E > 1) {
    const int k = std::min(cfg.partner_count, E - 1);
    for (int e = 0; e < E; ++e) {
      auto& ps = partners[static_cast<std::size_t>(e)];
      while (static_cast<int>(ps.size()) < k) {
        const int p = static_cast<int>(world_rng() % static_cast<std::uint64_t>(E));
        if (p != e && std::find(ps.begin(), ps.end(), p) == ps.end()) ps.push_back(p);
      }
      partner_sign[static_cast<std::size_t>(e)].assign(ps.size(), 1.0);
    }
    if (cfg.partner_interference > 0.0)
      for (auto& signs : partner_sign)
        for (auto& sg : signs)
          if (unit(world_rng) < cfg.partner_interference) sg = -1.0;
  }
  if (planted_partners) *planted_partners = partners;

  const bool forgets = std::isfinite(cfg.forgetting_halflife_hours);
  const double halflife_ms = cfg.forgetting_halflife_hours * 3600e3;

  std::vector<StudentLog> out;
  out.reserve(static_cast<std::size_t>(cfg.students));
  for (int u = 0; u < cfg.students; ++u) {
    // Per-student stream keyed by (seed, index) so any prefix of the cohort
    // is reproducible independently of generation order.
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(0x5741ULL + static_cast<std::uint64_t>(u))));
    std::normal_distribution<double> normal(0.0, 1.0);

    StudentLog log;
    char name[16];
    std::snprintf(name, sizeof name, "s%05d", u);
    log.student_id = name;

    const double ability = normal(rng) * cfg.ability_sd;
    const int n = cfg.min_interactions +
                  static_cast<int>(rng() % static_cast<std::uint64_t>(
                                       cfg.max_interactions - cfg.min_interactions + 1));
    std::vector<double> prof(static_cast<std::size_t>(S), 0.0);
    std::vector<double> fam(static_cast<std::size_t>(E), 0.0);
    std::vector<double> assoc(static_cast<std::size_t>(E), 0.0);
    std::vector<double> unlocked(static_cast<std::size_t>(E), 0.0);
    std::vector<char> mastered(static_cast<std::size_t>(E), 0);
    std::int64_t t = static_cast<std::int64_t>(unit(rng) * 30.0 * 24.0 * 3600e3);
    int focus = static_cast<int>(rng() % static_cast<std::uint64_t>(S));

    log.interactions.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (i > 0) {
        double gap_ms;
        if (unit(rng) < cfg.session_break_prob) {
          gap_ms = cfg.between_gap_hours * 3600e3 * std::exp(cfg.between_gap_sigma * normal(rng));
          focus = static_cast<int>(rng() % static_cast<std::uint64_t>(S));
        } else {
          gap_ms = cfg.within_gap_minutes * 60e3 * std::exp(0.5 * normal(rng));
        }
        gap_ms = std::max(gap_ms, 1e3);
        t += static_cast<std::int64_t>(gap_ms);
        if (forgets) {
          const double decay = std::exp2(-gap_ms / halflife_ms);
          for (auto& p : prof) p *= decay;
          for (auto& f : fam) f *= decay;
          for (auto& a : assoc) a *= decay;
        }
      }
      int skill = unit(rng) < cfg.focus_prob ? focus
                                             : static_cast<int>(rng() % static_cast<std::uint64_t>(S));
      const auto& pool = exercises_of[static_cast<std::size_t>(skill)];
      const int e = pool[static_cast<std::size_t>(rng() % pool.size())];

      const double recall = std::clamp(
          fam[static_cast<std::size_t>(e)] + assoc[static_cast<std::size_t>(e)], -1.0, 1.0);
      const double p_correct = sigmoid(
          cfg.slope * (ability + prof[static_cast<std::size_t>(skill)] -
                       difficulty[static_cast<std::size_t>(e)] +
                       unlocked[static_cast<std::size_t>(e)]) +
          cfg.familiarity_boost * recall);
      const int r = unit(rng) < p_correct ? 1 : 0;
      fam[static_cast<std::size_t>(e)] = 1.0;
      if (r == 1) {
        const auto& ps = partners[static_cast<std::size_t>(e)];
        const auto& sg = partner_sign[static_cast<std::size_t>(e)];
        for (std::size_t m = 0; m < ps.size(); ++m) {
          auto& a = assoc[static_cast<std::size_t>(ps[m])];
          a = std::clamp(a + sg[m] * cfg.partner_transfer, -1.0, 1.0);
        }
        if (!mastered[static_cast<std::size_t>(e)]) {
          mastered[static_cast<std::size_t>(e)] = 1;
          for (int p : ps) unlocked[static_cast<std::size_t>(p)] += cfg.partner_unlock;
        }
      }

      const double gain = r == 1 ? cfg.learn_gain : cfg.incorrect_gain;
      auto bump = [&](int s, double g) {
        auto& p = prof[static_cast<std::size_t>(s)];
        const double headroom = std::max(0.0, 1.0 - p / cfg.proficiency_cap);
        p += g * headroom;
      };
      bump(skill, gain);
      for (int s2 : related[static_cast<std::size_t>(skill)]) bump(s2, gain * cfg.transfer);

      log.interactions.push_back({e, skill, r, t});
    }
    out.push_back(std::move(log));
  }
  return out;
}

void write_log_csv(const std::string& path, const std::vector<StudentLog>& students) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write log file: " + path);
  out << "student_id,timestamp_ms,exercise_id,skill_tag,response\n";
  for (const auto& s : students)
    for (const auto& it : s.interactions)
      out << s.student_id << ',' << it.timestamp_ms << ',' << it.exercise_id << ','
          << it.skill_tag << ',' << it.response << "\n";
  if (!out) throw std::runtime_error("failed writing log file: " + path);
}

}  // namespace ktrace
