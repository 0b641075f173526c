// Interaction logs: CSV ingestion, interaction encoding, sequence windowing,
// and a synthetic student generator with planted skill structure and
// exponential forgetting.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ktrace {

struct Interaction {
  int exercise_id = 0;
  int skill_tag = 0;
  int response = 0;  // 0 or 1
  std::int64_t timestamp_ms = 0;
};

struct StudentLog {
  std::string student_id;
  std::vector<Interaction> interactions;  // sorted by timestamp, file order on ties
};

// y = e + r*E. Interaction ids live in [0, 2E); the two ids past that range
// (2E, 2E+1) are reserved for out-of-vocabulary exercises at evaluation time.
int encode_interaction(int exercise_id, int response, int exercise_count);
std::pair<int, int> decode_interaction(int interaction_id, int exercise_count);

inline int oov_exercise_index(int exercise_count) { return exercise_count; }
inline int interaction_vocab(int exercise_count) { return 2 * exercise_count + 2; }
inline int exercise_vocab(int exercise_count) { return exercise_count + 1; }

// --- ingestion --------------------------------------------------------------

struct IngestOptions {
  // Header names; remap these to ingest foreign column layouts.
  std::string col_student = "student_id";
  std::string col_timestamp = "timestamp_ms";
  std::string col_exercise = "exercise_id";
  std::string col_skill = "skill_tag";
  std::string col_response = "response";
};

struct RejectedRow {
  int line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct IngestResult {
  std::vector<StudentLog> students;  // ordered by first appearance
  int exercise_count = 0;            // max id + 1
  int skill_count = 0;
  std::vector<int> skill_of;         // size exercise_count, first tag seen wins
  std::vector<RejectedRow> rejected;
  long rows_ok = 0;
  long skill_conflicts = 0;

  std::string report() const;
};

IngestResult ingest_log(const std::string& path, const IngestOptions& options = {});

// --- manifest ---------------------------------------------------------------

enum class Split { train, test };

struct DatasetManifest {
  int exercise_count = 0;
  int skill_count = 0;
  int window_len = 50;
  std::vector<int> skill_of;
  std::map<std::string, Split> split;  // per student

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

// Student-level split: deterministic shuffle of the (sorted) ids, first
// train_fraction of them become the training split.
DatasetManifest make_manifest(const IngestResult& data, int window_len,
                              double train_fraction, std::uint64_t seed);

// --- windowing --------------------------------------------------------------

// One left-padded training window. Slots [pad, L) hold consecutive
// interactions of one student; interaction_ids[j] encodes the interaction at
// slot j, while exercise_ids/labels are shifted one position ahead (the
// prediction target at slot j is the interaction at slot j+1). valid_mask
// marks slots that have a target; padding carries valid_mask=false and index
// 0 everywhere.
struct EncodedWindow {
  int student_index = 0;  // into the WindowSet's student_ids
  int pad = 0;
  std::vector<int> interaction_ids;
  std::vector<int> exercise_ids;
  std::vector<int> labels;
  std::vector<std::int64_t> timestamps;
  std::vector<std::uint8_t> valid_mask;

  int length() const { return static_cast<int>(interaction_ids.size()); }
  int content_size() const { return length() - pad; }
  int target_count() const { return content_size() - 1 < 0 ? 0 : content_size() - 1; }
  // Timestamp of the exercise being predicted at valid slot j.
  std::int64_t target_timestamp(int j) const { return timestamps[static_cast<std::size_t>(j) + 1]; }
};

std::vector<EncodedWindow> window_sequences(const std::vector<Interaction>& interactions,
                                            int window_len, int exercise_count);

struct WindowSet {
  std::vector<EncodedWindow> windows;
  std::vector<std::string> student_ids;
  long total_targets() const;
};

WindowSet window_cohort(const std::vector<StudentLog>& students, int window_len,
                        int exercise_count);

// Sliding evaluation context for predicting sequence[target_index]: the last
// (L-1) revealed interactions followed by the target itself, with exactly one
// valid slot (the one predicting the target). The target's encoded response
// sits causally after the prediction slot and is never visible to it.
EncodedWindow make_rolling_window(const std::vector<Interaction>& sequence,
                                  std::size_t target_index, int window_len,
                                  int exercise_count, int student_index = 0);

// --- synthetic generator ----------------------------------------------------

// Defaults are the benchmark dataset used by the model comparison: mixed-skill
// sessions every half day, planted skill relations, exercise-level familiarity
// and partner warming, all riding one 24h forgetting clock.
struct SynthConfig {
  int students = 2000;
  int exercises = 100;
  int skills = 10;
  double skill_graph_density = 0.3;
  double forgetting_halflife_hours = 24.0;  // +inf disables forgetting
  std::uint64_t seed = 7;

  int min_interactions = 40;
  int max_interactions = 120;
  double learn_gain = 1.2;         // proficiency gain on a correct answer
  double incorrect_gain = 0.05;    // residual gain on an incorrect answer
  double transfer = 0.3;           // fraction of gain shared with related skills
  double ability_sd = 0.4;
  double difficulty_sd = 0.8;
  double difficulty_shift = 0.5;   // raises every exercise difficulty, lowering the base rate
  double slope = 1.3;              // logistic slope on (ability + proficiency - difficulty)
  double proficiency_cap = 1.5;
  double session_break_prob = 0.12;
  double focus_prob = 0.4;         // probability the next exercise is from the session skill
  double within_gap_minutes = 3.0;     // lognormal median
  double between_gap_hours = 12.0;     // lognormal median
  double between_gap_sigma = 0.6;      // lognormal sigma of the session gap
  double familiarity_boost = 1.5;  // logit bonus for re-seeing an exercise, decays like proficiency
  int partner_count = 3;           // directed partner exercises per exercise
  double partner_transfer = 0.6;   // familiarity passed to partners after a correct answer
  double partner_interference = 0.0;  // fraction of partner edges that suppress instead of warm
  double partner_unlock = 0.0;     // permanent difficulty drop on partners after the first
                                   // correct answer; stacks across in-edges, never decays
};

// planted_partners, when given, receives the directed partner lists (one per
// exercise) so callers can audit the transfer structure.
std::vector<StudentLog> generate_synthetic(const SynthConfig& config,
                                           std::vector<std::vector<int>>* planted_partners = nullptr);

void write_log_csv(const std::string& path, const std::vector<StudentLog>& students);

}  // namespace ktrace
