// Shared model interface: parameter registry, batched forward producing a
// scalar loss plus flat prediction lists, and the clipped binary cross
// entropy used by every model.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ktrace/data.hpp"
#include "ktrace/relation.hpp"
#include "ktrace/tensor.hpp"

namespace ktrace {

enum class ModelKind { dkt, dkvmn, sakt, rkt };

std::string to_string(ModelKind kind);
ModelKind model_kind_from(const std::string& name);

enum class Mode { train, eval };

struct Param {
  std::string name;
  Tensor tensor;
  bool decay = false;  // L2 applies to weight matrices, never biases
};

struct ModelSpec {
  ModelKind kind = ModelKind::sakt;
  int exercise_count = 0;
  int window_len = 50;
  int d = 200;
  int memory_slots = 50;       // dkvmn value/key slots
  bool vanilla_rnn = false;    // dkt: plain tanh recurrence instead of lstm
  double dropout = 0.1;
  double lambda = 0.5;         // rkt blend weight on the attention term
  double init_memory_hours = 24.0;  // rkt per-student forgetting init
  std::uint64_t seed = 1;
};

struct BatchResult {
  Tensor loss_sum;          // summed over targets; scale by 1/target_count for the mean
  long target_count = 0;
  std::vector<double> probs;  // one entry per target, deterministic order
  std::vector<int> labels;
};

class Model {
 public:
  virtual ~Model() = default;
  virtual ModelKind kind() const = 0;
  virtual ModelSpec spec() const = 0;
  // Extra state beyond tensors that checkpoints must carry.
  virtual std::vector<std::string> student_table() const { return {}; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param* find_param(const std::string& name);

  virtual BatchResult forward(Tape& tape, const WindowSet& set,
                              std::span<const int> window_indices, Mode mode,
                              std::mt19937_64& rng) = 0;

 protected:
  Tensor add_param(const std::string& name, int rows, int cols, std::mt19937_64& rng,
                   double bound, bool decay);
  Tensor add_const_init(const std::string& name, int rows, int cols, double value, bool decay);
  std::vector<Param> params_;
};

// -sum_t [ r log p + (1-r) log(1-p) ], probabilities clipped to
// [1e-7, 1-1e-7]. valid_mask (0/1 weights) selects contributing entries.
Tensor binary_ce_loss(Tape& tape, const Tensor& probabilities, const std::vector<int>& labels,
                      const std::vector<double>* valid_mask = nullptr);

// relations: required for rkt, ignored otherwise. students: rkt's per-student
// forgetting table, one slot per training student id.
std::unique_ptr<Model> make_model(const ModelSpec& spec, const RelationMatrix* relations,
                                  std::vector<std::string> students);

}  // namespace ktrace
