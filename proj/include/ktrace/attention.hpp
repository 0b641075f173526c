// Self-attentive knowledge tracing. One causal scaled dot-product attention
// layer (queries from the next exercise, keys/values from past interactions
// plus position embeddings) feeds a relu feed-forward block with residual and
// layer norm into a sigmoid head. The relation-aware variant blends the
// attention weights with a relation distribution built from the exercise
// relation matrix and per-student exponential forgetting.

#pragma once

#include <unordered_map>

#include "ktrace/model.hpp"

namespace ktrace {

struct AttentionTrace {
  int content_size = 0;                // k interactions in the window
  // rows[v]: the k blended weights used when predicting content position
  // row_targets[v]; entries at or past that position are exactly zero.
  std::vector<std::vector<double>> rows;
  std::vector<int> row_targets;
  std::vector<int> content_exercises;  // k
  std::vector<int> target_exercises;   // exercise predicted by each row
};

class AttnModel : public Model {
 public:
  AttnModel(const ModelSpec& spec, const RelationMatrix* relations,
            std::vector<std::string> students);

  ModelKind kind() const override { return spec_.kind; }
  ModelSpec spec() const override { return spec_; }
  std::vector<std::string> student_table() const override { return students_; }

  BatchResult forward(Tape& tape, const WindowSet& set, std::span<const int> window_indices,
                      Mode mode, std::mt19937_64& rng) override;

  // Eval-mode pass that records the attention rows of every window.
  std::vector<AttentionTrace> traces(const WindowSet& set, std::span<const int> window_indices);

  const RelationMatrix& relations() const { return relations_; }

 private:
  struct WindowOut {
    Tensor probs;  // [k-1, 1]
    std::vector<int> labels;
  };
  WindowOut forward_window(Tape& tape, const EncodedWindow& w, const std::string& student_id,
                           Mode mode, std::mt19937_64& rng, AttentionTrace* sink);

  ModelSpec spec_;
  RelationMatrix relations_;
  std::vector<std::string> students_;
  std::unordered_map<std::string, int> slot_of_;

  Tensor int_emb_;   // [2E+2, d]
  Tensor ex_emb_;    // [E+1, d]
  Tensor pos_emb_;   // [L, d]
  Tensor w_q_, w_k_, w_v_;  // [d, d]
  Tensor w_1_, b_1_, w_2_, b_2_;
  Tensor ln1_gain_, ln1_bias_;
  Tensor ln2_gain_, ln2_bias_;
  Tensor w_out_, b_out_;
  Tensor s_raw_;     // [n_students, 1] forgetting strengths before softplus (rkt)
};

}  // namespace ktrace
