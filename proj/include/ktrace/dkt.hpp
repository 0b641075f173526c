// Recurrent knowledge tracing: interaction embeddings feed an lstm (or plain
// tanh rnn); a per-exercise sigmoid output head is indexed by the next
// exercise id at every step.

#pragma once

#include "ktrace/model.hpp"

namespace ktrace {

class DktModel : public Model {
 public:
  explicit DktModel(const ModelSpec& spec);

  ModelKind kind() const override { return ModelKind::dkt; }
  ModelSpec spec() const override { return spec_; }

  BatchResult forward(Tape& tape, const WindowSet& set, std::span<const int> window_indices,
                      Mode mode, std::mt19937_64& rng) override;

 private:
  ModelSpec spec_;
  Tensor emb_;    // [2E+2, d]
  Tensor w_x_;    // [d, 4d] lstm / [d, d] rnn
  Tensor w_h_;
  Tensor b_;      // [1, 4d] / [1, d], forget gate slice starts at +1
  Tensor w_out_;  // [d, E+1]
  Tensor b_out_;  // [1, E+1]
};

}  // namespace ktrace
