// Key-value memory tracing: a static key matrix addresses a per-sequence
// value matrix by softmax attention; reads feed a prediction head and writes
// apply erase/add vectors at the same addresses.

#pragma once

#include "ktrace/model.hpp"

namespace ktrace {

class DkvmnModel : public Model {
 public:
  explicit DkvmnModel(const ModelSpec& spec);

  ModelKind kind() const override { return ModelKind::dkvmn; }
  ModelSpec spec() const override { return spec_; }

  BatchResult forward(Tape& tape, const WindowSet& set, std::span<const int> window_indices,
                      Mode mode, std::mt19937_64& rng) override;

 private:
  ModelSpec spec_;
  Tensor key_emb_;  // [E+1, d]
  Tensor val_emb_;  // [2E+2, d]
  Tensor m_key_;    // [N, d]
  Tensor m_val0_;   // [N, d] initial value memory, shared across sequences
  Tensor w_erase_, b_erase_;  // [d, d], [1, d]
  Tensor w_add_, b_add_;
  Tensor w_f_, b_f_;          // [2d, d], [1, d]
  Tensor w_p_, b_p_;          // [d, 1], [1, 1]
};

}  // namespace ktrace
