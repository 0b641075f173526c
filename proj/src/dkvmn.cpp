#include "ktrace/dkvmn.hpp"

#include <cmath>
#include <stdexcept>

namespace ktrace {

DkvmnModel::DkvmnModel(const ModelSpec& spec) : spec_(spec) {
  spec_.kind = ModelKind::dkvmn;
  const int d = spec_.d;
  const int E = spec_.exercise_count;
  const int N = spec_.memory_slots;
  if (d < 1 || E < 1 || N < 1)
    throw std::invalid_argument("dkvmn needs positive d, memory slots and exercise count");
  std::mt19937_64 rng(spec_.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  key_emb_ = add_param("emb.key", exercise_vocab(E), d, rng, bound, true);
  val_emb_ = add_param("emb.value", interaction_vocab(E), d, rng, bound, true);
  m_key_ = add_param("memory.key", N, d, rng, bound, true);
  m_val0_ = add_param("memory.value0", N, d, rng, bound, true);
  w_erase_ = add_param("write.erase.w", d, d, rng, bound, true);
  b_erase_ = add_const_init("write.erase.b", 1, d, 0.0, false);
  w_add_ = add_param("write.add.w", d, d, rng, bound, true);
  b_add_ = add_const_init("write.add.b", 1, d, 0.0, false);
  w_f_ = add_param("read.f.w", 2 * d, d, rng, bound, true);
  b_f_ = add_const_init("read.f.b", 1, d, 0.0, false);
  w_p_ = add_param("read.p.w", d, 1, rng, bound, true);
  b_p_ = add_const_init("read.p.b", 1, 1, 0.0, false);
}

BatchResult DkvmnModel::forward(Tape& tape, const WindowSet& set,
                                std::span<const int> window_indices, Mode mode,
                                std::mt19937_64& rng) {
  const int E = spec_.exercise_count;
  if (window_indices.empty()) throw std::invalid_argument("empty batch");

  BatchResult result;
  Tensor loss = Tensor::scalar(0.0);
  Tensor m_key_t = tape.transpose(m_key_);  // [d, N], shared across the batch

  for (int b : window_indices) {
    const auto& w = set.windows[static_cast<std::size_t>(b)];
    const int k = w.content_size();
    if (k < 2) continue;

    Tensor m_val = m_val0_;
    std::vector<Tensor> window_probs;
    std::vector<int> window_labels;
    window_probs.reserve(static_cast<std::size_t>(k) - 1);

    for (int i = 0; i < k; ++i) {
      const auto slot = static_cast<std::size_t>(w.pad + i);
      const int y = w.interaction_ids[slot];
      const auto [e, r] = decode_interaction(y, E);

      Tensor key = tape.rows(key_emb_, {e});                              // [1, d]
      Tensor addr = tape.softmax(tape.matmul(key, m_key_t), 1);           // [1, N]

      if (i >= 1 && w.valid_mask[slot - 1]) {
        Tensor read = tape.matmul(addr, m_val);                           // [1, d]
        Tensor f = tape.tanh(tape.add(tape.matmul(tape.concat_cols(read, key), w_f_), b_f_));
        Tensor fd = tape.dropout(f, spec_.dropout, rng, mode == Mode::train);
        Tensor p = tape.sigmoid(tape.add(tape.matmul(fd, w_p_), b_p_));   // [1, 1]
        window_probs.push_back(p);
        window_labels.push_back(r);
      }

      Tensor value = tape.rows(val_emb_, {y});                            // [1, d]
      Tensor erase = tape.sigmoid(tape.add(tape.matmul(value, w_erase_), b_erase_));
      Tensor add_v = tape.tanh(tape.add(tape.matmul(value, w_add_), b_add_));
      Tensor addr_col = tape.transpose(addr);                             // [N, 1]
      Tensor erased = tape.mul(m_val, tape.sub(Tensor::scalar(1.0),
                                               tape.matmul(addr_col, erase)));
      m_val = tape.add(erased, tape.matmul(addr_col, add_v));
    }

    if (window_probs.empty()) continue;
    Tensor probs = tape.concat_rows(window_probs);                        // [targets, 1]
    loss = tape.add(loss, binary_ce_loss(tape, probs, window_labels));
    for (std::size_t i = 0; i < window_labels.size(); ++i) {
      result.probs.push_back(probs.values()[i]);
      result.labels.push_back(window_labels[i]);
      ++result.target_count;
    }
  }

  result.loss_sum = loss;
  return result;
}

}  // namespace ktrace
