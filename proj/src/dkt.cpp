#include "ktrace/dkt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ktrace {

DktModel::DktModel(const ModelSpec& spec) : spec_(spec) {
  spec_.kind = ModelKind::dkt;
  const int d = spec_.d;
  const int E = spec_.exercise_count;
  if (d < 1 || E < 1) throw std::invalid_argument("dkt needs positive d and exercise count");
  const int gate_cols = spec_.vanilla_rnn ? d : 4 * d;
  std::mt19937_64 rng(spec_.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  emb_ = add_param("emb.interaction", interaction_vocab(E), d, rng, bound, true);
  w_x_ = add_param("lstm.w_x", d, gate_cols, rng, bound, true);
  w_h_ = add_param("lstm.w_h", d, gate_cols, rng, bound, true);
  b_ = add_const_init("lstm.b", 1, gate_cols, 0.0, false);
  if (!spec_.vanilla_rnn)
    for (int i = d; i < 2 * d; ++i) b_.values_mut()[static_cast<std::size_t>(i)] = 1.0;
  w_out_ = add_param("out.w", d, exercise_vocab(E), rng, bound, true);
  b_out_ = add_const_init("out.b", 1, exercise_vocab(E), 0.0, false);
}

BatchResult DktModel::forward(Tape& tape, const WindowSet& set,
                              std::span<const int> window_indices, Mode mode,
                              std::mt19937_64& rng) {
  const int d = spec_.d;
  const int B = static_cast<int>(window_indices.size());
  if (B == 0) throw std::invalid_argument("empty batch");
  const int L = set.windows[static_cast<std::size_t>(window_indices[0])].length();

  BatchResult result;
  Tensor h = Tensor::zeros({B, d});
  Tensor c = Tensor::zeros({B, d});
  Tensor loss = Tensor::scalar(0.0);

  int start = L;
  for (int b : window_indices) {
    const auto& w = set.windows[static_cast<std::size_t>(b)];
    if (w.length() != L) throw std::invalid_argument("mixed window lengths in batch");
    start = std::min(start, w.pad);
  }

  for (int j = start; j < L; ++j) {
    std::vector<int> ids(static_cast<std::size_t>(B));
    Tensor content = Tensor::zeros({B, d});  // 1 for rows whose window has content at j
    std::vector<double> target_mask(static_cast<std::size_t>(B), 0.0);
    std::vector<int> next_ex(static_cast<std::size_t>(B), 0);
    std::vector<int> step_labels(static_cast<std::size_t>(B), 0);
    bool any_target = false;
    for (int bi = 0; bi < B; ++bi) {
      const auto& w = set.windows[static_cast<std::size_t>(window_indices[bi])];
      const auto slot = static_cast<std::size_t>(j);
      ids[static_cast<std::size_t>(bi)] = w.interaction_ids[slot];
      if (j >= w.pad) {
        auto* row = content.values_mut().data() + static_cast<std::size_t>(bi) * d;
        std::fill(row, row + d, 1.0);
      }
      if (w.valid_mask[slot]) {
        target_mask[static_cast<std::size_t>(bi)] = 1.0;
        next_ex[static_cast<std::size_t>(bi)] = w.exercise_ids[slot];
        step_labels[static_cast<std::size_t>(bi)] = w.labels[slot];
        any_target = true;
      }
    }

    Tensor x = tape.rows(emb_, ids);
    Tensor z = tape.add(tape.add(tape.matmul(x, w_x_), tape.matmul(h, w_h_)),
                        tape.tile_rows(b_, B));
    if (spec_.vanilla_rnn) {
      h = tape.mul(tape.tanh(z), content);
    } else {
      Tensor i_g = tape.sigmoid(tape.slice_cols(z, 0, d));
      Tensor f_g = tape.sigmoid(tape.slice_cols(z, d, d));
      Tensor g_g = tape.tanh(tape.slice_cols(z, 2 * d, d));
      Tensor o_g = tape.sigmoid(tape.slice_cols(z, 3 * d, d));
      c = tape.mul(tape.add(tape.mul(f_g, c), tape.mul(i_g, g_g)), content);
      h = tape.mul(tape.mul(o_g, tape.tanh(c)), content);
    }

    if (!any_target) continue;
    Tensor hd = tape.dropout(h, spec_.dropout, rng, mode == Mode::train);
    Tensor out = tape.sigmoid(
        tape.add(tape.matmul(hd, w_out_), tape.tile_rows(b_out_, B)));
    Tensor p = tape.gather_cols(out, next_ex);
    loss = tape.add(loss, binary_ce_loss(tape, p, step_labels, &target_mask));
    for (int bi = 0; bi < B; ++bi) {
      if (target_mask[static_cast<std::size_t>(bi)] == 0.0) continue;
      result.probs.push_back(p.values()[static_cast<std::size_t>(bi)]);
      result.labels.push_back(step_labels[static_cast<std::size_t>(bi)]);
      ++result.target_count;
    }
  }

  result.loss_sum = loss;
  return result;
}

}  // namespace ktrace
