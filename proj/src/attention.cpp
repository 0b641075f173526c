#include "ktrace/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace ktrace {

namespace {
constexpr double kMaskedOut = -1e9;
}

AttnModel::AttnModel(const ModelSpec& spec, const RelationMatrix* relations,
                     std::vector<std::string> students)
    : spec_(spec), students_(std::move(students)) {
  if (spec_.kind != ModelKind::sakt && spec_.kind != ModelKind::rkt)
    throw std::invalid_argument("attention model must be sakt or rkt");
  const int d = spec_.d;
  const int E = spec_.exercise_count;
  const int L = spec_.window_len;
  if (d < 1 || E < 1 || L < 2)
    throw std::invalid_argument("attention model needs positive d, exercise count and window");

  const bool relation_aware = spec_.kind == ModelKind::rkt;
  if (relation_aware) {
    if (!relations) throw std::invalid_argument("rkt requires a relation matrix");
    if (relations->exercise_count() != E)
      throw std::invalid_argument("relation matrix does not match the exercise count");
    if (students_.empty()) throw std::invalid_argument("rkt requires the training student table");
    relations_ = *relations;
    for (std::size_t i = 0; i < students_.size(); ++i)
      slot_of_[students_[i]] = static_cast<int>(i);
  } else {
    students_.clear();
  }

  std::mt19937_64 rng(spec_.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  int_emb_ = add_param("emb.interaction", interaction_vocab(E), d, rng, bound, true);
  ex_emb_ = add_param("emb.exercise", exercise_vocab(E), d, rng, bound, true);
  pos_emb_ = add_param("emb.position", L, d, rng, bound, true);
  w_q_ = add_param("attn.w_q", d, d, rng, bound, true);
  w_k_ = add_param("attn.w_k", d, d, rng, bound, true);
  w_v_ = add_param("attn.w_v", d, d, rng, bound, true);
  w_1_ = add_param("ffn.w1", d, d, rng, bound, true);
  b_1_ = add_const_init("ffn.b1", 1, d, 0.0, false);
  w_2_ = add_param("ffn.w2", d, d, rng, bound, true);
  b_2_ = add_const_init("ffn.b2", 1, d, 0.0, false);
  ln1_gain_ = add_const_init("ln1.gain", 1, d, 1.0, false);
  ln1_bias_ = add_const_init("ln1.bias", 1, d, 0.0, false);
  ln2_gain_ = add_const_init("ln2.gain", 1, d, 1.0, false);
  ln2_bias_ = add_const_init("ln2.bias", 1, d, 0.0, false);
  w_out_ = add_param("out.w", d, 1, rng, bound, true);
  b_out_ = add_const_init("out.b", 1, 1, 0.0, false);
  if (relation_aware)
    s_raw_ = add_const_init("forget.s_raw", static_cast<int>(students_.size()), 1,
                            spec_.init_memory_hours, false);
}

AttnModel::WindowOut AttnModel::forward_window(Tape& tape, const EncodedWindow& w,
                                               const std::string& student_id, Mode mode,
                                               std::mt19937_64& rng, AttentionTrace* sink) {
  const int d = spec_.d;
  const int E = spec_.exercise_count;
  const int k = w.content_size();

  std::vector<int> ids(static_cast<std::size_t>(k));
  std::vector<int> slots(static_cast<std::size_t>(k));
  std::vector<int> content_ex(static_cast<std::size_t>(k));
  std::vector<int> row_pos;  // content position each query row predicts, minus one
  for (int i = 0; i < k; ++i) {
    const auto slot = static_cast<std::size_t>(w.pad + i);
    ids[static_cast<std::size_t>(i)] = w.interaction_ids[slot];
    slots[static_cast<std::size_t>(i)] = w.pad + i;
    content_ex[static_cast<std::size_t>(i)] = decode_interaction(w.interaction_ids[slot], E).first;
    if (i < k - 1 && w.valid_mask[slot]) row_pos.push_back(i);
  }
  const int q_rows = static_cast<int>(row_pos.size());
  if (q_rows == 0) return {};

  std::vector<int> targets(static_cast<std::size_t>(q_rows));
  std::vector<int> labels(static_cast<std::size_t>(q_rows));
  for (int v = 0; v < q_rows; ++v) {
    const auto slot = static_cast<std::size_t>(w.pad + row_pos[static_cast<std::size_t>(v)]);
    targets[static_cast<std::size_t>(v)] = w.exercise_ids[slot];
    labels[static_cast<std::size_t>(v)] = w.labels[slot];
  }

  Tensor x = tape.add(tape.rows(int_emb_, ids), tape.rows(pos_emb_, slots));  // [k, d]
  Tensor q_emb = tape.rows(ex_emb_, targets);                                 // [q_rows, d]
  Tensor q = tape.matmul(q_emb, w_q_);
  Tensor keys = tape.matmul(x, w_k_);
  Tensor vals = tape.matmul(x, w_v_);

  Tensor mask = Tensor::zeros({q_rows, k});
  for (int v = 0; v < q_rows; ++v)
    for (int j = row_pos[static_cast<std::size_t>(v)] + 1; j < k; ++j)
      mask.values_mut()[static_cast<std::size_t>(v) * k + j] = kMaskedOut;

  Tensor scores = tape.scale(tape.matmul(q, tape.transpose(keys)),
                             1.0 / std::sqrt(static_cast<double>(d)));
  Tensor alpha = tape.softmax(tape.add(scores, mask), 1);
  Tensor beta = alpha;

  if (spec_.kind == ModelKind::rkt) {
    Tensor rel = Tensor::zeros({q_rows, k});
    Tensor neg_gap = Tensor::zeros({q_rows, k});
    for (int v = 0; v < q_rows; ++v) {
      const int t = row_pos[static_cast<std::size_t>(v)];
      const std::int64_t target_ts = w.target_timestamp(w.pad + t);
      for (int j = 0; j <= t; ++j) {
        const auto cell = static_cast<std::size_t>(v) * k + j;
        rel.values_mut()[cell] = relations_.get(targets[static_cast<std::size_t>(v)],
                                                content_ex[static_cast<std::size_t>(j)]);
        const double gap_hours =
            static_cast<double>(target_ts - w.timestamps[static_cast<std::size_t>(w.pad + j)]) /
            3600e3;
        neg_gap.values_mut()[cell] = -std::max(gap_hours, 0.0);
      }
    }

    Tensor strength;  // softplus keeps the per-student hours positive
    auto it = slot_of_.find(student_id);
    if (it != slot_of_.end()) {
      strength = tape.softplus(tape.rows(s_raw_, {it->second}));
    } else {
      double mean_raw = 0.0;
      for (double v : s_raw_.values()) mean_raw += v;
      mean_raw /= static_cast<double>(s_raw_.values().size());
      strength = tape.softplus(Tensor::scalar(mean_raw));
    }
    Tensor decay = tape.exp(tape.mul(neg_gap, tape.reciprocal(strength)));
    Tensor r = tape.softmax(tape.add(tape.add(rel, decay), mask), 1);
    beta = tape.add(tape.scale(alpha, spec_.lambda), tape.scale(r, 1.0 - spec_.lambda));
  }

  if (sink) {
    sink->content_size = k;
    sink->content_exercises = content_ex;
    sink->target_exercises = targets;
    sink->row_targets.resize(static_cast<std::size_t>(q_rows));
    sink->rows.resize(static_cast<std::size_t>(q_rows));
    for (int v = 0; v < q_rows; ++v) {
      sink->row_targets[static_cast<std::size_t>(v)] = row_pos[static_cast<std::size_t>(v)] + 1;
      const double* row = beta.values().data() + static_cast<std::size_t>(v) * k;
      sink->rows[static_cast<std::size_t>(v)].assign(row, row + k);
    }
  }

  const bool training = mode == Mode::train;
  Tensor y = tape.dropout(tape.matmul(beta, vals), spec_.dropout, rng, training);
  Tensor h = tape.layer_norm(tape.add(q_emb, y), ln1_gain_, ln1_bias_);
  Tensor inner = tape.relu(tape.add(tape.matmul(h, w_1_), tape.tile_rows(b_1_, q_rows)));
  Tensor f = tape.add(tape.matmul(inner, w_2_), tape.tile_rows(b_2_, q_rows));
  Tensor out = tape.layer_norm(tape.add(h, tape.dropout(f, spec_.dropout, rng, training)),
                               ln2_gain_, ln2_bias_);
  Tensor logits = tape.add(tape.matmul(out, w_out_), tape.tile_rows(b_out_, q_rows));
  return {tape.sigmoid(logits), std::move(labels)};
}

BatchResult AttnModel::forward(Tape& tape, const WindowSet& set,
                               std::span<const int> window_indices, Mode mode,
                               std::mt19937_64& rng) {
  if (window_indices.empty()) throw std::invalid_argument("empty batch");
  BatchResult result;
  Tensor loss = Tensor::scalar(0.0);
  for (int b : window_indices) {
    const auto& w = set.windows[static_cast<std::size_t>(b)];
    if (w.content_size() < 2) continue;
    const auto& student = set.student_ids[static_cast<std::size_t>(w.student_index)];
    WindowOut wo = forward_window(tape, w, student, mode, rng, nullptr);
    if (wo.labels.empty()) continue;
    loss = tape.add(loss, binary_ce_loss(tape, wo.probs, wo.labels));
    for (std::size_t i = 0; i < wo.labels.size(); ++i) {
      result.probs.push_back(wo.probs.values()[i]);
      result.labels.push_back(wo.labels[i]);
      ++result.target_count;
    }
  }
  result.loss_sum = loss;
  return result;
}

std::vector<AttentionTrace> AttnModel::traces(const WindowSet& set,
                                              std::span<const int> window_indices) {
  Tape tape(false);
  std::mt19937_64 rng(0);
  std::vector<AttentionTrace> out;
  for (int b : window_indices) {
    const auto& w = set.windows[static_cast<std::size_t>(b)];
    if (w.content_size() < 2) continue;
    AttentionTrace trace;
    const auto& student = set.student_ids[static_cast<std::size_t>(w.student_index)];
    forward_window(tape, w, student, Mode::eval, rng, &trace);
    if (!trace.rows.empty()) out.push_back(std::move(trace));
  }
  return out;
}

}  // namespace ktrace
