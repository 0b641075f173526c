#include "ktrace/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ktrace/metrics.hpp"

namespace ktrace {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}

void TrainConfig::validate() const {
  if (d < 1) throw std::invalid_argument("d must be positive");
  if (window_len < 2) throw std::invalid_argument("window_len must be at least 2");
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
  if (l2 < 0.0) throw std::invalid_argument("l2 must be non-negative");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("val_fraction must be in [0, 1)");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda must be in [0, 1]");
  if (memory_slots < 1) throw std::invalid_argument("memory_slots must be positive");
  if (!(init_memory_hours > 0.0))
    throw std::invalid_argument("init_memory_hours must be positive");
}

void AdamOptimizer::step(std::vector<Param>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].tensor.values().size(), 0.0);
      v_[i].assign(params[i].tensor.values().size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("optimizer bound to other params");

  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto w = p.tensor.values_mut();
    const auto g = p.tensor.grad();
    if (g.size() != w.size())
      throw std::invalid_argument("missing gradient for parameter '" + p.name + "'");
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (std::isnan(g[j]))
        throw std::runtime_error("NaN gradient in parameter '" + p.name + "'");
      const double grad = p.decay ? g[j] + l2_ * w[j] : g[j];
      m_[i][j] = kBeta1 * m_[i][j] + (1.0 - kBeta1) * grad;
      v_[i][j] = kBeta2 * v_[i][j] + (1.0 - kBeta2) * grad * grad;
      w[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + kEps);
    }
  }
}

double global_grad_norm(const std::vector<Param>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_gradients(std::vector<Param>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.tensor.grad_mut()) g *= s;
  }
  return norm;
}

void zero_gradients(std::vector<Param>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

SplitMetrics evaluate_windows(Model& model, const WindowSet& set, int batch) {
  SplitMetrics out;
  std::vector<double> probs;
  std::vector<int> labels;
  double loss_sum = 0.0;
  std::mt19937_64 rng(0);  // unused in eval mode
  const int n = static_cast<int>(set.windows.size());
  for (int begin = 0; begin < n; begin += batch) {
    std::vector<int> idx(static_cast<std::size_t>(std::min(batch, n - begin)));
    std::iota(idx.begin(), idx.end(), begin);
    Tape tape(false);
    BatchResult r = model.forward(tape, set, idx, Mode::eval, rng);
    loss_sum += r.loss_sum.item();
    probs.insert(probs.end(), r.probs.begin(), r.probs.end());
    labels.insert(labels.end(), r.labels.begin(), r.labels.end());
    out.targets += r.target_count;
  }
  if (out.targets > 0) {
    out.loss = loss_sum / static_cast<double>(out.targets);
    out.auc = compute_auc(probs, labels);
    out.acc = compute_acc(probs, labels);
  }
  return out;
}

TrainOutput train_model(const TrainConfig& config, const std::vector<StudentLog>& students,
                        int exercise_count, const RelationMatrix* relations) {
  config.validate();
  if (students.empty()) throw std::invalid_argument("empty training set");
  if (exercise_count < 1) throw std::invalid_argument("exercise_count must be positive");

  // Hold out whole students for checkpoint selection.
  std::vector<std::size_t> order(students.size());
  std::iota(order.begin(), order.end(), 0);
  {
    std::mt19937_64 split_rng(config.seed ^ 0x76616c5f73706c69ULL);
    std::shuffle(order.begin(), order.end(), split_rng);
  }
  std::size_t n_val = students.size() >= 2
                          ? static_cast<std::size_t>(std::llround(
                                config.val_fraction * static_cast<double>(students.size())))
                          : 0;
  n_val = std::min(n_val, students.size() - 1);
  std::vector<StudentLog> fit_students, val_students;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? val_students : fit_students).push_back(students[order[i]]);

  WindowSet fit_set = window_cohort(fit_students, config.window_len, exercise_count);
  WindowSet val_set = window_cohort(val_students, config.window_len, exercise_count);
  if (fit_set.total_targets() == 0) throw std::invalid_argument("training set has no targets");

  ModelSpec spec;
  spec.kind = config.model;
  spec.exercise_count = exercise_count;
  spec.window_len = config.window_len;
  spec.d = config.d;
  spec.memory_slots = config.memory_slots;
  spec.vanilla_rnn = config.vanilla_rnn;
  spec.dropout = config.dropout;
  spec.lambda = config.lambda;
  spec.init_memory_hours = config.init_memory_hours;
  spec.seed = config.seed;
  std::vector<std::string> fit_ids = fit_set.student_ids;
  auto model = make_model(spec, relations, std::move(fit_ids));

  AdamOptimizer adam(config.lr, config.l2);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x73687566666c6521ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0x64726f706f757421ULL);

  TrainOutput out;
  std::vector<int> idx(fit_set.windows.size());
  std::iota(idx.begin(), idx.end(), 0);

  std::vector<std::vector<double>> best_values;
  double best_score = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);
    std::vector<double> probs;
    std::vector<int> labels;
    double loss_sum = 0.0;
    long targets = 0;
    for (std::size_t begin = 0; begin < idx.size();
         begin += static_cast<std::size_t>(config.batch)) {
      const auto count =
          std::min<std::size_t>(static_cast<std::size_t>(config.batch), idx.size() - begin);
      std::span<const int> batch_idx(idx.data() + begin, count);
      Tape tape(true);
      BatchResult r = model->forward(tape, fit_set, batch_idx, Mode::train, dropout_rng);
      if (r.target_count == 0) continue;
      Tensor mean_loss = tape.scale(r.loss_sum, 1.0 / static_cast<double>(r.target_count));
      tape.backward(mean_loss);
      clip_gradients(model->params(), config.grad_clip);
      adam.step(model->params());
      zero_gradients(model->params());
      out.batch_losses.push_back(mean_loss.item());
      loss_sum += r.loss_sum.item();
      targets += r.target_count;
      probs.insert(probs.end(), r.probs.begin(), r.probs.end());
      labels.insert(labels.end(), r.labels.begin(), r.labels.end());
    }

    MetricRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.loss = targets > 0 ? loss_sum / static_cast<double>(targets) : 0.0;
    if (targets > 0) {
      train_row.auc = compute_auc(probs, labels);
      train_row.acc = compute_acc(probs, labels);
    }
    out.log.push_back(train_row);

    double score = train_row.auc.value_or(-train_row.loss);
    if (val_set.total_targets() > 0) {
      SplitMetrics vm = evaluate_windows(*model, val_set, config.batch);
      MetricRow val_row{epoch, "val", vm.loss, vm.auc, vm.acc};
      out.log.push_back(val_row);
      score = vm.auc.value_or(-vm.loss);
      if (score > best_score) out.best_val_auc = vm.auc;
    }
    if (score > best_score) {
      best_score = score;
      out.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : model->params()) {
        auto v = p.tensor.values();
        best_values.emplace_back(v.begin(), v.end());
      }
    }
  }

  if (!best_values.empty())
    for (std::size_t i = 0; i < model->params().size(); ++i) {
      auto dst = model->params()[i].tensor.values_mut();
      std::copy(best_values[i].begin(), best_values[i].end(), dst.begin());
    }
  out.model = std::move(model);
  return out;
}

}  // namespace ktrace
