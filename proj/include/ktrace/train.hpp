// Adam optimization with selective weight decay, gradient clipping, and the
// seeded mini-batch training loop with best-validation checkpoint selection.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ktrace/model.hpp"

namespace ktrace {

struct TrainConfig {
  ModelKind model = ModelKind::sakt;
  int d = 200;
  int window_len = 50;
  int batch = 128;
  int epochs = 10;
  double lr = 0.001;
  double dropout = 0.1;
  double l2 = 1e-5;
  double grad_clip = 5.0;
  double val_fraction = 0.1;
  std::uint64_t seed = 1;
  double lambda = 0.5;
  int memory_slots = 50;
  bool vanilla_rnn = false;
  double init_memory_hours = 24.0;

  void validate() const;
};

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double l2) : lr_(lr), l2_(l2) {}

  // Reads grads, applies the update, leaves grads in place. l2 * weight is
  // added to the gradient of decay-flagged parameters only.
  void step(std::vector<Param>& params);
  long steps() const { return t_; }

 private:
  double lr_;
  double l2_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

double global_grad_norm(const std::vector<Param>& params);
// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_gradients(std::vector<Param>& params, double max_norm);
void zero_gradients(std::vector<Param>& params);

struct MetricRow {
  int epoch = 0;
  std::string split;  // train or val
  double loss = 0.0;
  std::optional<double> auc;
  double acc = 0.0;
};

struct SplitMetrics {
  double loss = 0.0;
  std::optional<double> auc;
  double acc = 0.0;
  long targets = 0;
};

// Full-window evaluation (no gradient, no dropout) used for validation.
SplitMetrics evaluate_windows(Model& model, const WindowSet& set, int batch);

struct TrainOutput {
  std::unique_ptr<Model> model;  // best-validation weights restored
  std::vector<MetricRow> log;
  std::vector<double> batch_losses;  // mean loss of every optimizer step
  int best_epoch = 0;
  std::optional<double> best_val_auc;
};

TrainOutput train_model(const TrainConfig& config, const std::vector<StudentLog>& students,
                        int exercise_count, const RelationMatrix* relations);

}  // namespace ktrace
