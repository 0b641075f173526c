// Rolling test protocol: each revealed response joins the observed context
// before the next prediction; predictions are pooled into AUC/ACC.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ktrace/model.hpp"

namespace ktrace {

struct PredictionRecord {
  std::string student_id;
  int position = 0;  // index within the student's sequence
  int exercise_id = 0;
  int label = 0;
  double prob = 0.0;
};

struct EvalReport {
  long n_predictions = 0;
  long oov_count = 0;  // predictions on exercises outside the training catalog
  std::optional<double> auc;
  double acc = 0.0;
  double mean_loss = 0.0;
  std::optional<double> per_student_mean_auc;
  int students_scored = 0;  // students contributing to the per-student mean
  std::vector<PredictionRecord> records;

  std::string summary() const;
};

EvalReport rolling_evaluate(Model& model, const std::vector<StudentLog>& students,
                            int batch = 64);

void write_predictions_csv(const std::string& path, const EvalReport& report);

}  // namespace ktrace
