#include "ktrace/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ktrace/metrics.hpp"

namespace ktrace {

EvalReport rolling_evaluate(Model& model, const std::vector<StudentLog>& students, int batch) {
  const ModelSpec spec = model.spec();
  const int E = spec.exercise_count;
  const int L = spec.window_len;

  EvalReport report;
  std::vector<double> probs;
  std::vector<int> labels;
  std::mt19937_64 rng(0);

  for (const auto& student : students) {
    const auto& seq = student.interactions;
    if (seq.size() < 2) continue;

    WindowSet set;
    set.student_ids.push_back(student.student_id);
    for (std::size_t i = 1; i < seq.size(); ++i)
      set.windows.push_back(make_rolling_window(seq, i, L, E, 0));

    std::vector<double> student_probs;
    const int n = static_cast<int>(set.windows.size());
    for (int begin = 0; begin < n; begin += batch) {
      std::vector<int> idx(static_cast<std::size_t>(std::min(batch, n - begin)));
      std::iota(idx.begin(), idx.end(), begin);
      Tape tape(false);
      BatchResult r = model.forward(tape, set, idx, Mode::eval, rng);
      if (r.target_count != static_cast<long>(idx.size()))
        throw std::logic_error("rolling window produced an unexpected prediction count");
      student_probs.insert(student_probs.end(), r.probs.begin(), r.probs.end());
    }

    std::vector<int> student_labels;
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const auto& target = seq[i];
      if (target.exercise_id >= E) ++report.oov_count;
      student_labels.push_back(target.response);
      report.records.push_back({student.student_id, static_cast<int>(i), target.exercise_id,
                                target.response, student_probs[i - 1]});
    }
    if (auto sa = compute_auc(student_probs, student_labels)) {
      report.per_student_mean_auc =
          report.per_student_mean_auc.value_or(0.0) + *sa;  // summed, divided below
      ++report.students_scored;
    }
    probs.insert(probs.end(), student_probs.begin(), student_probs.end());
    labels.insert(labels.end(), student_labels.begin(), student_labels.end());
  }

  report.n_predictions = static_cast<long>(probs.size());
  if (report.n_predictions > 0) {
    report.auc = compute_auc(probs, labels);
    report.acc = compute_acc(probs, labels);
    report.mean_loss = mean_bce(probs, labels);
  }
  if (report.students_scored > 0)
    report.per_student_mean_auc =
        *report.per_student_mean_auc / static_cast<double>(report.students_scored);
  return report;
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_predictions=" << n_predictions << "\n";
  os << "oov_count=" << oov_count << "\n";
  os << "auc=";
  if (auc)
    os << *auc << "\n";
  else
    os << "nan\n";
  os << "acc=" << acc << "\n";
  os << "mean_loss=" << mean_loss << "\n";
  os << "per_student_mean_auc=";
  if (per_student_mean_auc)
    os << *per_student_mean_auc << "\n";
  else
    os << "nan\n";
  os << "students_scored=" << students_scored << "\n";
  return os.str();
}

void write_predictions_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions: " + path);
  out.precision(17);
  out << "student_id,position,exercise_id,label,prob\n";
  for (const auto& r : report.records)
    out << r.student_id << ',' << r.position << ',' << r.exercise_id << ',' << r.label << ','
        << r.prob << "\n";
  if (!out) throw std::runtime_error("failed writing predictions: " + path);
}

}  // namespace ktrace
