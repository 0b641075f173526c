#include "ktrace/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ktrace/attention.hpp"
#include "ktrace/checkpoint.hpp"
#include "ktrace/data.hpp"
#include "ktrace/eval.hpp"
#include "ktrace/metrics.hpp"
#include "ktrace/train.hpp"

namespace fs = std::filesystem;

namespace ktrace {

namespace {

void add_synth_defaults(KeyValueConfig& c) {
  c.set("synth.students", "2000");
  c.set("synth.exercises", "100");
  c.set("synth.skills", "10");
  c.set("synth.density", "0.3");
  c.set("synth.halflife_hours", "24");
  c.set("synth.seed", "7");
  c.set("synth.min_interactions", "40");
  c.set("synth.max_interactions", "120");
  c.set("synth.learn_gain", "1.2");
  c.set("synth.incorrect_gain", "0.05");
  c.set("synth.transfer", "0.3");
  c.set("synth.ability_sd", "0.4");
  c.set("synth.difficulty_sd", "0.8");
  c.set("synth.difficulty_shift", "0.5");
  c.set("synth.slope", "1.3");
  c.set("synth.proficiency_cap", "1.5");
  c.set("synth.session_break_prob", "0.12");
  c.set("synth.focus_prob", "0.4");
  c.set("synth.within_gap_minutes", "3");
  c.set("synth.between_gap_hours", "12");
  c.set("synth.between_gap_sigma", "0.6");
  c.set("synth.familiarity_boost", "1.5");
  c.set("synth.partner_count", "3");
  c.set("synth.partner_transfer", "0.6");
  c.set("synth.partner_interference", "0");
  c.set("synth.partner_unlock", "0");
}

void add_data_defaults(KeyValueConfig& c) {
  c.set("data.log", "");
  c.set("data.manifest", "");
  c.set("data.window_len", "50");
  c.set("data.train_fraction", "0.8");
  c.set("data.seed", "13");
}

void add_relations_defaults(KeyValueConfig& c) {
  c.set("relations.file", "");
  c.set("relations.theta", "0.8");
  c.set("relations.pair_cap", "2000000");
}

void add_train_defaults(KeyValueConfig& c) {
  c.set("train.model", "sakt");
  c.set("train.d", "200");
  c.set("train.batch", "128");
  c.set("train.epochs", "10");
  c.set("train.lr", "0.001");
  c.set("train.dropout", "0.1");
  c.set("train.l2", "1e-05");
  c.set("train.grad_clip", "5");
  c.set("train.val_fraction", "0.1");
  c.set("train.seed", "1");
  c.set("train.lambda", "0.5");
  c.set("train.memory_slots", "50");
  c.set("train.vanilla_rnn", "false");
  c.set("train.init_memory_hours", "24");
}

SynthConfig synth_config_from(const KeyValueConfig& c) {
  SynthConfig s;
  s.students = c.get_int("synth.students", s.students);
  s.exercises = c.get_int("synth.exercises", s.exercises);
  s.skills = c.get_int("synth.skills", s.skills);
  s.skill_graph_density = c.get_double("synth.density", s.skill_graph_density);
  s.forgetting_halflife_hours = c.get_double("synth.halflife_hours", s.forgetting_halflife_hours);
  s.seed = c.get_u64("synth.seed", s.seed);
  s.min_interactions = c.get_int("synth.min_interactions", s.min_interactions);
  s.max_interactions = c.get_int("synth.max_interactions", s.max_interactions);
  s.learn_gain = c.get_double("synth.learn_gain", s.learn_gain);
  s.incorrect_gain = c.get_double("synth.incorrect_gain", s.incorrect_gain);
  s.transfer = c.get_double("synth.transfer", s.transfer);
  s.ability_sd = c.get_double("synth.ability_sd", s.ability_sd);
  s.difficulty_sd = c.get_double("synth.difficulty_sd", s.difficulty_sd);
  s.difficulty_shift = c.get_double("synth.difficulty_shift", s.difficulty_shift);
  s.slope = c.get_double("synth.slope", s.slope);
  s.proficiency_cap = c.get_double("synth.proficiency_cap", s.proficiency_cap);
  s.session_break_prob = c.get_double("synth.session_break_prob", s.session_break_prob);
  s.focus_prob = c.get_double("synth.focus_prob", s.focus_prob);
  s.within_gap_minutes = c.get_double("synth.within_gap_minutes", s.within_gap_minutes);
  s.between_gap_hours = c.get_double("synth.between_gap_hours", s.between_gap_hours);
  s.between_gap_sigma = c.get_double("synth.between_gap_sigma", s.between_gap_sigma);
  s.familiarity_boost = c.get_double("synth.familiarity_boost", s.familiarity_boost);
  s.partner_count = c.get_int("synth.partner_count", s.partner_count);
  s.partner_transfer = c.get_double("synth.partner_transfer", s.partner_transfer);
  s.partner_interference = c.get_double("synth.partner_interference", s.partner_interference);
  s.partner_unlock = c.get_double("synth.partner_unlock", s.partner_unlock);
  return s;
}

TrainConfig train_config_from(const KeyValueConfig& c, int window_len) {
  TrainConfig t;
  t.model = model_kind_from(c.get_string("train.model", "sakt"));
  t.d = c.get_int("train.d", t.d);
  t.window_len = window_len;
  t.batch = c.get_int("train.batch", t.batch);
  t.epochs = c.get_int("train.epochs", t.epochs);
  t.lr = c.get_double("train.lr", t.lr);
  t.dropout = c.get_double("train.dropout", t.dropout);
  t.l2 = c.get_double("train.l2", t.l2);
  t.grad_clip = c.get_double("train.grad_clip", t.grad_clip);
  t.val_fraction = c.get_double("train.val_fraction", t.val_fraction);
  t.seed = c.get_u64("train.seed", t.seed);
  t.lambda = c.get_double("train.lambda", t.lambda);
  t.memory_slots = c.get_int("train.memory_slots", t.memory_slots);
  t.vanilla_rnn = c.get_bool("train.vanilla_rnn", t.vanilla_rnn);
  t.init_memory_hours = c.get_double("train.init_memory_hours", t.init_memory_hours);
  return t;
}

std::string require_path(const KeyValueConfig& c, const std::string& key) {
  const std::string v = c.get_string(key, "");
  if (v.empty())
    throw std::runtime_error("config key '" + key + "' is required for this subcommand");
  return v;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

struct LoadedDataset {
  IngestResult data;
  DatasetManifest manifest;
  std::vector<StudentLog> train_students;
  std::vector<StudentLog> test_students;
};

LoadedDataset load_dataset(const KeyValueConfig& c) {
  LoadedDataset out;
  out.data = ingest_log(require_path(c, "data.log"));
  out.manifest = DatasetManifest::load(require_path(c, "data.manifest"));
  for (const auto& s : out.data.students) {
    auto it = out.manifest.split.find(s.student_id);
    if (it == out.manifest.split.end())
      throw std::runtime_error("student '" + s.student_id + "' is missing from the manifest");
    (it->second == Split::train ? out.train_students : out.test_students).push_back(s);
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "epoch,split,loss,auc,acc\n";
  for (const auto& r : rows)
    os << r.epoch << ',' << r.split << ',' << fmt(r.loss) << ',' << fmt(r.auc) << ','
       << fmt(r.acc) << "\n";
  write_text(path, os.str());
}

RelationMatrix relations_for(const KeyValueConfig& c, ModelKind kind) {
  if (kind != ModelKind::rkt) return {};
  return RelationMatrix::load(require_path(c, "relations.file"));
}

void write_attention_csvs(const RunContext& run, AttnModel& model, const WindowSet& set) {
  std::vector<int> idx(set.windows.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto traces = model.traces(set, idx);
  if (traces.empty()) throw std::runtime_error("no window long enough to export attention");

  const int want = run.config.get_int("export.window_index", 0);
  if (want < 0 || want >= static_cast<int>(traces.size()))
    throw std::runtime_error("export.window_index " + std::to_string(want) + " out of range (" +
                             std::to_string(traces.size()) + " windows)");

  {
    const auto& tr = traces[static_cast<std::size_t>(want)];
    std::ostringstream os;
    os.precision(17);
    os << "row,col,weight,exercise_row,exercise_col\n";
    for (std::size_t v = 0; v < tr.rows.size(); ++v)
      for (int j = 0; j < tr.content_size; ++j)
        os << tr.row_targets[v] << ',' << j << ',' << tr.rows[v][static_cast<std::size_t>(j)]
           << ',' << tr.target_exercises[v] << ','
           << tr.content_exercises[static_cast<std::size_t>(j)] << "\n";
    write_text(join(run.out_dir, "attention_window.csv"), os.str());
  }

  // Averages aligned by content position; only causally valid cells count.
  std::map<std::pair<int, int>, std::pair<double, long>> cells;
  for (const auto& tr : traces)
    for (std::size_t v = 0; v < tr.rows.size(); ++v) {
      const int row = tr.row_targets[v];
      for (int j = 0; j < row; ++j) {
        auto& cell = cells[{row, j}];
        cell.first += tr.rows[v][static_cast<std::size_t>(j)];
        cell.second += 1;
      }
    }
  std::ostringstream os;
  os.precision(17);
  os << "row,col,mean_weight,count\n";
  for (const auto& [key, cell] : cells)
    os << key.first << ',' << key.second << ','
       << cell.first / static_cast<double>(cell.second) << ',' << cell.second << "\n";
  write_text(join(run.out_dir, "attention_average.csv"), os.str());
}

}  // namespace

KeyValueConfig default_config(const std::string& subcommand) {
  KeyValueConfig c;
  if (subcommand == "synth") {
    add_synth_defaults(c);
  } else if (subcommand == "ingest") {
    add_data_defaults(c);
  } else if (subcommand == "relations") {
    add_data_defaults(c);
    add_relations_defaults(c);
  } else if (subcommand == "train") {
    add_data_defaults(c);
    add_relations_defaults(c);
    add_train_defaults(c);
  } else if (subcommand == "evaluate") {
    add_data_defaults(c);
    add_relations_defaults(c);
    c.set("eval.checkpoint", "");
    c.set("eval.split", "test");
    c.set("eval.batch", "64");
  } else if (subcommand == "export-attention") {
    add_data_defaults(c);
    add_relations_defaults(c);
    c.set("export.checkpoint", "");
    c.set("export.split", "test");
    c.set("export.window_index", "0");
  } else if (subcommand == "compare") {
    add_synth_defaults(c);
    add_data_defaults(c);
    add_relations_defaults(c);
    add_train_defaults(c);
    c.set("compare.seeds", "5");
  } else {
    throw std::runtime_error("unknown subcommand '" + subcommand + "'");
  }
  return c;
}

RunContext prepare_run(const std::string& subcommand, const std::string& config_path,
                       const std::vector<std::string>& overrides, const std::string& out) {
  RunContext run;
  run.subcommand = subcommand;
  run.config = default_config(subcommand);
  if (!config_path.empty()) run.config.merge_file(config_path);
  std::string ns = subcommand;
  if (subcommand == "evaluate") ns = "eval";
  if (subcommand == "export-attention") ns = "export";
  for (const auto& o : overrides) run.config.set_pair(o, ns);

  if (!out.empty()) {
    run.out_dir = out;
  } else {
    const char* root = std::getenv(kOutRootEnv);
    fs::path base = root && *root ? fs::path(root) : fs::path("runs");
    fs::path dir = base / subcommand;
    for (int i = 2; fs::exists(dir); ++i)
      dir = base / (subcommand + "-" + std::to_string(i));
    run.out_dir = dir.string();
  }
  fs::create_directories(run.out_dir);
  write_text(join(run.out_dir, "resolved_config.txt"), run.config.serialize());
  return run;
}

void run_synth(const RunContext& run) {
  const auto students = generate_synthetic(synth_config_from(run.config));
  const std::string path = join(run.out_dir, "synthetic.csv");
  write_log_csv(path, students);
  long rows = 0;
  for (const auto& s : students) rows += static_cast<long>(s.interactions.size());
  std::cout << "wrote " << path << " (" << students.size() << " students, " << rows
            << " interactions)\n";
}

void run_ingest(const RunContext& run) {
  const auto data = ingest_log(require_path(run.config, "data.log"));
  if (data.rows_ok == 0) throw std::runtime_error("log contains no usable rows");
  const auto manifest =
      make_manifest(data, run.config.get_int("data.window_len", 50),
                    run.config.get_double("data.train_fraction", 0.8),
                    run.config.get_u64("data.seed", 13));
  manifest.save(join(run.out_dir, "manifest.txt"));
  write_text(join(run.out_dir, "ingest_report.txt"), data.report());
  std::cout << data.report();
  std::cout << "wrote " << join(run.out_dir, "manifest.txt") << "\n";
}

void run_relations(const RunContext& run) {
  auto ds = load_dataset(run.config);
  const auto pairs =
      accumulate_pairs(ds.train_students,
                       run.config.get_int("relations.pair_cap", 2'000'000));
  const auto matrix = build_relation_matrix(pairs, ds.manifest.skill_of,
                                            run.config.get_double("relations.theta", 0.8));
  const std::string path = join(run.out_dir, "relations.txt");
  matrix.save(path);
  std::cout << "wrote " << path << " (" << matrix.stored() << " entries from "
            << pairs.increments << " ordered pairs";
  if (pairs.capped_students > 0) std::cout << ", " << pairs.capped_students << " students capped";
  std::cout << ")\n";
}

void run_train(const RunContext& run) {
  auto ds = load_dataset(run.config);
  if (ds.train_students.empty()) throw std::runtime_error("manifest has no training students");
  TrainConfig cfg = train_config_from(run.config, ds.manifest.window_len);
  RelationMatrix rel = relations_for(run.config, cfg.model);
  TrainOutput result = train_model(cfg, ds.train_students, ds.manifest.exercise_count,
                                   cfg.model == ModelKind::rkt ? &rel : nullptr);

  save_checkpoint(join(run.out_dir, "checkpoint.bin"), *result.model);
  write_metrics_csv(join(run.out_dir, "metrics.csv"), result.log);
  std::ostringstream os;
  os << "model=" << to_string(cfg.model) << "\n";
  os << "best_epoch=" << result.best_epoch << "\n";
  os << "best_val_auc=" << fmt(result.best_val_auc) << "\n";
  os << "optimizer_steps=" << result.batch_losses.size() << "\n";
  write_text(join(run.out_dir, "train_summary.txt"), os.str());
  std::cout << os.str();
  std::cout << "wrote " << join(run.out_dir, "checkpoint.bin") << "\n";
}

void run_evaluate(const RunContext& run) {
  auto ds = load_dataset(run.config);
  const std::string ckpt = require_path(run.config, "eval.checkpoint");
  RelationMatrix rel = relations_for(run.config, checkpoint_kind(ckpt));
  std::unique_ptr<Model> model = load_checkpoint(ckpt, &rel);
  const std::string split = run.config.get_string("eval.split", "test");
  const auto& students = split == "train" ? ds.train_students : ds.test_students;
  if (students.empty()) throw std::runtime_error("no students in the " + split + " split");
  if (model->spec().exercise_count != ds.manifest.exercise_count)
    throw std::runtime_error("checkpoint exercise count does not match the manifest");

  EvalReport report =
      rolling_evaluate(*model, students, run.config.get_int("eval.batch", 64));
  write_predictions_csv(join(run.out_dir, "predictions.csv"), report);
  write_text(join(run.out_dir, "eval_summary.txt"), report.summary());
  std::cout << report.summary();
}

void run_export_attention(const RunContext& run) {
  auto ds = load_dataset(run.config);
  const std::string ckpt = require_path(run.config, "export.checkpoint");
  RelationMatrix rel = relations_for(run.config, checkpoint_kind(ckpt));
  std::unique_ptr<Model> model = load_checkpoint(ckpt, &rel);
  auto* attn = dynamic_cast<AttnModel*>(model.get());
  if (!attn)
    throw std::runtime_error("model '" + to_string(model->kind()) +
                             "' does not expose attention weights");
  const std::string split = run.config.get_string("export.split", "test");
  const auto& students = split == "train" ? ds.train_students : ds.test_students;
  WindowSet set = window_cohort(students, model->spec().window_len,
                                model->spec().exercise_count);
  write_attention_csvs(run, *attn, set);
  std::cout << "wrote " << join(run.out_dir, "attention_window.csv") << " and "
            << join(run.out_dir, "attention_average.csv") << "\n";
}

void run_compare(const RunContext& run) {
  // Fixed dataset, k training seeds, all four models under one configuration.
  std::vector<StudentLog> students;
  IngestResult data;
  if (!run.config.get_string("data.log", "").empty()) {
    data = ingest_log(run.config.get_string("data.log"));
  } else {
    students = generate_synthetic(synth_config_from(run.config));
    const std::string path = join(run.out_dir, "synthetic.csv");
    write_log_csv(path, students);
    data = ingest_log(path);
  }
  const auto manifest =
      make_manifest(data, run.config.get_int("data.window_len", 50),
                    run.config.get_double("data.train_fraction", 0.8),
                    run.config.get_u64("data.seed", 13));
  manifest.save(join(run.out_dir, "manifest.txt"));

  std::vector<StudentLog> train_students, test_students;
  for (const auto& s : data.students)
    (manifest.split.at(s.student_id) == Split::train ? train_students : test_students)
        .push_back(s);
  if (train_students.empty() || test_students.empty())
    throw std::runtime_error("compare needs non-empty train and test splits");

  const auto pairs = accumulate_pairs(
      train_students, run.config.get_int("relations.pair_cap", 2'000'000));
  const auto rel = build_relation_matrix(pairs, manifest.skill_of,
                                         run.config.get_double("relations.theta", 0.8));
  rel.save(join(run.out_dir, "relations.txt"));

  const int k = run.config.get_int("compare.seeds", 5);
  if (k < 1) throw std::runtime_error("compare.seeds must be positive");
  const auto base_seed = run.config.get_u64("train.seed", 1);
  const ModelKind kinds[] = {ModelKind::dkt, ModelKind::dkvmn, ModelKind::sakt, ModelKind::rkt};

  struct Row {
    std::string model;
    std::uint64_t seed;
    double auc, acc;
  };
  std::vector<Row> rows;
  std::map<std::string, std::vector<double>> aucs, accs;

  for (ModelKind kind : kinds) {
    for (int s = 0; s < k; ++s) {
      TrainConfig cfg = train_config_from(run.config, manifest.window_len);
      cfg.model = kind;
      cfg.seed = base_seed + static_cast<std::uint64_t>(s);
      try {
        TrainOutput trained = train_model(cfg, train_students, manifest.exercise_count,
                                          kind == ModelKind::rkt ? &rel : nullptr);
        EvalReport report = rolling_evaluate(*trained.model, test_students);
        if (!report.auc) throw std::runtime_error("test split is single-class, AUC undefined");
        rows.push_back({to_string(kind), cfg.seed, *report.auc, report.acc});
        aucs[to_string(kind)].push_back(*report.auc);
        accs[to_string(kind)].push_back(report.acc);
        std::cout << to_string(kind) << " seed=" << cfg.seed << " auc=" << fmt(*report.auc)
                  << " acc=" << fmt(report.acc) << "\n";
      } catch (const std::exception& e) {
        throw std::runtime_error("model " + to_string(kind) + " (seed " +
                                 std::to_string(cfg.seed) + ") failed: " + e.what());
      }
    }
  }

  {
    std::ostringstream os;
    os.precision(17);
    os << "model,seed,auc,acc\n";
    for (const auto& r : rows)
      os << r.model << ',' << r.seed << ',' << r.auc << ',' << r.acc << "\n";
    write_text(join(run.out_dir, "compare.csv"), os.str());
  }

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  std::ostringstream sum_csv, report_txt;
  sum_csv.precision(17);
  report_txt.precision(6);
  sum_csv << "model,median_auc,min_auc,max_auc,median_acc\n";
  report_txt << "model      median_auc   min_auc      max_auc      median_acc  (" << k
             << " seeds)\n";
  for (ModelKind kind : kinds) {
    const auto& a = aucs[to_string(kind)];
    const double med = median(a);
    const double lo = *std::min_element(a.begin(), a.end());
    const double hi = *std::max_element(a.begin(), a.end());
    const double macc = median(accs[to_string(kind)]);
    sum_csv << to_string(kind) << ',' << med << ',' << lo << ',' << hi << ',' << macc << "\n";
    report_txt << to_string(kind) << (to_string(kind).size() < 5 ? "  " : "") << "      " << med
               << "     " << lo << "     " << hi << "     " << macc << "\n";
  }
  write_text(join(run.out_dir, "compare_summary.csv"), sum_csv.str());
  write_text(join(run.out_dir, "compare_report.txt"), report_txt.str());
  std::cout << report_txt.str();
}

void dispatch(const RunContext& run) {
  if (run.subcommand == "synth")
    run_synth(run);
  else if (run.subcommand == "ingest")
    run_ingest(run);
  else if (run.subcommand == "relations")
    run_relations(run);
  else if (run.subcommand == "train")
    run_train(run);
  else if (run.subcommand == "evaluate")
    run_evaluate(run);
  else if (run.subcommand == "export-attention")
    run_export_attention(run);
  else if (run.subcommand == "compare")
    run_compare(run);
  else
    throw std::runtime_error("unknown subcommand '" + run.subcommand + "'");
}

}  // namespace ktrace
