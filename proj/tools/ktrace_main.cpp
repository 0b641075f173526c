// ktrace command line: reproducible knowledge-tracing runs.
//
// Exit codes: 0 success, 2 usage error, 3 configuration or data error,
// 4 runtime failure.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ktrace/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void attach_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides,
                  "override a config key (key=value, bare keys get the subcommand prefix)");
  cmd->add_option("--out", args.out_dir,
                  "run output directory (default: fresh directory under $KTRACE_OUT_ROOT or ./runs)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge tracing toolkit: train and compare dkt, dkvmn, sakt and rkt"};
  app.require_subcommand(1);
  app.footer(
      "Every run writes resolved_config.txt into its output directory first.\n"
      "Exit codes: 0 ok, 2 usage, 3 config/data error, 4 runtime failure.");

  const std::pair<const char*, const char*> subs[] = {
      {"synth", "generate a synthetic interaction log with planted structure"},
      {"ingest", "read an interaction log, write a dataset manifest"},
      {"relations", "mine the exercise relation matrix from the training split"},
      {"train", "train one model, write checkpoint and metrics"},
      {"evaluate", "rolling evaluation of a checkpoint on a split"},
      {"export-attention", "dump single and averaged attention matrices as CSV"},
      {"compare", "train all four models across seeds and tabulate AUC/ACC"},
  };
  std::vector<CommonArgs> args(std::size(subs));
  for (std::size_t i = 0; i < std::size(subs); ++i)
    attach_common(app.add_subcommand(subs[i].first, subs[i].second), args[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (std::size_t i = 0; i < std::size(subs); ++i) {
    if (!app.get_subcommand(subs[i].first)->parsed()) continue;
    ktrace::RunContext run;
    try {
      run = ktrace::prepare_run(subs[i].first, args[i].config_path, args[i].overrides,
                                args[i].out_dir);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
    try {
      ktrace::dispatch(run);
    } catch (const std::runtime_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    } catch (const std::exception& e) {
      std::cerr << "internal error: " << e.what() << "\n";
      return 4;
    }
  }
  return 0;
}
