// Run orchestration shared by the command line tool and the python bindings:
// resolved-config snapshots, run directories, and one entry point per
// subcommand.

#pragma once

#include <string>
#include <vector>

#include "ktrace/config.hpp"

namespace ktrace {

inline constexpr const char* kOutRootEnv = "KTRACE_OUT_ROOT";

// Every key a subcommand consults, with its default, so snapshots show the
// full effective configuration.
KeyValueConfig default_config(const std::string& subcommand);

struct RunContext {
  std::string subcommand;
  std::string out_dir;
  KeyValueConfig config;
};

// Merges defaults <- config file <- overrides, creates the run directory
// (fresh suffixed directory under $KTRACE_OUT_ROOT or ./runs when out is
// empty) and writes resolved_config.txt before any compute happens.
RunContext prepare_run(const std::string& subcommand, const std::string& config_path,
                       const std::vector<std::string>& overrides, const std::string& out);

void run_synth(const RunContext& run);
void run_ingest(const RunContext& run);
void run_relations(const RunContext& run);
void run_train(const RunContext& run);
void run_evaluate(const RunContext& run);
void run_export_attention(const RunContext& run);
void run_compare(const RunContext& run);

// Routes to the matching runner; throws on unknown subcommand.
void dispatch(const RunContext& run);

}  // namespace ktrace
