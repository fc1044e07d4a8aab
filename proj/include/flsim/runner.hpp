#pragma once

#include <string>

#include "flsim/config.hpp"
#include "flsim/federation.hpp"
#include "flsim/metrics.hpp"

namespace flsim::cli {

struct RunArtifacts {
  std::string run_dir;
  metrics::Summary summary;
  fed::RunResult result;
};

// Directory name for a run: <out_root>/run-<hash>-s<seed>.
std::string run_dir_for(const RunSpec& spec, const std::string& out_root);

// Executes a resolved spec end to end: writes the manifest up front, runs
// the experiment, then writes rounds.csv, summary.json and final.ckpt.
// The paired attack-free/defense-free baseline run supplies the reference
// accuracy; baselines are cached by (config hash, seed) and reused.
RunArtifacts execute_run(const RunSpec& spec, const std::string& out_root, int workers,
                         bool quiet = false);

// Reads the worker count from FLSIM_WORKERS (defaults to 1).
int workers_from_env();

}  // namespace flsim::cli
