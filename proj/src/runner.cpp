#include "flsim/runner.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "flsim/checkpoint.hpp"
#include "flsim/errors.hpp"

namespace flsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int workers_from_env() {
  const char* env = std::getenv("FLSIM_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  const int w = std::atoi(env);
  if (w < 1) throw ConfigError("FLSIM_WORKERS must be a positive integer");
  return w;
}

std::string run_dir_for(const RunSpec& spec, const std::string& out_root) {
  return (fs::path(out_root) /
          ("run-" + config_hash(spec) + "-s" + std::to_string(spec.experiment.seed)))
      .string();
}

namespace {

json spec_to_json(const RunSpec& spec) {
  json sections = json::object();
  for (const auto& entry : canonical_entries(spec)) {
    const auto dot = entry.find('.');
    const auto eq = entry.find('=', dot);
    sections[entry.substr(0, dot)][entry.substr(dot + 1, eq - dot - 1)] =
        entry.substr(eq + 1);
  }
  return sections;
}

void write_manifest(const RunSpec& spec, const std::string& run_dir,
                    const std::string& baseline_hash) {
  json m;
  m["tool_version"] = kToolVersion;
  m["config_hash"] = config_hash(spec);
  m["baseline_hash"] = baseline_hash;
  m["seed"] = spec.experiment.seed;
  m["output_dir"] = run_dir;
  m["config"] = spec_to_json(spec);
  std::ofstream out(fs::path(run_dir) / "manifest.json");
  if (!out) throw InputError("cannot write manifest in " + run_dir);
  out << m.dump(2) << "\n";
}

void write_summary(const metrics::Summary& s, const std::string& run_dir,
                   const std::string& baseline_hash, double max_accuracy) {
  json j;
  j["acc"] = s.acc;
  j["acc_m"] = s.acc_m;
  j["asr_pct"] = s.asr_pct;
  if (s.dpr_pct.has_value())
    j["dpr_pct"] = *s.dpr_pct;
  else
    j["dpr_pct"] = nullptr;
  j["config_hash"] = s.config_hash;
  j["baseline_hash"] = baseline_hash;
  j["seed"] = s.seed;
  j["csv_path"] = s.csv_path;
  j["n_p"] = s.n_p;
  j["n_s"] = s.n_s;
  j["final_accuracy"] = s.final_accuracy;
  j["max_accuracy"] = max_accuracy;
  std::ofstream out(fs::path(run_dir) / "summary.json");
  if (!out) throw InputError("cannot write summary in " + run_dir);
  out << j.dump(2) << "\n";
}

bool is_baseline(const RunSpec& spec) {
  return config_hash(spec) == config_hash(baseline_spec(spec));
}

// Baseline accuracy, reusing an existing baseline run when present.
double resolve_baseline_acc(const RunSpec& spec, const std::string& out_root, int workers,
                            bool quiet) {
  const RunSpec base = baseline_spec(spec);
  const std::string dir = run_dir_for(base, out_root);
  const fs::path summary_path = fs::path(dir) / "summary.json";
  if (fs::exists(summary_path)) {
    std::ifstream in(summary_path);
    json j;
    in >> j;
    return j.at("max_accuracy").get<double>();
  }
  if (!quiet)
    std::cerr << "[flsim] running attack-free baseline (" << config_hash(base) << ", seed "
              << base.experiment.seed << ")\n";
  auto artifacts = execute_run(base, out_root, workers, quiet);
  return artifacts.result.max_accuracy;
}

}  // namespace

RunArtifacts execute_run(const RunSpec& spec, const std::string& out_root, int workers,
                         bool quiet) {
  RunArtifacts art;
  art.run_dir = run_dir_for(spec, out_root);
  fs::create_directories(art.run_dir);

  const RunSpec base = baseline_spec(spec);
  const std::string baseline_hash = config_hash(base);
  write_manifest(spec, art.run_dir, baseline_hash);

  auto dataset = build_dataset(spec.dataset);
  auto partition = build_partition(spec, dataset);
  std::optional<data::ReferenceSet> ref;
  if (spec.experiment.defense.kind == defenses::DefenseKind::refd)
    ref = build_reference_set(spec, dataset);

  fed::ExperimentConfig cfg = spec.experiment;
  cfg.workers = workers;

  fed::CheckpointSink sink;
  if (cfg.checkpoint_interval > 0) {
    const std::string dir = art.run_dir;
    sink = [dir](int round, const nn::ParamVector& params) {
      nn::save_params((fs::path(dir) / ("round-" + std::to_string(round) + ".ckpt")).string(),
                      params);
    };
  }

  art.result = fed::run_experiment(cfg, dataset, partition, ref ? &*ref : nullptr, sink);

  const std::string csv_path = (fs::path(art.run_dir) / "rounds.csv").string();
  metrics::write_rounds_csv(csv_path, art.result.rounds);
  nn::save_params((fs::path(art.run_dir) / "final.ckpt").string(), art.result.final_params);

  metrics::Summary& s = art.summary;
  s.config_hash = config_hash(spec);
  s.seed = spec.experiment.seed;
  s.csv_path = csv_path;
  s.acc_m = art.result.max_accuracy;
  s.final_accuracy = art.result.final_accuracy;
  s.n_p = art.result.n_admitted_malicious;
  s.n_s = art.result.n_selected_malicious;
  s.acc = is_baseline(spec) ? art.result.max_accuracy
                            : resolve_baseline_acc(spec, out_root, workers, quiet);
  s.asr_pct = metrics::asr(s.acc, s.acc_m);
  if (defenses::selection_based(spec.experiment.defense.kind) && s.n_s > 0)
    s.dpr_pct = metrics::dpr(s.n_p, s.n_s);

  write_summary(s, art.run_dir, baseline_hash, art.result.max_accuracy);
  return art;
}

}  // namespace flsim::cli
