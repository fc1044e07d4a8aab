#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "flsim/config.hpp"
#include "flsim/errors.hpp"
#include "flsim/metrics.hpp"
#include "flsim/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flsim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

cli::RunSpec load_spec(const std::string& config_path, const std::vector<std::string>& sets,
                       long seed_override) {
  auto raw = cli::parse_config_file(config_path);
  for (const auto& s : sets) cli::apply_override(raw, s);
  if (seed_override >= 0)
    cli::apply_override(raw, "experiment.seed=" + std::to_string(seed_override));
  return cli::resolve(raw);
}

std::string fmt_pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets,
            long seed_override, const std::string& out_root) {
  auto spec = load_spec(config_path, sets, seed_override);
  auto art = cli::execute_run(spec, out_root, cli::workers_from_env());
  const auto& s = art.summary;
  std::cout << "run dir:   " << art.run_dir << "\n"
            << "acc:       " << fmt_pct(100.0 * s.acc) << "\n"
            << "acc_m:     " << fmt_pct(100.0 * s.acc_m) << "\n"
            << "asr_pct:   " << fmt_pct(s.asr_pct) << "\n"
            << "dpr_pct:   " << (s.dpr_pct ? fmt_pct(*s.dpr_pct) : std::string("N/A")) << "\n";
  return 0;
}

struct SweepCell {
  std::vector<std::string> assignments;
  std::string status = "pending";
  std::string run_dir;
  metrics::Summary summary;
};

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets,
              const std::vector<std::string>& axes, const std::string& out_root) {
  // Each axis is "section.key=v1,v2,...": build the Cartesian product.
  std::vector<std::pair<std::string, std::vector<std::string>>> parsed;
  for (const auto& axis : axes) {
    const auto eq = axis.find('=');
    if (eq == std::string::npos)
      throw ConfigError("axis must look like section.key=v1,v2,...: " + axis);
    const std::string key = axis.substr(0, eq);
    std::vector<std::string> values;
    std::istringstream vs(axis.substr(eq + 1));
    std::string tok;
    while (std::getline(vs, tok, ',')) values.push_back(tok);
    if (values.empty()) throw ConfigError("axis has no values: " + axis);
    parsed.emplace_back(key, values);
  }

  std::vector<SweepCell> cells;
  std::vector<std::size_t> idx(parsed.size(), 0);
  for (;;) {
    SweepCell cell;
    for (std::size_t a = 0; a < parsed.size(); ++a)
      cell.assignments.push_back(parsed[a].first + "=" + parsed[a].second[idx[a]]);
    cells.push_back(std::move(cell));
    std::size_t a = 0;
    for (; a < parsed.size(); ++a) {
      if (++idx[a] < parsed[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == parsed.size()) break;
  }

  const int workers = cli::workers_from_env();
  std::atomic<std::size_t> next{0};
  auto run_cell = [&](SweepCell& cell) {
    try {
      std::vector<std::string> all_sets = sets;
      all_sets.insert(all_sets.end(), cell.assignments.begin(), cell.assignments.end());
      auto spec = load_spec(config_path, all_sets, -1);
      // Parallelism is spent across cells; each cell trains single-threaded.
      auto art = cli::execute_run(spec, out_root, 1, true);
      cell.summary = art.summary;
      cell.run_dir = art.run_dir;
      cell.status = "ok";
    } catch (const std::exception& e) {
      cell.status = std::string("failed: ") + e.what();
    }
  };
  if (workers <= 1) {
    for (auto& cell : cells) run_cell(cell);
  } else {
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        run_cell(cells[i]);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  fs::create_directories(out_root);
  const std::string combined = (fs::path(out_root) / "combined.csv").string();
  std::ofstream out(combined, std::ios::trunc);
  out << "cell,status,acc,acc_m,asr_pct,dpr_pct,run_dir\n";
  bool any_failed = false;
  for (const auto& cell : cells) {
    std::string name;
    for (std::size_t i = 0; i < cell.assignments.size(); ++i) {
      if (i) name += ";";
      name += cell.assignments[i];
    }
    if (cell.status == "ok") {
      out << name << ",ok," << fmt_pct(100.0 * cell.summary.acc) << ","
          << fmt_pct(100.0 * cell.summary.acc_m) << "," << fmt_pct(cell.summary.asr_pct) << ","
          << (cell.summary.dpr_pct ? fmt_pct(*cell.summary.dpr_pct) : std::string("N/A")) << ","
          << cell.run_dir << "\n";
    } else {
      any_failed = true;
      std::string status = cell.status;
      for (auto& c : status)
        if (c == ',' || c == '\n') c = ';';
      out << name << "," << status << ",,,,,\n";
    }
    std::cout << name << " -> " << cell.status << "\n";
  }
  std::cout << "combined table: " << combined << "\n";
  return any_failed ? 1 : 0;
}

int cmd_report(const std::vector<std::string>& run_dirs) {
  bool any_invalid = false;
  std::cout << std::left << std::setw(12) << "attack" << std::setw(10) << "defense"
            << std::setw(8) << "acc" << std::setw(8) << "acc_m" << std::setw(9) << "ASR%"
            << std::setw(9) << "DPR%"
            << "run_dir\n";
  for (const auto& dir : run_dirs) {
    try {
      std::ifstream sin(fs::path(dir) / "summary.json");
      if (!sin) throw InputError("missing summary.json in " + dir);
      json s;
      sin >> s;
      std::ifstream min(fs::path(dir) / "manifest.json");
      if (!min) throw InputError("missing manifest.json in " + dir);
      json m;
      min >> m;

      // Recompute ASR from the CSV to cross-check the stored summary.
      auto rounds = metrics::read_rounds_csv((fs::path(dir) / "rounds.csv").string());
      double max_acc = 0.0;
      for (const auto& r : rounds) max_acc = std::max(max_acc, r.accuracy);
      const double recomputed = metrics::asr(s.at("acc").get<double>(), max_acc);
      if (std::abs(recomputed - s.at("asr_pct").get<double>()) > 1e-6)
        throw InputError("summary ASR does not match the per-round CSV in " + dir);

      // Accuracy-vs-round series for external plotting.
      std::ofstream series(fs::path(dir) / "series_accuracy.csv");
      series << "round,accuracy\n";
      for (const auto& r : rounds) series << r.round << "," << r.accuracy << "\n";

      const std::string attack = m.at("config").at("attack").at("kind").get<std::string>();
      const std::string defense = m.at("config").at("defense").at("kind").get<std::string>();
      const auto dpr = s.at("dpr_pct");
      std::cout << std::left << std::setw(12) << attack << std::setw(10) << defense
                << std::setw(8) << fmt_pct(100.0 * s.at("acc").get<double>()) << std::setw(8)
                << fmt_pct(100.0 * s.at("acc_m").get<double>()) << std::setw(9)
                << fmt_pct(s.at("asr_pct").get<double>()) << std::setw(9)
                << (dpr.is_null() ? std::string("N/A") : fmt_pct(dpr.get<double>())) << dir
                << "\n";
    } catch (const std::exception& e) {
      any_invalid = true;
      std::cout << std::left << std::setw(12) << "invalid" << std::setw(10) << "-"
                << std::setw(8) << "-" << std::setw(8) << "-" << std::setw(9) << "-"
                << std::setw(9) << "-" << dir << "  (" << e.what() << ")\n";
    }
  }
  return any_invalid ? 1 : 0;
}

int cmd_partition_inspect(const std::string& config_path, const std::vector<std::string>& sets) {
  auto spec = load_spec(config_path, sets, -1);
  auto dataset = cli::build_dataset(spec.dataset);
  auto partition = cli::build_partition(spec, dataset);
  auto hist = data::class_histograms(dataset, partition);
  std::cout << "dataset=" << dataset.name << " train=" << dataset.train.n
            << " classes=" << dataset.num_classes
            << (spec.dataset.iid ? " partition=iid" : " partition=dirichlet beta=" +
                                                          std::to_string(spec.dataset.beta))
            << "\n";
  std::cout << std::left << std::setw(8) << "client" << std::setw(8) << "total";
  for (int c = 0; c < dataset.num_classes; ++c)
    std::cout << std::setw(6) << ("c" + std::to_string(c));
  std::cout << "\n";
  for (std::size_t i = 0; i < hist.size(); ++i) {
    int total = 0;
    for (int v : hist[i]) total += v;
    std::cout << std::left << std::setw(8) << i << std::setw(8) << total;
    for (int v : hist[i]) std::cout << std::setw(6) << v;
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning poisoning testbed"};
  app.require_subcommand(1);

  std::string config_path, out_root = "out";
  std::vector<std::string> sets, axes, report_dirs;
  long seed_override = -1;

  auto* run = app.add_subcommand("run", "Execute one experiment");
  run->add_option("--config", config_path, "Config file")->required();
  run->add_option("--set", sets, "Override section.key=value");
  run->add_option("--seed", seed_override, "Override experiment.seed");
  run->add_option("--out", out_root, "Output root directory");

  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments");
  sweep->add_option("--config", config_path, "Config file")->required();
  sweep->add_option("--set", sets, "Override section.key=value");
  sweep->add_option("--axis", axes, "Axis section.key=v1,v2,...")->required();
  sweep->add_option("--out", out_root, "Output root directory");

  auto* report = app.add_subcommand("report", "Summarize finished runs");
  report->add_option("dirs", report_dirs, "Run directories")->required();

  auto* pinspect = app.add_subcommand("partition-inspect", "Print per-client class histograms");
  pinspect->add_option("--config", config_path, "Config file")->required();
  pinspect->add_option("--set", sets, "Override section.key=value");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, sets, seed_override, out_root);
    if (sweep->parsed()) return cmd_sweep(config_path, sets, axes, out_root);
    if (report->parsed()) return cmd_report(report_dirs);
    if (pinspect->parsed()) return cmd_partition_inspect(config_path, sets);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
