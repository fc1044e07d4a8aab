#include "flsim/metrics.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flsim/errors.hpp"

namespace flsim::metrics {

double asr(double acc, double acc_m) {
  if (acc <= 0.0) throw MetricError("ASR undefined for non-positive baseline accuracy");
  return (acc - acc_m) / acc * 100.0;
}

double dpr(long n_p, long n_s) {
  if (n_s <= 0) throw MetricError("DPR undefined when no attackers were selected");
  return static_cast<double>(n_p) / static_cast<double>(n_s) * 100.0;
}

OverheadEstimate overhead_estimate(std::size_t ref_size, int selected, double per_sample_cost) {
  OverheadEstimate e;
  e.inference_cost = static_cast<double>(ref_size) * selected * per_sample_cost;
  e.scoring_cost = static_cast<double>(ref_size) * selected;
  e.selection_cost = static_cast<double>(selected);
  return e;
}

const char* kRoundsCsvHeader =
    "round,accuracy,train_loss,selected,malicious_selected,malicious_admitted,defense_ms,"
    "attack_ms";

void write_rounds_csv(const std::string& path, const std::vector<RoundRecord>& rounds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open CSV for writing: " + path);
  out << kRoundsCsvHeader << "\n";
  char line[256];
  for (const auto& r : rounds) {
    std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%d,%d,%d,%.3f,%.3f", r.round, r.accuracy,
                  r.train_loss, r.selected, r.malicious_selected, r.malicious_admitted,
                  r.defense_ms, r.attack_ms);
    out << line << "\n";
  }
  if (!out) throw InputError("write failure on CSV: " + path);
}

std::vector<RoundRecord> read_rounds_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV " + path, 0);
  if (line != kRoundsCsvHeader) throw ParseError("unexpected CSV header in " + path, 0);
  std::vector<RoundRecord> rounds;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    RoundRecord r;
    const int got =
        std::sscanf(line.c_str(), "%d,%lf,%lf,%d,%d,%d,%lf,%lf", &r.round, &r.accuracy,
                    &r.train_loss, &r.selected, &r.malicious_selected, &r.malicious_admitted,
                    &r.defense_ms, &r.attack_ms);
    if (got != 8) throw ParseError("malformed CSV row in " + path, offset);
    rounds.push_back(r);
    offset += line.size() + 1;
  }
  return rounds;
}

}  // namespace flsim::metrics
