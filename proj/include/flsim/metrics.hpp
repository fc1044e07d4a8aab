#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flsim::metrics {

// One CSV row per round. Timing columns are zero when timing recording is
// off (needed for byte-identical reruns).
struct RoundRecord {
  int round = 0;
  double accuracy = 0.0;
  double train_loss = 0.0;
  int selected = 0;
  int malicious_selected = 0;
  int malicious_admitted = 0;
  double defense_ms = 0.0;
  double attack_ms = 0.0;
};

struct Summary {
  double acc = 0.0;    // baseline accuracy (attack-free, defense-free pair run)
  double acc_m = 0.0;  // max accuracy during the attacked run
  double asr_pct = 0.0;
  std::optional<double> dpr_pct;  // empty for statistic defenses
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string csv_path;
  long n_p = 0;  // malicious updates admitted
  long n_s = 0;  // malicious updates selected
  double final_accuracy = 0.0;
};

// ASR = (acc - acc_m) / acc * 100. Negative values are reported as-is.
double asr(double acc, double acc_m);

// DPR = N_p / N_s * 100; only defined when attackers were selected.
double dpr(long n_p, long n_s);

// Predicted RefD cost: per-update inference over the reference set, linear
// scoring, and the final selection scan.
struct OverheadEstimate {
  double inference_cost = 0.0;  // |D_r| * K * per-sample cost
  double scoring_cost = 0.0;    // O(|D_r|) per update
  double selection_cost = 0.0;  // O(K)
  double total() const { return inference_cost + scoring_cost + selection_cost; }
};
OverheadEstimate overhead_estimate(std::size_t ref_size, int selected, double per_sample_cost);

extern const char* kRoundsCsvHeader;

void write_rounds_csv(const std::string& path, const std::vector<RoundRecord>& rounds);
std::vector<RoundRecord> read_rounds_csv(const std::string& path);

}  // namespace flsim::metrics
