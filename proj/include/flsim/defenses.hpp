#pragma once

#include <string>
#include <vector>

#include "flsim/client_update.hpp"
#include "flsim/data.hpp"
#include "flsim/model.hpp"

namespace flsim::defenses {

enum class DefenseKind { fedavg, mkrum, bulyan, trmean, median, refd };

DefenseKind defense_kind_from_string(const std::string& s);
std::string to_string(DefenseKind k);

// True for defenses that admit/reject whole updates (the ones DPR is
// defined for); statistic defenses blend every update per coordinate.
bool selection_based(DefenseKind k);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::fedavg;
  double assumed_fraction = 0.2;  // server's belief, not ground truth
  int f = -1;                     // -1: derived as floor(assumed_fraction * n)
  int m = -1;                     // mKrum selection count; -1: n - f
  int k = -1;                     // trim count; -1: f
  int x = 2;                      // RefD rejection count
  double alpha = 1.0;             // RefD balance/confidence weighting
  int ref_size = 1000;
  std::uint64_t ref_seed = 11;

  int resolve_f(int n) const;
  int resolve_m(int n) const;
  int resolve_k(int n) const;
};

struct DefenseVerdict {
  std::vector<int> admitted;               // client ids
  std::vector<int> rejected;               // client ids
  std::vector<double> scores;              // per submitted update, input order
  nn::ParamVector aggregated;
};

// score(i) = sum of squared L2 distances to the n-f-2 nearest other updates.
std::vector<double> krum_scores(const std::vector<fed::ClientUpdate>& updates, int f);

// Admits the m lowest-score updates (ties: lowest client id) and averages
// them FedAvg-style. m = 1 is plain Krum.
DefenseVerdict mkrum(const std::vector<fed::ClientUpdate>& updates, int f, int m);

// Per coordinate, drops the k smallest and k largest values and averages.
nn::ParamVector trimmed_mean(const std::vector<fed::ClientUpdate>& updates, int k);

// Per-coordinate median; even counts average the two middle values.
nn::ParamVector coordinate_median(const std::vector<fed::ClientUpdate>& updates);

// n - 2f rounds of Krum selection, then a trimmed mean (trim f) over the
// selection set. Needs n >= 4f + 3.
DefenseVerdict bulyan(const std::vector<fed::ClientUpdate>& updates, int f);

// Balance value: inverse population std of predicted-class counts on the
// reference set, with B = 1 when the counts are perfectly balanced.
double refd_balance(const nn::ParamVector& params, const nn::ClassifierSpec& spec,
                    const data::ReferenceSet& ref);

// Confidence value: mean max predicted probability over the reference set.
double refd_confidence(const nn::ParamVector& params, const nn::ClassifierSpec& spec,
                       const data::ReferenceSet& ref);

// D-Score = (1 + a^2) * B*V / (a^2*B + V).
double d_score(double balance, double confidence, double alpha);

// Rejects the X lowest D-Scores (ties: higher client id rejected last),
// FedAvg over the rest.
DefenseVerdict refd(const std::vector<fed::ClientUpdate>& updates,
                    const nn::ClassifierSpec& spec, const data::ReferenceSet& ref, double alpha,
                    int x);

// Dispatches on config.kind; `ref` may be null unless kind == refd.
DefenseVerdict apply_defense(const DefenseConfig& cfg, const std::vector<fed::ClientUpdate>& updates,
                             const nn::ClassifierSpec& spec, const data::ReferenceSet* ref);

// Checks config preconditions against the per-round update count; throws
// ConfigError with a field-level message if the defense cannot run.
void validate_defense(const DefenseConfig& cfg, int n);

}  // namespace flsim::defenses
