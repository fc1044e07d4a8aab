#include "flsim/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flsim/errors.hpp"

namespace flsim::defenses {

DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "fedavg") return DefenseKind::fedavg;
  if (s == "mkrum") return DefenseKind::mkrum;
  if (s == "bulyan") return DefenseKind::bulyan;
  if (s == "trmean") return DefenseKind::trmean;
  if (s == "median") return DefenseKind::median;
  if (s == "refd") return DefenseKind::refd;
  throw ConfigError("unknown defense kind: " + s);
}

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::fedavg: return "fedavg";
    case DefenseKind::mkrum: return "mkrum";
    case DefenseKind::bulyan: return "bulyan";
    case DefenseKind::trmean: return "trmean";
    case DefenseKind::median: return "median";
    case DefenseKind::refd: return "refd";
  }
  return "?";
}

bool selection_based(DefenseKind k) {
  return k == DefenseKind::mkrum || k == DefenseKind::bulyan || k == DefenseKind::refd;
}

int DefenseConfig::resolve_f(int n) const {
  if (f >= 0) return f;
  return static_cast<int>(std::floor(assumed_fraction * n));
}
int DefenseConfig::resolve_m(int n) const {
  if (m >= 0) return m;
  return n - resolve_f(n);
}
int DefenseConfig::resolve_k(int n) const {
  if (k >= 0) return k;
  return resolve_f(n);
}

namespace {

nn::ParamVector weighted_average(const std::vector<fed::ClientUpdate>& updates,
                                 const std::vector<int>& which) {
  if (which.empty()) throw AggregationError("cannot average an empty admitted set");
  const std::size_t dim = updates[0].params.size();
  double total = 0.0;
  for (int i : which) total += static_cast<double>(updates[static_cast<std::size_t>(i)].n_samples);
  nn::ParamVector out(dim, 0.0);
  for (int i : which) {
    const auto& u = updates[static_cast<std::size_t>(i)];
    const double w = static_cast<double>(u.n_samples) / total;
    for (std::size_t d = 0; d < dim; ++d) out[d] += w * u.params[d];
  }
  return out;
}

void check_updates(const std::vector<fed::ClientUpdate>& updates) {
  if (updates.empty()) throw AggregationError("no updates to aggregate");
  const std::size_t dim = updates[0].params.size();
  for (const auto& u : updates) {
    if (u.params.size() != dim) throw AggregationError("updates have unequal parameter lengths");
    if (u.n_samples < 1) throw AggregationError("claimed sample count must be >= 1");
  }
}

double sq_dist(const nn::ParamVector& a, const nn::ParamVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Indices admitted by one Krum pass over `pool` (positions into `updates`).
int krum_pick(const std::vector<fed::ClientUpdate>& updates, const std::vector<int>& pool,
              int f) {
  const int n = static_cast<int>(pool.size());
  const int neighbors = n - f - 2;
  if (neighbors < 1)
    throw ConfigError("krum needs n >= f + 3 (n=" + std::to_string(n) +
                      ", f=" + std::to_string(f) + ")");
  int best = -1;
  double best_score = 0.0;
  int best_id = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) - 1);
    for (int j = 0; j < n; ++j)
      if (j != i)
        dists.push_back(sq_dist(updates[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])].params,
                                updates[static_cast<std::size_t>(pool[static_cast<std::size_t>(j)])].params));
    std::nth_element(dists.begin(), dists.begin() + neighbors - 1, dists.end());
    double score = std::accumulate(dists.begin(), dists.begin() + neighbors, 0.0);
    const int id = updates[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])].client_id;
    if (best < 0 || score < best_score || (score == best_score && id < best_id)) {
      best = i;
      best_score = score;
      best_id = id;
    }
  }
  return best;
}

nn::ParamVector coordinate_trimmed_mean(const std::vector<const nn::ParamVector*>& vecs, int k) {
  const int n = static_cast<int>(vecs.size());
  if (2 * k >= n) throw ConfigError("trimmed mean needs 2k < n");
  const std::size_t dim = vecs[0]->size();
  nn::ParamVector out(dim, 0.0);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (std::size_t d = 0; d < dim; ++d) {
    for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = (*vecs[static_cast<std::size_t>(i)])[d];
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (int i = k; i < n - k; ++i) s += col[static_cast<std::size_t>(i)];
    out[d] = s / static_cast<double>(n - 2 * k);
  }
  return out;
}

}  // namespace

std::vector<double> krum_scores(const std::vector<fed::ClientUpdate>& updates, int f) {
  check_updates(updates);
  const int n = static_cast<int>(updates.size());
  const int neighbors = n - f - 2;
  if (f < 0) throw ConfigError("krum f must be non-negative");
  if (neighbors < 1)
    throw ConfigError("krum needs n >= f + 3 (n=" + std::to_string(n) +
                      ", f=" + std::to_string(f) + ")");
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) - 1);
    for (int j = 0; j < n; ++j)
      if (j != i)
        dists.push_back(sq_dist(updates[static_cast<std::size_t>(i)].params,
                                updates[static_cast<std::size_t>(j)].params));
    std::nth_element(dists.begin(), dists.begin() + neighbors - 1, dists.end());
    scores[static_cast<std::size_t>(i)] =
        std::accumulate(dists.begin(), dists.begin() + neighbors, 0.0);
  }
  return scores;
}

DefenseVerdict mkrum(const std::vector<fed::ClientUpdate>& updates, int f, int m) {
  const int n = static_cast<int>(updates.size());
  if (m < 1 || m > n) throw ConfigError("mkrum needs 1 <= m <= n");
  auto scores = krum_scores(updates, f);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
    return updates[static_cast<std::size_t>(a)].client_id <
           updates[static_cast<std::size_t>(b)].client_id;
  });

  DefenseVerdict v;
  v.scores = scores;
  std::vector<int> admitted_pos(order.begin(), order.begin() + m);
  std::sort(admitted_pos.begin(), admitted_pos.end());
  for (int i = 0; i < n; ++i) {
    const int id = updates[static_cast<std::size_t>(i)].client_id;
    if (std::binary_search(admitted_pos.begin(), admitted_pos.end(), i))
      v.admitted.push_back(id);
    else
      v.rejected.push_back(id);
  }
  v.aggregated = weighted_average(updates, admitted_pos);
  return v;
}

nn::ParamVector trimmed_mean(const std::vector<fed::ClientUpdate>& updates, int k) {
  check_updates(updates);
  if (k < 0) throw ConfigError("trim count must be non-negative");
  std::vector<const nn::ParamVector*> vecs;
  vecs.reserve(updates.size());
  for (const auto& u : updates) vecs.push_back(&u.params);
  return coordinate_trimmed_mean(vecs, k);
}

nn::ParamVector coordinate_median(const std::vector<fed::ClientUpdate>& updates) {
  check_updates(updates);
  const int n = static_cast<int>(updates.size());
  const std::size_t dim = updates[0].params.size();
  nn::ParamVector out(dim, 0.0);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (std::size_t d = 0; d < dim; ++d) {
    for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = updates[static_cast<std::size_t>(i)].params[d];
    const int mid = n / 2;
    std::nth_element(col.begin(), col.begin() + mid, col.end());
    if (n % 2 == 1) {
      out[d] = col[static_cast<std::size_t>(mid)];
    } else {
      const double hi = col[static_cast<std::size_t>(mid)];
      const double lo = *std::max_element(col.begin(), col.begin() + mid);
      out[d] = 0.5 * (lo + hi);
    }
  }
  return out;
}

DefenseVerdict bulyan(const std::vector<fed::ClientUpdate>& updates, int f) {
  check_updates(updates);
  const int n = static_cast<int>(updates.size());
  if (f < 0) throw ConfigError("bulyan f must be non-negative");
  if (n < 4 * f + 3)
    throw ConfigError("bulyan needs n >= 4f + 3 (n=" + std::to_string(n) +
                      ", f=" + std::to_string(f) + ")");
  const int theta = n - 2 * f;
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<int> chosen;
  for (int it = 0; it < theta; ++it) {
    const int pick = krum_pick(updates, pool, f);
    chosen.push_back(pool[static_cast<std::size_t>(pick)]);
    pool.erase(pool.begin() + pick);
  }
  std::sort(chosen.begin(), chosen.end());

  DefenseVerdict v;
  for (int i = 0; i < n; ++i) {
    const int id = updates[static_cast<std::size_t>(i)].client_id;
    if (std::binary_search(chosen.begin(), chosen.end(), i))
      v.admitted.push_back(id);
    else
      v.rejected.push_back(id);
  }
  std::vector<const nn::ParamVector*> vecs;
  for (int i : chosen) vecs.push_back(&updates[static_cast<std::size_t>(i)].params);
  v.aggregated = coordinate_trimmed_mean(vecs, f);
  return v;
}

double refd_balance(const nn::ParamVector& params, const nn::ClassifierSpec& spec,
                    const data::ReferenceSet& ref) {
  if (ref.samples.n == 0) throw InputError("reference set is empty");
  auto probs = nn::forward(params, spec, ref.samples.images);
  const int L = spec.num_classes;
  std::vector<double> counts(static_cast<std::size_t>(L), 0.0);
  for (int i = 0; i < ref.samples.n; ++i) {
    const double* row = probs.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(L);
    int best = 0;
    for (int c = 1; c < L; ++c)
      if (row[c] > row[best]) best = c;
    counts[static_cast<std::size_t>(best)] += 1.0;
  }
  double mean = 0.0;
  for (double c : counts) mean += c;
  mean /= static_cast<double>(L);
  double var = 0.0;
  for (double c : counts) var += (c - mean) * (c - mean);
  var /= static_cast<double>(L);  // population variance
  const double sd = std::sqrt(var);
  return sd == 0.0 ? 1.0 : 1.0 / sd;
}

double refd_confidence(const nn::ParamVector& params, const nn::ClassifierSpec& spec,
                       const data::ReferenceSet& ref) {
  if (ref.samples.n == 0) throw InputError("reference set is empty");
  auto probs = nn::forward(params, spec, ref.samples.images);
  const int L = spec.num_classes;
  double total = 0.0;
  for (int i = 0; i < ref.samples.n; ++i) {
    const double* row = probs.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(L);
    total += *std::max_element(row, row + L);
  }
  return total / static_cast<double>(ref.samples.n);
}

double d_score(double balance, double confidence, double alpha) {
  if (balance <= 0.0 || confidence <= 0.0) throw InputError("d_score needs positive B and V");
  if (alpha < 0.0) throw InputError("d_score alpha must be non-negative");
  return (1.0 + alpha * alpha) * (balance * confidence) /
         (alpha * alpha * balance + confidence);
}

DefenseVerdict refd(const std::vector<fed::ClientUpdate>& updates, const nn::ClassifierSpec& spec,
                    const data::ReferenceSet& ref, double alpha, int x) {
  check_updates(updates);
  const int n = static_cast<int>(updates.size());
  if (x < 0 || x >= n) throw ConfigError("refd needs 0 <= X < n");
  DefenseVerdict v;
  v.scores.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& u = updates[static_cast<std::size_t>(i)];
    const double b = refd_balance(u.params, spec, ref);
    const double conf = refd_confidence(u.params, spec, ref);
    v.scores[static_cast<std::size_t>(i)] = d_score(b, conf, alpha);
  }
  // Reject the X lowest scores; within a tie the higher client id is
  // rejected last (lower ids go first).
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (v.scores[static_cast<std::size_t>(a)] != v.scores[static_cast<std::size_t>(b)])
      return v.scores[static_cast<std::size_t>(a)] < v.scores[static_cast<std::size_t>(b)];
    return updates[static_cast<std::size_t>(a)].client_id <
           updates[static_cast<std::size_t>(b)].client_id;
  });
  std::vector<int> rejected_pos(order.begin(), order.begin() + x);
  std::sort(rejected_pos.begin(), rejected_pos.end());
  std::vector<int> admitted_pos;
  for (int i = 0; i < n; ++i) {
    const int id = updates[static_cast<std::size_t>(i)].client_id;
    if (std::binary_search(rejected_pos.begin(), rejected_pos.end(), i)) {
      v.rejected.push_back(id);
    } else {
      v.admitted.push_back(id);
      admitted_pos.push_back(i);
    }
  }
  v.aggregated = weighted_average(updates, admitted_pos);
  return v;
}

void validate_defense(const DefenseConfig& cfg, int n) {
  switch (cfg.kind) {
    case DefenseKind::fedavg:
      break;
    case DefenseKind::mkrum: {
      const int f = cfg.resolve_f(n);
      const int m = cfg.resolve_m(n);
      if (n < f + 3)
        throw ConfigError("defense.kind=mkrum needs K >= f + 3 (K=" + std::to_string(n) +
                          ", f=" + std::to_string(f) + ")");
      if (m < 1 || m > n) throw ConfigError("defense.m must be in [1, K]");
      break;
    }
    case DefenseKind::bulyan: {
      const int f = cfg.resolve_f(n);
      if (n < 4 * f + 3)
        throw ConfigError("defense.kind=bulyan needs K >= 4f + 3 (K=" + std::to_string(n) +
                          ", f=" + std::to_string(f) + ")");
      break;
    }
    case DefenseKind::trmean: {
      const int k = cfg.resolve_k(n);
      if (2 * k >= n)
        throw ConfigError("defense.kind=trmean needs 2k < K (K=" + std::to_string(n) +
                          ", k=" + std::to_string(k) + ")");
      break;
    }
    case DefenseKind::median:
      if (n < 1) throw ConfigError("median needs at least one update");
      break;
    case DefenseKind::refd:
      if (cfg.x < 0 || cfg.x >= n)
        throw ConfigError("defense.x must satisfy 0 <= X < K (K=" + std::to_string(n) + ")");
      break;
  }
}

DefenseVerdict apply_defense(const DefenseConfig& cfg, const std::vector<fed::ClientUpdate>& updates,
                             const nn::ClassifierSpec& spec, const data::ReferenceSet* ref) {
  check_updates(updates);
  const int n = static_cast<int>(updates.size());
  validate_defense(cfg, n);
  auto admit_all = [&](nn::ParamVector agg) {
    DefenseVerdict v;
    for (const auto& u : updates) v.admitted.push_back(u.client_id);
    v.aggregated = std::move(agg);
    return v;
  };
  switch (cfg.kind) {
    case DefenseKind::fedavg: {
      std::vector<int> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      return admit_all(weighted_average(updates, all));
    }
    case DefenseKind::mkrum:
      return mkrum(updates, cfg.resolve_f(n), cfg.resolve_m(n));
    case DefenseKind::bulyan:
      return bulyan(updates, cfg.resolve_f(n));
    case DefenseKind::trmean:
      return admit_all(trimmed_mean(updates, cfg.resolve_k(n)));
    case DefenseKind::median:
      return admit_all(coordinate_median(updates));
    case DefenseKind::refd:
      if (ref == nullptr) throw ConfigError("refd needs a reference set");
      return refd(updates, spec, *ref, cfg.alpha, cfg.x);
  }
  throw ConfigError("unhandled defense kind");
}

}  // namespace flsim::defenses
