#include "flsim/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "flsim/errors.hpp"

namespace flsim::fed {

void ExperimentConfig::validate() const {
  if (num_clients < 1) throw ConfigError("experiment.clients must be positive");
  if (selected_per_round < 1 || selected_per_round > num_clients)
    throw ConfigError("experiment.selected_per_round must be in [1, clients]");
  if (rounds < 1) throw ConfigError("experiment.rounds must be positive");
  if (attacker_fraction < 0.0 || attacker_fraction >= 0.5)
    throw ConfigError("experiment.attacker_fraction must be in [0, 0.5)");
  if (learning_rate <= 0.0) throw ConfigError("experiment.learning_rate must be positive");
  if (local_epochs < 0) throw ConfigError("experiment.local_epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("experiment.batch_size must be positive");
  if (eval_interval < 1) throw ConfigError("experiment.eval_interval must be positive");
  if (workers < 1) throw ConfigError("worker count must be positive");
  model.validate();
  if (attack.kind != attacks::AttackKind::none && attack.synth_size < 1)
    throw ConfigError("attack.synth_size must be positive");
  defenses::validate_defense(defense, selected_per_round);
}

std::vector<int> select_clients(int num_clients, int k, Rng& rng) {
  if (k > num_clients) throw ConfigError("cannot select more clients than exist");
  return rng.sample_without_replacement(num_clients, k);
}

LocalTrainResult local_train(const nn::ParamVector& global, const nn::ClassifierSpec& spec,
                             const nn::LabeledBatch& data, double eta, int epochs, int batch_size,
                             Rng& rng, int client_id) {
  if (data.n == 0) throw InputError("local_train needs non-empty client data");
  LocalTrainResult res;
  res.update.client_id = client_id;
  res.update.n_samples = data.n;

  nn::ParamVector w = global;
  const std::size_t d = static_cast<std::size_t>(data.dim());
  std::vector<int> order(static_cast<std::size_t>(data.n));
  std::iota(order.begin(), order.end(), 0);

  double loss_sum = 0.0;
  long steps = 0;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (int start = 0; start < data.n; start += batch_size) {
      const int count = std::min(batch_size, data.n - start);
      nn::LabeledBatch batch;
      batch.n = count;
      batch.rows = data.rows;
      batch.cols = data.cols;
      batch.channels = data.channels;
      batch.images.resize(static_cast<std::size_t>(count) * d);
      batch.labels.resize(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) {
        const std::size_t src = static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)]);
        std::copy_n(data.images.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                    batch.images.begin() + static_cast<std::ptrdiff_t>(i) * static_cast<std::ptrdiff_t>(d));
        batch.labels[static_cast<std::size_t>(i)] = data.labels[src];
      }
      auto [loss, grad] = nn::loss_and_grad(w, spec, batch);
      w = nn::sgd_step(w, grad, eta);
      loss_sum += loss;
      ++steps;
    }
  }
  if (steps == 0) {
    nn::LabeledBatch all;
    all.n = data.n;
    all.rows = data.rows;
    all.cols = data.cols;
    all.channels = data.channels;
    all.images = data.images;
    all.labels = data.labels;
    res.mean_loss = nn::loss_and_grad(w, spec, all).first;
  } else {
    res.mean_loss = loss_sum / static_cast<double>(steps);
  }
  res.update.params = std::move(w);
  return res;
}

nn::ParamVector fedavg(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw AggregationError("fedavg needs at least one update");
  const std::size_t dim = updates[0].params.size();
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.params.size() != dim) throw AggregationError("updates have unequal parameter lengths");
    if (u.n_samples < 1) throw AggregationError("claimed sample count must be >= 1");
    total += static_cast<double>(u.n_samples);
  }
  nn::ParamVector out(dim, 0.0);
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.n_samples) / total;
    for (std::size_t d = 0; d < dim; ++d) out[d] += w * u.params[d];
  }
  return out;
}

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void check_global_finite(const nn::ParamVector& w, int round) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!std::isfinite(w[i]))
      throw NumericalError("global model became non-finite after round " + std::to_string(round),
                           i);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const data::Dataset& dataset,
                         const data::Partition& partition, const data::ReferenceSet* ref,
                         const CheckpointSink& checkpoint_sink) {
  cfg.validate();
  if (static_cast<int>(partition.assignment.size()) != cfg.num_clients)
    throw ConfigError("partition size does not match the client count");
  if (cfg.defense.kind == defenses::DefenseKind::refd && ref == nullptr)
    throw ConfigError("refd needs a reference set");

  // The attacker population is fixed for the whole run: the first
  // ceil(fraction * N) ids of a seeded shuffle.
  std::vector<bool> is_malicious(static_cast<std::size_t>(cfg.num_clients), false);
  RunResult result;
  if (cfg.attack.kind != attacks::AttackKind::none && cfg.attacker_fraction > 0.0) {
    const int n_mal = static_cast<int>(
        std::ceil(cfg.attacker_fraction * static_cast<double>(cfg.num_clients)));
    std::vector<int> ids(static_cast<std::size_t>(cfg.num_clients));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(cfg.seed, "malicious-ids"));
    rng.shuffle(ids);
    for (int i = 0; i < n_mal; ++i) is_malicious[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = true;
    result.malicious_ids.assign(ids.begin(), ids.begin() + n_mal);
    std::sort(result.malicious_ids.begin(), result.malicious_ids.end());
  }

  Rng init_rng(derive_seed(cfg.seed, "model-init"));
  nn::ParamVector global = nn::init_params<double>(cfg.model, init_rng);
  nn::ParamVector prev_global = global;

  std::unique_ptr<attacks::Adversary> adversary;
  if (cfg.attack.kind != attacks::AttackKind::none)
    adversary = std::make_unique<attacks::Adversary>(cfg.attack, cfg.model, cfg.seed);

  double last_accuracy = 0.0;
  for (int t = 0; t < cfg.rounds; ++t) {
    // Selection; redrawn whole if it contains a benign client with no data.
    Rng select_rng(derive_seed(cfg.seed, "select", static_cast<std::uint64_t>(t)));
    std::vector<int> selected;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000)
        throw ConfigError("could not select " + std::to_string(cfg.selected_per_round) +
                          " clients with non-empty benign shards (round " + std::to_string(t) +
                          ")");
      selected = select_clients(cfg.num_clients, cfg.selected_per_round, select_rng);
      bool ok = true;
      for (int id : selected)
        if (!is_malicious[static_cast<std::size_t>(id)] &&
            partition.assignment[static_cast<std::size_t>(id)].empty())
          ok = false;
      if (ok) break;
    }

    std::vector<int> benign_sel, malicious_sel;
    for (int id : selected)
      (is_malicious[static_cast<std::size_t>(id)] ? malicious_sel : benign_sel).push_back(id);

    // Benign local training, parallel over a fixed task list. Every client
    // trains from a stream derived from (seed, round, id), so results do not
    // depend on scheduling.
    std::vector<LocalTrainResult> benign_results(benign_sel.size());
    std::vector<std::string> failures(benign_sel.size());
    {
      std::atomic<std::size_t> next{0};
      auto worker = [&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= benign_sel.size()) return;
          const int id = benign_sel[i];
          try {
            auto shard = data::gather(dataset.train, partition.assignment[static_cast<std::size_t>(id)]);
            Rng rng(derive_seed(cfg.seed, "client", static_cast<std::uint64_t>(t),
                                static_cast<std::uint64_t>(id)));
            benign_results[i] = local_train(global, cfg.model, shard, cfg.learning_rate,
                                            cfg.local_epochs, cfg.batch_size, rng, id);
          } catch (const std::exception& e) {
            failures[i] = e.what();
          }
        }
      };
      const int n_workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(benign_sel.size())));
      if (n_workers == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }
    }
    for (std::size_t i = 0; i < failures.size(); ++i)
      if (!failures[i].empty())
        throw NumericalError("client " + std::to_string(benign_sel[i]) + " failed in round " +
                                 std::to_string(t) + ": " + failures[i],
                             0);

    // One adversarial update per round, shared by all selected attackers.
    RoundContext ctx{t, global, prev_global, selected};
    nn::ParamVector malicious_params;
    double attack_ms = 0.0;
    if (!malicious_sel.empty() && adversary) {
      const auto t0 = std::chrono::steady_clock::now();
      attacks::BenignView view = attacks::BenignView::denied();
      if (!attacks::data_free(cfg.attack.kind)) {
        std::vector<ClientUpdate> benign_updates;
        for (const auto& r : benign_results) benign_updates.push_back(r.update);
        view = attacks::BenignView::of(std::move(benign_updates));
      }
      if (!attacks::data_free(cfg.attack.kind) && benign_sel.empty()) {
        malicious_params = global;  // nothing to imitate this round
      } else {
        malicious_params =
            adversary->craft(ctx, view, cfg.learning_rate, cfg.local_epochs, cfg.batch_size);
      }
      attack_ms = ms_since(t0);
    }

    // Submissions in selection order.
    std::vector<ClientUpdate> updates;
    updates.reserve(selected.size());
    {
      std::size_t bi = 0;
      for (int id : selected) {
        if (is_malicious[static_cast<std::size_t>(id)] && adversary) {
          ClientUpdate u;
          u.client_id = id;
          u.params = malicious_params;
          u.n_samples = cfg.attack.synth_size;
          updates.push_back(std::move(u));
        } else {
          updates.push_back(benign_results[bi++].update);
        }
      }
    }

    const auto d0 = std::chrono::steady_clock::now();
    auto verdict = defenses::apply_defense(cfg.defense, updates, cfg.model, ref);
    const double defense_ms = ms_since(d0);

    prev_global = std::move(global);
    global = std::move(verdict.aggregated);
    check_global_finite(global, t);

    int admitted_malicious = 0;
    for (int id : verdict.admitted)
      if (is_malicious[static_cast<std::size_t>(id)]) ++admitted_malicious;
    result.n_selected_malicious += static_cast<long>(malicious_sel.size());
    result.n_admitted_malicious += admitted_malicious;

    if (t % cfg.eval_interval == 0 || t == cfg.rounds - 1)
      last_accuracy = nn::accuracy(global, cfg.model, dataset.test);

    double train_loss = 0.0;
    if (!benign_results.empty()) {
      for (const auto& r : benign_results) train_loss += r.mean_loss;
      train_loss /= static_cast<double>(benign_results.size());
    }

    metrics::RoundRecord rec;
    rec.round = t;
    rec.accuracy = last_accuracy;
    rec.train_loss = train_loss;
    rec.selected = static_cast<int>(selected.size());
    rec.malicious_selected = static_cast<int>(malicious_sel.size());
    rec.malicious_admitted = admitted_malicious;
    rec.defense_ms = cfg.record_timing ? defense_ms : 0.0;
    rec.attack_ms = cfg.record_timing ? attack_ms : 0.0;
    result.rounds.push_back(rec);
    result.max_accuracy = std::max(result.max_accuracy, last_accuracy);

    if (checkpoint_sink && cfg.checkpoint_interval > 0 && (t + 1) % cfg.checkpoint_interval == 0)
      checkpoint_sink(t, global);
  }

  result.final_accuracy = last_accuracy;
  result.final_params = std::move(global);
  return result;
}

}  // namespace flsim::fed
