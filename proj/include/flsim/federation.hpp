#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flsim/attacks.hpp"
#include "flsim/client_update.hpp"
#include "flsim/data.hpp"
#include "flsim/defenses.hpp"
#include "flsim/metrics.hpp"
#include "flsim/model.hpp"
#include "flsim/rng.hpp"

namespace flsim::fed {

struct ExperimentConfig {
  int num_clients = 100;       // N
  int selected_per_round = 10; // K
  int rounds = 150;            // R
  double attacker_fraction = 0.2;
  double learning_rate = 0.05;
  int local_epochs = 1;
  int batch_size = 10;
  int eval_interval = 1;
  int checkpoint_interval = 0;  // 0: final checkpoint only
  bool record_timing = true;
  std::uint64_t seed = 1;
  int workers = 1;  // parallel client training threads

  nn::ClassifierSpec model;
  attacks::AttackConfig attack;
  defenses::DefenseConfig defense;

  void validate() const;
};

// K distinct ids, uniform without replacement.
std::vector<int> select_clients(int num_clients, int k, Rng& rng);

struct LocalTrainResult {
  ClientUpdate update;
  double mean_loss = 0.0;  // average mini-batch loss across the epochs
};

// `epochs` full passes of mini-batch SGD starting from the global model.
LocalTrainResult local_train(const nn::ParamVector& global, const nn::ClassifierSpec& spec,
                             const nn::LabeledBatch& data, double eta, int epochs, int batch_size,
                             Rng& rng, int client_id);

// Sample-count weighted average of the submitted models.
nn::ParamVector fedavg(const std::vector<ClientUpdate>& updates);

struct RunResult {
  std::vector<metrics::RoundRecord> rounds;
  nn::ParamVector final_params;
  long n_selected_malicious = 0;  // N_s
  long n_admitted_malicious = 0;  // N_p
  double max_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::vector<int> malicious_ids;
};

using CheckpointSink = std::function<void(int round, const nn::ParamVector&)>;

// Runs the full federated loop: selection, benign local training (possibly
// on worker threads), one adversarial update shared by the round's selected
// attackers, defense-filtered aggregation, and per-round evaluation.
// Deterministic for a fixed config regardless of the worker count.
RunResult run_experiment(const ExperimentConfig& cfg, const data::Dataset& dataset,
                         const data::Partition& partition, const data::ReferenceSet* ref,
                         const CheckpointSink& checkpoint_sink = nullptr);

}  // namespace flsim::fed
