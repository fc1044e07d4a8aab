#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flsim/client_update.hpp"
#include "flsim/filter.hpp"
#include "flsim/generator.hpp"
#include "flsim/model.hpp"
#include "flsim/rng.hpp"

namespace flsim::attacks {

enum class AttackKind { none, dfa_r, dfa_g, lie, fang, minmax, minsum, random_weights };

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind k);

// True for the data-free attacks, which must never see benign updates.
bool data_free(AttackKind k);

enum class Perturbation { unit, sign, std_dev };

struct AttackConfig {
  AttackKind kind = AttackKind::none;
  int synth_size = 50;       // |S|
  int epochs = 5;            // E synthesis epochs per round
  double lr = 0.1;           // synthesis step size
  double lambda_reg = 1.0;   // weight on the distance regularizer
  bool static_mode = false;  // fresh random synthesizer each round, no training
  std::uint64_t z_seed = 0;  // 0: derived from the master seed
  int noise_dim = 16;
  int gen_hidden = 64;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  double lie_z = 1.5;
  Perturbation minmax_perturbation = Perturbation::unit;
  double fang_lambda = 0.0;  // 0: defaults to 10 * learning rate
};

// The attacker's synthetic dataset: |S| images all carrying the poison label.
struct SynthSet {
  std::vector<double> images;  // n x dim, values in [0,1]
  int n = 0;
  int dim = 0;
  int label = 0;  // poison label applied to every image
};

// Benign updates of the current round. Baseline attacks receive a populated
// view; data-free attacks receive a denied one, and any access attempt
// throws. This makes the data-free property structural rather than advisory.
class BenignView {
 public:
  static BenignView of(std::vector<fed::ClientUpdate> updates) {
    BenignView v;
    v.available_ = true;
    v.updates_ = std::move(updates);
    return v;
  }
  static BenignView denied() { return BenignView{}; }

  bool available() const { return available_; }
  const std::vector<fed::ClientUpdate>& updates() const {
    if (!available_) throw InputError("benign updates are not visible to this attack");
    return updates_;
  }

 private:
  BenignView() = default;
  bool available_ = false;
  std::vector<fed::ClientUpdate> updates_;
};

// Everything the single adversarial party carries across rounds.
struct AdversaryState {
  AttackKind kind = AttackKind::none;
  int poison_label = 0;              // fixed for dfa_g, resampled per round for dfa_r
  std::vector<double> filter_params;
  std::vector<double> generator_params;
  nn::FilterLayerSpec filter_spec;
  nn::GeneratorSpec generator_spec;
  std::uint64_t z_seed = 0;
  int reinit_count = 0;  // divergence resets, for logging/inspection
};

struct AdvTrainResult {
  nn::ParamVector params;
  double ce_loss = 0.0;  // final cross-entropy on S
  double l_d = 0.0;      // final value of the distance regularizer
};

// Repeats |S| times: draw a fresh uniform dummy image, run `epochs` descent
// steps on the (persistent) filter kernel against the uniform target, emit
// the filtered image. Images are clamped into [0,1] on emission.
SynthSet dfa_r_synthesize(const nn::ParamVector& global, const nn::ClassifierSpec& spec,
                          AdversaryState& state, const AttackConfig& cfg, Rng& rng);

// Regenerates Z from the fixed seed, runs `epochs` ascent steps on the
// generator against the poison label, returns G(Z) labeled with it.
SynthSet dfa_g_synthesize(const nn::ParamVector& global, const nn::ClassifierSpec& spec,
                          AdversaryState& state, const AttackConfig& cfg);

// Trains a classifier from `global` on the synthetic set, with gradient
// lambda_reg * (w - w(t)) / ||w - w(t)|| added for the distance regularizer
// L_d = ||w - w(t)|| - ||w(t) - w(t-1)||.
AdvTrainResult adversarial_train(const nn::ParamVector& global, const nn::ParamVector& prev_global,
                                 const nn::ClassifierSpec& spec, const SynthSet& synth,
                                 double lambda_reg, double eta, int epochs, int batch_size,
                                 Rng& rng);

// Coordinate-wise mean - z * population std over the benign updates.
nn::ParamVector lie_attack(const BenignView& view, double z);

// mean + gamma * p with the largest gamma (30-step bisection on [0, 1e3])
// still satisfying the Min-Max or Min-Sum distance constraint.
nn::ParamVector minmax_attack(const BenignView& view, const nn::ParamVector& global,
                              Perturbation kind, bool min_sum);

// global - lambda * sign(mean - global), halving lambda until the result is
// not the unique farthest point from the benign mean; reverts to the initial
// lambda when no halving achieves that.
nn::ParamVector fang_attack(const BenignView& view, const nn::ParamVector& global,
                            double lambda0);

// Parameters drawn i.i.d. uniform from [-1, 1].
nn::ParamVector random_weights_attack(std::size_t dim, Rng& rng);

// Owns the adversary state and dispatches per round. All selected malicious
// clients submit copies of the single crafted update.
class Adversary {
 public:
  Adversary(const AttackConfig& cfg, const nn::ClassifierSpec& model_spec,
            std::uint64_t master_seed);

  // Crafts the shared malicious parameter vector for this round.
  nn::ParamVector craft(const fed::RoundContext& ctx, const BenignView& view, double eta,
                        int local_epochs, int batch_size);

  const AdversaryState& state() const { return state_; }
  const AttackConfig& config() const { return cfg_; }

 private:
  AttackConfig cfg_;
  nn::ClassifierSpec model_spec_;
  std::uint64_t master_seed_ = 0;
  AdversaryState state_;
};

}  // namespace flsim::attacks
