#include "flsim/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "flsim/errors.hpp"

namespace flsim::attacks {

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "none") return AttackKind::none;
  if (s == "dfa_r") return AttackKind::dfa_r;
  if (s == "dfa_g") return AttackKind::dfa_g;
  if (s == "lie") return AttackKind::lie;
  if (s == "fang") return AttackKind::fang;
  if (s == "minmax") return AttackKind::minmax;
  if (s == "minsum") return AttackKind::minsum;
  if (s == "random_weights") return AttackKind::random_weights;
  throw ConfigError("unknown attack kind: " + s);
}

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::dfa_r: return "dfa_r";
    case AttackKind::dfa_g: return "dfa_g";
    case AttackKind::lie: return "lie";
    case AttackKind::fang: return "fang";
    case AttackKind::minmax: return "minmax";
    case AttackKind::minsum: return "minsum";
    case AttackKind::random_weights: return "random_weights";
  }
  return "?";
}

bool data_free(AttackKind k) {
  return k == AttackKind::dfa_r || k == AttackKind::dfa_g || k == AttackKind::random_weights;
}

namespace {

constexpr double kDivergenceLimit = 1e3;

double l2_dist(const nn::ParamVector& a, const nn::ParamVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Cross-entropy of the model's prediction for one image vs a target
// distribution; pairs with nn::input_grad for divergence checks.
double ce_to_target(const nn::ParamVector& params, const nn::ClassifierSpec& spec,
                    const std::vector<double>& image, const std::vector<double>& target) {
  auto probs = nn::forward(params, spec, image);
  double ce = 0.0;
  for (int c = 0; c < spec.num_classes; ++c)
    ce -= target[static_cast<std::size_t>(c)] *
          std::log(std::max(probs[static_cast<std::size_t>(c)], 1e-300));
  return ce;
}

nn::ParamVector benign_mean(const std::vector<fed::ClientUpdate>& updates) {
  const std::size_t dim = updates[0].params.size();
  nn::ParamVector mean(dim, 0.0);
  for (const auto& u : updates)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += u.params[d];
  for (auto& v : mean) v /= static_cast<double>(updates.size());
  return mean;
}

}  // namespace

SynthSet dfa_r_synthesize(const nn::ParamVector& global, const nn::ClassifierSpec& spec,
                          AdversaryState& state, const AttackConfig& cfg, Rng& rng) {
  state.filter_spec.validate();
  if (spec.channels != 1)
    throw ConfigError("dfa_r synthesis supports single-channel images only");
  const int a = state.filter_spec.input_size;
  const int b = state.filter_spec.output_size;
  const int L = spec.num_classes;
  const std::vector<double> uniform_target(static_cast<std::size_t>(L), 1.0 / L);

  SynthSet synth;
  synth.n = cfg.synth_size;
  synth.dim = b * b;
  synth.images.resize(static_cast<std::size_t>(synth.n) * static_cast<std::size_t>(synth.dim));
  synth.label = state.poison_label;

  for (int s = 0; s < cfg.synth_size; ++s) {
    // Fresh per-pixel uniform dummy image for every repetition.
    std::vector<double> dummy(static_cast<std::size_t>(a) * static_cast<std::size_t>(a));
    for (auto& v : dummy) v = rng.uniform();

    const int epochs = cfg.static_mode ? 0 : cfg.epochs;
    for (int e = 0; e < epochs; ++e) {
      auto filtered = nn::filter_forward(state.filter_spec, state.filter_params, dummy);
      const double ce = ce_to_target(global, spec, filtered, uniform_target);
      if (ce > kDivergenceLimit) {
        Rng reinit(rng.next_u64());
        for (auto& v : state.filter_params) v = reinit.normal() * 0.1;
        ++state.reinit_count;
        std::cerr << "[flsim] dfa_r filter diverged (loss " << ce << "), reinitialized\n";
        continue;
      }
      auto d_image = nn::input_grad(global, spec, filtered, uniform_target);
      auto d_kernel = nn::filter_backward(state.filter_spec, dummy, d_image);
      state.filter_params = nn::sgd_step(state.filter_params, d_kernel, cfg.lr);
    }

    auto image = nn::filter_forward(state.filter_spec, state.filter_params, dummy);
    double* dst = synth.images.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(synth.dim);
    for (int i = 0; i < synth.dim; ++i)
      dst[i] = std::clamp(image[static_cast<std::size_t>(i)], 0.0, 1.0);
  }
  return synth;
}

SynthSet dfa_g_synthesize(const nn::ParamVector& global, const nn::ClassifierSpec& spec,
                          AdversaryState& state, const AttackConfig& cfg) {
  state.generator_spec.validate();
  if (spec.channels != 1)
    throw ConfigError("dfa_g synthesis supports single-channel images only");
  const auto noise = nn::gaussian_noise<double>(cfg.synth_size, state.generator_spec.noise_dim,
                                                state.z_seed);

  const int epochs = cfg.static_mode ? 0 : cfg.epochs;
  for (int e = 0; e < epochs; ++e) {
    auto images = nn::generator_forward(state.generator_spec, state.generator_params, noise);
    auto [ce, d_images] = nn::input_grad_label(global, spec, images, state.poison_label);
    if (ce > kDivergenceLimit) {
      Rng reinit(derive_seed(state.z_seed, "gen-reinit",
                             static_cast<std::uint64_t>(state.reinit_count)));
      state.generator_params = nn::init_generator<double>(state.generator_spec, reinit);
      ++state.reinit_count;
      std::cerr << "[flsim] dfa_g generator diverged (loss " << ce << "), reinitialized\n";
      continue;
    }
    auto d_theta = nn::generator_backward(state.generator_spec, state.generator_params, noise,
                                          d_images);
    // Gradient ascent: the generator maximizes the cross-entropy.
    for (std::size_t i = 0; i < state.generator_params.size(); ++i)
      state.generator_params[i] += cfg.lr * d_theta[i];
  }

  SynthSet synth;
  synth.n = cfg.synth_size;
  synth.dim = state.generator_spec.out_dim();
  synth.images = nn::generator_forward(state.generator_spec, state.generator_params, noise);
  synth.label = state.poison_label;
  return synth;
}

AdvTrainResult adversarial_train(const nn::ParamVector& global, const nn::ParamVector& prev_global,
                                 const nn::ClassifierSpec& spec, const SynthSet& synth,
                                 double lambda_reg, double eta, int epochs, int batch_size,
                                 Rng& rng) {
  if (synth.n == 0) throw InputError("adversarial_train needs a non-empty synthetic set");
  if (batch_size < 1) throw InputError("batch size must be positive");

  nn::ParamVector w = global;
  std::vector<int> order(static_cast<std::size_t>(synth.n));
  std::iota(order.begin(), order.end(), 0);
  const std::size_t d = static_cast<std::size_t>(synth.dim);

  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (int start = 0; start < synth.n; start += batch_size) {
      const int count = std::min(batch_size, synth.n - start);
      nn::LabeledBatch batch;
      batch.n = count;
      batch.rows = spec.rows;
      batch.cols = spec.cols;
      batch.channels = spec.channels;
      batch.images.resize(static_cast<std::size_t>(count) * d);
      batch.labels.assign(static_cast<std::size_t>(count), synth.label);
      for (int i = 0; i < count; ++i)
        std::copy_n(synth.images.begin() +
                        static_cast<std::ptrdiff_t>(static_cast<std::size_t>(
                            order[static_cast<std::size_t>(start + i)]) * d),
                    d, batch.images.begin() + static_cast<std::ptrdiff_t>(i) * static_cast<std::ptrdiff_t>(d));
      auto [loss, grad] = nn::loss_and_grad(w, spec, batch);
      (void)loss;
      if (lambda_reg != 0.0) {
        const double dist = l2_dist(w, global);
        if (dist > 0.0) {
          for (std::size_t i = 0; i < grad.size(); ++i)
            grad[i] += lambda_reg * (w[i] - global[i]) / dist;
        }
      }
      w = nn::sgd_step(w, grad, eta);
    }
  }

  AdvTrainResult res;
  nn::LabeledBatch full;
  full.n = synth.n;
  full.rows = spec.rows;
  full.cols = spec.cols;
  full.channels = spec.channels;
  full.images = synth.images;
  full.labels.assign(static_cast<std::size_t>(synth.n), synth.label);
  res.ce_loss = nn::loss_and_grad(w, spec, full).first;
  res.l_d = l2_dist(w, global) - l2_dist(global, prev_global);
  res.params = std::move(w);
  return res;
}

nn::ParamVector lie_attack(const BenignView& view, double z) {
  const auto& updates = view.updates();
  if (updates.empty()) throw InputError("lie needs at least one benign update");
  auto mean = benign_mean(updates);
  if (updates.size() < 2) return mean;  // no spread to exploit
  const std::size_t dim = mean.size();
  nn::ParamVector out(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    double var = 0.0;
    for (const auto& u : updates) {
      const double diff = u.params[d] - mean[d];
      var += diff * diff;
    }
    var /= static_cast<double>(updates.size());  // population variance
    out[d] = mean[d] - z * std::sqrt(var);
  }
  return out;
}

nn::ParamVector minmax_attack(const BenignView& view, const nn::ParamVector& global,
                              Perturbation kind, bool min_sum) {
  const auto& updates = view.updates();
  if (updates.empty()) throw InputError("minmax needs at least one benign update");
  auto mean = benign_mean(updates);
  if (updates.size() < 2) return mean;
  const std::size_t dim = mean.size();
  const int n = static_cast<int>(updates.size());

  nn::ParamVector p(dim, 0.0);
  switch (kind) {
    case Perturbation::unit: {
      double norm = l2_dist(mean, global);
      if (norm > 0.0)
        for (std::size_t d = 0; d < dim; ++d) p[d] = -(mean[d] - global[d]) / norm;
      break;
    }
    case Perturbation::sign:
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = mean[d] - global[d];
        p[d] = diff > 0.0 ? -1.0 : (diff < 0.0 ? 1.0 : 0.0);
      }
      break;
    case Perturbation::std_dev:
      for (std::size_t d = 0; d < dim; ++d) {
        double var = 0.0;
        for (const auto& u : updates) {
          const double diff = u.params[d] - mean[d];
          var += diff * diff;
        }
        p[d] = -std::sqrt(var / n);
      }
      break;
  }

  // Constraint bound from the benign updates alone.
  double bound = 0.0;
  if (!min_sum) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        bound = std::max(bound, l2_dist(updates[static_cast<std::size_t>(i)].params,
                                        updates[static_cast<std::size_t>(j)].params));
  } else {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double dist = l2_dist(updates[static_cast<std::size_t>(j)].params,
                                    updates[static_cast<std::size_t>(i)].params);
        s += dist * dist;
      }
      bound = std::max(bound, s);
    }
  }

  auto feasible = [&](double gamma) {
    nn::ParamVector cand(dim);
    for (std::size_t d = 0; d < dim; ++d) cand[d] = mean[d] + gamma * p[d];
    if (!min_sum) {
      double worst = 0.0;
      for (const auto& u : updates) worst = std::max(worst, l2_dist(cand, u.params));
      return worst <= bound;
    }
    double s = 0.0;
    for (const auto& u : updates) {
      const double dist = l2_dist(cand, u.params);
      s += dist * dist;
    }
    return s <= bound;
  };

  double lo = 0.0, hi = 1e3;
  if (feasible(hi)) {
    std::cerr << "[flsim] minmax bisection bracket exhausted, using upper bound\n";
    lo = hi;
  } else {
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid))
        lo = mid;
      else
        hi = mid;
    }
  }
  nn::ParamVector out(dim);
  for (std::size_t d = 0; d < dim; ++d) out[d] = mean[d] + lo * p[d];
  return out;
}

nn::ParamVector fang_attack(const BenignView& view, const nn::ParamVector& global,
                            double lambda0) {
  const auto& updates = view.updates();
  if (updates.empty()) throw InputError("fang needs at least one benign update");
  auto mean = benign_mean(updates);
  const std::size_t dim = mean.size();
  nn::ParamVector dir(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = mean[d] - global[d];
    dir[d] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  }
  double farthest_benign = 0.0;
  for (const auto& u : updates) farthest_benign = std::max(farthest_benign, l2_dist(u.params, mean));

  auto candidate = [&](double lambda) {
    nn::ParamVector c(dim);
    for (std::size_t d = 0; d < dim; ++d) c[d] = global[d] - lambda * dir[d];
    return c;
  };

  // Shrink lambda until the crafted update is not the unique farthest point
  // from the benign mean; the defense itself is unknown to the attacker.
  double lambda = lambda0;
  for (int attempt = 0; attempt <= 20; ++attempt) {
    auto cand = candidate(lambda);
    if (l2_dist(cand, mean) <= farthest_benign) return cand;
    lambda *= 0.5;
  }
  return candidate(lambda0);  // stealth unachievable; keep the strong push
}

nn::ParamVector random_weights_attack(std::size_t dim, Rng& rng) {
  nn::ParamVector out(dim);
  for (auto& v : out) v = rng.uniform(-1.0, 1.0);
  return out;
}

Adversary::Adversary(const AttackConfig& cfg, const nn::ClassifierSpec& model_spec,
                     std::uint64_t master_seed)
    : cfg_(cfg), model_spec_(model_spec), master_seed_(master_seed) {
  state_.kind = cfg.kind;
  state_.z_seed = cfg.z_seed != 0 ? cfg.z_seed : derive_seed(master_seed, "z-noise");
  if (cfg.kind == AttackKind::dfa_r) {
    if (model_spec.rows != model_spec.cols)
      throw ConfigError("dfa_r needs square images");
    state_.filter_spec =
        nn::FilterLayerSpec::for_output(model_spec.rows, cfg.kernel, cfg.stride, cfg.padding);
    Rng rng(derive_seed(master_seed, "filter-init"));
    state_.filter_params.resize(state_.filter_spec.param_count());
    for (auto& v : state_.filter_params) v = rng.normal() * 0.1;
  } else if (cfg.kind == AttackKind::dfa_g) {
    if (model_spec.rows != model_spec.cols)
      throw ConfigError("dfa_g needs square images");
    state_.generator_spec.noise_dim = cfg.noise_dim;
    state_.generator_spec.hidden = cfg.gen_hidden;
    state_.generator_spec.out_side = model_spec.rows;
    state_.generator_spec.validate();
    Rng rng(derive_seed(master_seed, "generator-init"));
    state_.generator_params = nn::init_generator<double>(state_.generator_spec, rng);
    Rng label_rng(derive_seed(master_seed, "poison-label"));
    state_.poison_label = label_rng.uniform_int(model_spec.num_classes);
  }
}

nn::ParamVector Adversary::craft(const fed::RoundContext& ctx, const BenignView& view, double eta,
                                 int local_epochs, int batch_size) {
  Rng round_rng(derive_seed(master_seed_, "adversary", static_cast<std::uint64_t>(ctx.round)));
  switch (cfg_.kind) {
    case AttackKind::none:
      throw InputError("craft called with attack kind none");
    case AttackKind::dfa_r: {
      if (cfg_.static_mode) {
        Rng reinit(derive_seed(master_seed_, "filter-static", static_cast<std::uint64_t>(ctx.round)));
        for (auto& v : state_.filter_params) v = reinit.normal() * 0.1;
      }
      // The poison label is redrawn every round for this variant.
      state_.poison_label = round_rng.uniform_int(model_spec_.num_classes);
      auto synth = dfa_r_synthesize(ctx.global, model_spec_, state_, cfg_, round_rng);
      return adversarial_train(ctx.global, ctx.prev_global, model_spec_, synth, cfg_.lambda_reg,
                               eta, local_epochs, batch_size, round_rng)
          .params;
    }
    case AttackKind::dfa_g: {
      if (cfg_.static_mode) {
        Rng reinit(derive_seed(master_seed_, "generator-static",
                               static_cast<std::uint64_t>(ctx.round)));
        state_.generator_params = nn::init_generator<double>(state_.generator_spec, reinit);
      }
      auto synth = dfa_g_synthesize(ctx.global, model_spec_, state_, cfg_);
      return adversarial_train(ctx.global, ctx.prev_global, model_spec_, synth, cfg_.lambda_reg,
                               eta, local_epochs, batch_size, round_rng)
          .params;
    }
    case AttackKind::lie:
      return lie_attack(view, cfg_.lie_z);
    case AttackKind::minmax:
      return minmax_attack(view, ctx.global, cfg_.minmax_perturbation, false);
    case AttackKind::minsum:
      return minmax_attack(view, ctx.global, cfg_.minmax_perturbation, true);
    case AttackKind::fang: {
      const double lambda0 = cfg_.fang_lambda > 0.0 ? cfg_.fang_lambda : 10.0 * eta;
      return fang_attack(view, ctx.global, lambda0);
    }
    case AttackKind::random_weights:
      return random_weights_attack(ctx.global.size(), round_rng);
  }
  throw InputError("unhandled attack kind");
}

}  // namespace flsim::attacks
