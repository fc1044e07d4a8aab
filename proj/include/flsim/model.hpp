#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

namespace flsim::nn {

// Flat parameter vector; the unit exchanged between clients and the server.
// Reference mode is float64; the templated ops below also instantiate with
// float for the fast mode.
using ParamVector = std::vector<double>;

template <typename T>
using Vec = std::vector<T>;

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fully-connected classifier: input -> tanh hidden layers -> softmax.
// An empty hidden list is plain softmax regression.
struct ClassifierSpec {
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<int> hidden;
  int num_classes = 0;

  int input_dim() const { return rows * cols * channels; }

  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim());
    for (int h : hidden) dims.push_back(h);
    dims.push_back(num_classes);
    return dims;
  }

  std::size_t param_count() const {
    auto dims = layer_dims();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      total += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
               static_cast<std::size_t>(dims[l + 1]);
    return total;
  }

  void validate() const {
    if (rows <= 0 || cols <= 0 || channels <= 0)
      throw ConfigError("classifier input dims must be positive");
    if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
    for (int h : hidden)
      if (h < 0) throw ConfigError("hidden width must be non-negative");
  }
};

// Batch of images (row-major n x dim, values in [0,1]) with class labels.
template <typename T>
struct LabeledBatchT {
  std::vector<T> images;
  std::vector<int> labels;
  int n = 0;
  int rows = 0;
  int cols = 0;
  int channels = 1;

  int dim() const { return rows * cols * channels; }

  void check() const {
    if (labels.size() != static_cast<std::size_t>(n) ||
        images.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(dim()))
      throw InputError("batch images and labels have inconsistent sizes");
  }
};

using LabeledBatch = LabeledBatchT<double>;

namespace detail {

template <typename T>
void check_params(const Vec<T>& params, const ClassifierSpec& spec) {
  if (params.size() != spec.param_count())
    throw InputError("parameter vector length " + std::to_string(params.size()) +
                     " does not match spec count " + std::to_string(spec.param_count()));
}

template <typename T>
void check_finite(const Vec<T>& v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(static_cast<double>(v[i])))
      throw NumericalError(std::string("non-finite value in ") + what, i);
}

// Row-wise stable softmax in place.
template <typename T>
void softmax_rows(MatX<T>& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    T m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    T s = z.row(i).sum();
    z.row(i) /= s;
  }
}

// Forward pass keeping every activation; activations[0] is the input.
template <typename T>
std::vector<MatX<T>> forward_all(const Vec<T>& params, const ClassifierSpec& spec,
                                 const T* images, int n) {
  auto dims = spec.layer_dims();
  std::vector<MatX<T>> acts;
  acts.reserve(dims.size());
  acts.emplace_back(Eigen::Map<const MatX<T>>(images, n, dims[0]));
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    Eigen::Map<const MatX<T>> w(params.data() + off, in, out);
    off += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(params.data() + off, out);
    off += static_cast<std::size_t>(out);
    MatX<T> z = acts.back() * w;
    z.rowwise() += b;
    if (l + 2 < dims.size()) z = z.array().tanh();
    acts.push_back(std::move(z));
  }
  softmax_rows(acts.back());
  return acts;
}

}  // namespace detail

// Per-class probabilities for a batch of images; each row sums to 1.
template <typename T>
Vec<T> forward(const Vec<T>& params, const ClassifierSpec& spec, const Vec<T>& images) {
  detail::check_params(params, spec);
  const int d = spec.input_dim();
  if (images.size() % static_cast<std::size_t>(d) != 0)
    throw InputError("image buffer size is not a multiple of the input dim");
  const int n = static_cast<int>(images.size() / static_cast<std::size_t>(d));
  if (n == 0) return {};
  auto acts = detail::forward_all(params, spec, images.data(), n);
  const MatX<T>& p = acts.back();
  Vec<T> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.num_classes));
  Eigen::Map<MatX<T>>(out.data(), n, spec.num_classes) = p;
  return out;
}

// Mean cross-entropy over the batch plus its gradient w.r.t. the parameters.
template <typename T>
std::pair<T, Vec<T>> loss_and_grad(const Vec<T>& params, const ClassifierSpec& spec,
                                   const LabeledBatchT<T>& batch) {
  detail::check_params(params, spec);
  batch.check();
  if (batch.n == 0) throw InputError("loss_and_grad needs a non-empty batch");
  if (batch.dim() != spec.input_dim()) throw InputError("batch dims do not match spec");
  detail::check_finite(params, "parameters");

  const int n = batch.n;
  auto dims = spec.layer_dims();
  auto acts = detail::forward_all(params, spec, batch.images.data(), n);
  const MatX<T>& probs = acts.back();
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (!std::isfinite(static_cast<double>(probs.data()[i])))
      throw NumericalError("non-finite probability in forward pass",
                           static_cast<std::size_t>(i));

  T loss = T(0);
  const T tiny = std::numeric_limits<T>::min();
  for (int i = 0; i < n; ++i)
    loss -= std::log(std::max(probs(i, batch.labels[static_cast<std::size_t>(i)]), tiny));
  loss /= static_cast<T>(n);

  // dZ for the softmax layer: (P - onehot) / n.
  MatX<T> dz = probs;
  for (int i = 0; i < n; ++i) dz(i, batch.labels[static_cast<std::size_t>(i)]) -= T(1);
  dz /= static_cast<T>(n);

  Vec<T> grad(params.size());
  // Walk layers backwards, filling gradient slices at each layer's offset.
  std::vector<std::size_t> offsets(dims.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
           static_cast<std::size_t>(dims[l + 1]);
  }
  for (int l = static_cast<int>(dims.size()) - 2; l >= 0; --l) {
    const int in = dims[static_cast<std::size_t>(l)];
    const int out = dims[static_cast<std::size_t>(l) + 1];
    const std::size_t o = offsets[static_cast<std::size_t>(l)];
    Eigen::Map<MatX<T>> dw(grad.data() + o, in, out);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(
        grad.data() + o + static_cast<std::size_t>(in) * static_cast<std::size_t>(out), out);
    const MatX<T>& a_prev = acts[static_cast<std::size_t>(l)];
    dw = a_prev.transpose() * dz;
    db = dz.colwise().sum();
    if (l > 0) {
      Eigen::Map<const MatX<T>> w(params.data() + o, in, out);
      MatX<T> da = dz * w.transpose();
      // tanh' = 1 - a^2 on the stored activation.
      dz = da.array() * (T(1) - a_prev.array().square());
    }
  }
  return {loss, std::move(grad)};
}

// Cross-entropy between the prediction for one image and a target
// distribution, differentiated w.r.t. the image (weights stay frozen).
template <typename T>
Vec<T> input_grad(const Vec<T>& params, const ClassifierSpec& spec, const Vec<T>& image,
                  const Vec<T>& target_dist) {
  detail::check_params(params, spec);
  if (static_cast<int>(image.size()) != spec.input_dim())
    throw InputError("image size does not match spec input dim");
  if (static_cast<int>(target_dist.size()) != spec.num_classes)
    throw InputError("target distribution length must equal the class count");
  T sum = T(0);
  for (T q : target_dist) {
    if (q < T(0)) throw InputError("target distribution has a negative entry");
    sum += q;
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-6)
    throw InputError("target distribution does not sum to 1");

  auto dims = spec.layer_dims();
  auto acts = detail::forward_all(params, spec, image.data(), 1);
  MatX<T> dz = acts.back();
  for (int c = 0; c < spec.num_classes; ++c) dz(0, c) -= target_dist[static_cast<std::size_t>(c)];

  std::size_t off = 0;
  std::vector<std::size_t> offsets(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
           static_cast<std::size_t>(dims[l + 1]);
  }
  for (int l = static_cast<int>(dims.size()) - 2; l >= 0; --l) {
    const int in = dims[static_cast<std::size_t>(l)];
    const int out = dims[static_cast<std::size_t>(l) + 1];
    Eigen::Map<const MatX<T>> w(params.data() + offsets[static_cast<std::size_t>(l)], in, out);
    MatX<T> da = dz * w.transpose();
    if (l > 0) {
      const MatX<T>& a_prev = acts[static_cast<std::size_t>(l)];
      dz = da.array() * (T(1) - a_prev.array().square());
    } else {
      dz = std::move(da);
    }
  }
  Vec<T> out(static_cast<std::size_t>(spec.input_dim()));
  Eigen::Map<MatX<T>>(out.data(), 1, spec.input_dim()) = dz;
  return out;
}

// Mean cross-entropy of a whole image batch against one fixed label, and its
// gradient w.r.t. the images. Used to drive synthetic-image optimization.
template <typename T>
std::pair<T, Vec<T>> input_grad_label(const Vec<T>& params, const ClassifierSpec& spec,
                                      const Vec<T>& images, int label) {
  detail::check_params(params, spec);
  const int d = spec.input_dim();
  const int n = static_cast<int>(images.size() / static_cast<std::size_t>(d));
  if (n == 0 || images.size() % static_cast<std::size_t>(d) != 0)
    throw InputError("image buffer size is not a positive multiple of the input dim");
  if (label < 0 || label >= spec.num_classes) throw InputError("label out of range");

  auto dims = spec.layer_dims();
  auto acts = detail::forward_all(params, spec, images.data(), n);
  const MatX<T>& probs = acts.back();
  T loss = T(0);
  const T tiny = std::numeric_limits<T>::min();
  for (int i = 0; i < n; ++i) loss -= std::log(std::max(probs(i, label), tiny));
  loss /= static_cast<T>(n);

  MatX<T> dz = probs;
  for (int i = 0; i < n; ++i) dz(i, label) -= T(1);
  dz /= static_cast<T>(n);

  std::size_t off = 0;
  std::vector<std::size_t> offsets(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
           static_cast<std::size_t>(dims[l + 1]);
  }
  for (int l = static_cast<int>(dims.size()) - 2; l >= 0; --l) {
    const int in = dims[static_cast<std::size_t>(l)];
    const int out = dims[static_cast<std::size_t>(l) + 1];
    Eigen::Map<const MatX<T>> w(params.data() + offsets[static_cast<std::size_t>(l)], in, out);
    MatX<T> da = dz * w.transpose();
    if (l > 0) {
      const MatX<T>& a_prev = acts[static_cast<std::size_t>(l)];
      dz = da.array() * (T(1) - a_prev.array().square());
    } else {
      dz = std::move(da);
    }
  }
  Vec<T> grads(images.size());
  Eigen::Map<MatX<T>>(grads.data(), n, d) = dz;
  return {loss, std::move(grads)};
}

// Plain gradient-descent step: params - eta * grad.
template <typename T>
Vec<T> sgd_step(const Vec<T>& params, const Vec<T>& grad, T eta) {
  if (params.size() != grad.size())
    throw InputError("sgd_step needs matching parameter and gradient lengths");
  if (eta < T(0)) throw InputError("learning rate must be non-negative");
  Vec<T> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] - eta * grad[i];
  return out;
}

// Seeded weight init: N(0, 1/sqrt(fan_in)) weights, zero biases.
template <typename T>
Vec<T> init_params(const ClassifierSpec& spec, Rng& rng) {
  auto dims = spec.layer_dims();
  Vec<T> params(spec.param_count());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t nw = static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dims[l])));
    for (std::size_t i = 0; i < nw; ++i) params[off + i] = static_cast<T>(rng.normal()) * scale;
    off += nw;
    for (int i = 0; i < dims[l + 1]; ++i) params[off + static_cast<std::size_t>(i)] = T(0);
    off += static_cast<std::size_t>(dims[l + 1]);
  }
  return params;
}

// Fraction of test samples whose argmax prediction matches the label.
template <typename T>
double accuracy(const Vec<T>& params, const ClassifierSpec& spec, const LabeledBatchT<T>& batch) {
  if (batch.n == 0) throw InputError("accuracy needs a non-empty batch");
  auto probs = forward(params, spec, batch.images);
  const int L = spec.num_classes;
  int hits = 0;
  for (int i = 0; i < batch.n; ++i) {
    const T* row = probs.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(L);
    int best = 0;
    for (int c = 1; c < L; ++c)
      if (row[c] > row[best]) best = c;
    if (best == batch.labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.n);
}

}  // namespace flsim::nn
