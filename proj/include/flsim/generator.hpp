#pragma once

#include <cmath>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/model.hpp"
#include "flsim/rng.hpp"

namespace flsim::nn {

// Dense image generator: noise -> tanh hidden -> sigmoid image in [0,1].
struct GeneratorSpec {
  int noise_dim = 16;
  int hidden = 64;
  int out_side = 0;  // produces out_side x out_side images

  int out_dim() const { return out_side * out_side; }
  std::size_t param_count() const {
    return static_cast<std::size_t>(noise_dim) * static_cast<std::size_t>(hidden) +
           static_cast<std::size_t>(hidden) +
           static_cast<std::size_t>(hidden) * static_cast<std::size_t>(out_dim()) +
           static_cast<std::size_t>(out_dim());
  }
  void validate() const {
    if (noise_dim < 1 || hidden < 1 || out_side < 1)
      throw ConfigError("generator dims must be positive");
  }
};

// Gaussian noise batch Z (n x noise_dim), regenerated from a fixed seed.
template <typename T>
Vec<T> gaussian_noise(int n, int noise_dim, std::uint64_t seed) {
  Rng rng(seed);
  Vec<T> z(static_cast<std::size_t>(n) * static_cast<std::size_t>(noise_dim));
  for (auto& v : z) v = static_cast<T>(rng.normal());
  return z;
}

namespace detail {

template <typename T>
struct GenForward {
  MatX<T> hidden;  // tanh activations
  MatX<T> images;  // sigmoid outputs
};

template <typename T>
GenForward<T> generator_forward_all(const GeneratorSpec& spec, const Vec<T>& theta,
                                    const Vec<T>& noise) {
  if (theta.size() != spec.param_count()) throw InputError("generator parameter size mismatch");
  const int nd = spec.noise_dim, h = spec.hidden, od = spec.out_dim();
  if (noise.size() % static_cast<std::size_t>(nd) != 0)
    throw InputError("noise buffer size is not a multiple of noise_dim");
  const int n = static_cast<int>(noise.size() / static_cast<std::size_t>(nd));
  std::size_t off = 0;
  Eigen::Map<const MatX<T>> w1(theta.data() + off, nd, h);
  off += static_cast<std::size_t>(nd) * static_cast<std::size_t>(h);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b1(theta.data() + off, h);
  off += static_cast<std::size_t>(h);
  Eigen::Map<const MatX<T>> w2(theta.data() + off, h, od);
  off += static_cast<std::size_t>(h) * static_cast<std::size_t>(od);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b2(theta.data() + off, od);

  Eigen::Map<const MatX<T>> z(noise.data(), n, nd);
  GenForward<T> f;
  f.hidden = ((z * w1).rowwise() + b1).array().tanh();
  MatX<T> logits = (f.hidden * w2).rowwise() + b2;
  f.images = (T(1) / (T(1) + (-logits.array()).exp())).matrix();
  return f;
}

}  // namespace detail

// Image batch G(Z), each pixel squashed into (0,1).
template <typename T>
Vec<T> generator_forward(const GeneratorSpec& spec, const Vec<T>& theta, const Vec<T>& noise) {
  auto f = detail::generator_forward_all(spec, theta, noise);
  Vec<T> out(static_cast<std::size_t>(f.images.rows()) *
             static_cast<std::size_t>(f.images.cols()));
  Eigen::Map<MatX<T>>(out.data(), f.images.rows(), f.images.cols()) = f.images;
  return out;
}

// Backprop of an upstream gradient on the images onto theta.
template <typename T>
Vec<T> generator_backward(const GeneratorSpec& spec, const Vec<T>& theta, const Vec<T>& noise,
                          const Vec<T>& d_images) {
  const int nd = spec.noise_dim, h = spec.hidden, od = spec.out_dim();
  const int n = static_cast<int>(noise.size() / static_cast<std::size_t>(nd));
  if (d_images.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(od))
    throw InputError("image gradient size mismatch");
  auto f = detail::generator_forward_all(spec, theta, noise);

  std::size_t off = static_cast<std::size_t>(nd) * static_cast<std::size_t>(h) +
                    static_cast<std::size_t>(h);
  Eigen::Map<const MatX<T>> w2(theta.data() + off, h, od);

  Eigen::Map<const MatX<T>> dimg(d_images.data(), n, od);
  // sigmoid' = s(1-s)
  MatX<T> dlogits = dimg.array() * f.images.array() * (T(1) - f.images.array());
  MatX<T> dhidden_raw = dlogits * w2.transpose();
  MatX<T> dpre = dhidden_raw.array() * (T(1) - f.hidden.array().square());

  Vec<T> d_theta(spec.param_count(), T(0));
  Eigen::Map<const MatX<T>> z(noise.data(), n, nd);
  std::size_t o = 0;
  Eigen::Map<MatX<T>> dw1(d_theta.data() + o, nd, h);
  o += static_cast<std::size_t>(nd) * static_cast<std::size_t>(h);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db1(d_theta.data() + o, h);
  o += static_cast<std::size_t>(h);
  Eigen::Map<MatX<T>> dw2(d_theta.data() + o, h, od);
  o += static_cast<std::size_t>(h) * static_cast<std::size_t>(od);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db2(d_theta.data() + o, od);

  dw2 = f.hidden.transpose() * dlogits;
  db2 = dlogits.colwise().sum();
  dw1 = z.transpose() * dpre;
  db1 = dpre.colwise().sum();
  return d_theta;
}

// Seeded generator init, same scheme as the classifier.
template <typename T>
Vec<T> init_generator(const GeneratorSpec& spec, Rng& rng) {
  Vec<T> theta(spec.param_count());
  const int nd = spec.noise_dim, h = spec.hidden, od = spec.out_dim();
  std::size_t o = 0;
  const T s1 = static_cast<T>(1.0 / std::sqrt(static_cast<double>(nd)));
  for (int i = 0; i < nd * h; ++i) theta[o++] = static_cast<T>(rng.normal()) * s1;
  for (int i = 0; i < h; ++i) theta[o++] = T(0);
  const T s2 = static_cast<T>(1.0 / std::sqrt(static_cast<double>(h)));
  for (int i = 0; i < h * od; ++i) theta[o++] = static_cast<T>(rng.normal()) * s2;
  for (int i = 0; i < od; ++i) theta[o++] = T(0);
  return theta;
}

}  // namespace flsim::nn
