#pragma once

#include <string>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/model.hpp"

namespace flsim::nn {

// Single 2D convolution mapping a dummy image A (a x a) to an image B
// (b x b). The size relation a = b*(St+1) - 2P + J is enforced verbatim;
// the sliding step of the convolution is St+1, and output windows may leave
// an uncovered margin at the borders for some configurations.
struct FilterLayerSpec {
  int kernel = 3;    // J
  int stride = 1;    // St
  int padding = 0;   // P
  int input_size = 0;   // a
  int output_size = 0;  // b

  int step() const { return stride + 1; }
  std::size_t param_count() const {
    return static_cast<std::size_t>(kernel) * static_cast<std::size_t>(kernel);
  }

  void validate() const {
    if (kernel < 1 || stride < 0 || padding < 0 || input_size < 1 || output_size < 1)
      throw ConfigError("filter layer fields must be positive (padding/stride may be 0)");
    const int expected = output_size * (stride + 1) - 2 * padding + kernel;
    if (input_size != expected)
      throw ConfigError("filter size constraint violated: a=" + std::to_string(input_size) +
                        " but b*(St+1)-2P+J=" + std::to_string(expected));
    if (padding >= kernel)
      throw ConfigError("filter padding must be smaller than the kernel");
  }

  // Derives the dummy-image size a from the wanted output size b.
  static FilterLayerSpec for_output(int b, int kernel, int stride, int padding) {
    FilterLayerSpec s;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.output_size = b;
    s.input_size = b * (stride + 1) - 2 * padding + kernel;
    s.validate();
    return s;
  }
};

// B[i,j] = sum_{u,v} K[u,v] * A[i*step+u-P, j*step+v-P], zero padded.
template <typename T>
Vec<T> filter_forward(const FilterLayerSpec& spec, const Vec<T>& kernel, const Vec<T>& dummy) {
  if (kernel.size() != spec.param_count()) throw InputError("filter kernel size mismatch");
  const int a = spec.input_size, b = spec.output_size, J = spec.kernel;
  const int step = spec.step(), P = spec.padding;
  if (dummy.size() != static_cast<std::size_t>(a) * static_cast<std::size_t>(a))
    throw InputError("dummy image size mismatch");
  Vec<T> out(static_cast<std::size_t>(b) * static_cast<std::size_t>(b), T(0));
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      T acc = T(0);
      for (int u = 0; u < J; ++u) {
        const int r = i * step + u - P;
        if (r < 0 || r >= a) continue;
        for (int v = 0; v < J; ++v) {
          const int c = j * step + v - P;
          if (c < 0 || c >= a) continue;
          acc += kernel[static_cast<std::size_t>(u * J + v)] *
                 dummy[static_cast<std::size_t>(r) * static_cast<std::size_t>(a) +
                       static_cast<std::size_t>(c)];
        }
      }
      out[static_cast<std::size_t>(i) * static_cast<std::size_t>(b) +
          static_cast<std::size_t>(j)] = acc;
    }
  }
  return out;
}

// Backprop of an upstream gradient on B onto the kernel.
template <typename T>
Vec<T> filter_backward(const FilterLayerSpec& spec, const Vec<T>& dummy, const Vec<T>& d_out) {
  const int a = spec.input_size, b = spec.output_size, J = spec.kernel;
  const int step = spec.step(), P = spec.padding;
  if (dummy.size() != static_cast<std::size_t>(a) * static_cast<std::size_t>(a))
    throw InputError("dummy image size mismatch");
  if (d_out.size() != static_cast<std::size_t>(b) * static_cast<std::size_t>(b))
    throw InputError("output gradient size mismatch");
  Vec<T> d_kernel(spec.param_count(), T(0));
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      const T g = d_out[static_cast<std::size_t>(i) * static_cast<std::size_t>(b) +
                        static_cast<std::size_t>(j)];
      for (int u = 0; u < J; ++u) {
        const int r = i * step + u - P;
        if (r < 0 || r >= a) continue;
        for (int v = 0; v < J; ++v) {
          const int c = j * step + v - P;
          if (c < 0 || c >= a) continue;
          d_kernel[static_cast<std::size_t>(u * J + v)] +=
              g * dummy[static_cast<std::size_t>(r) * static_cast<std::size_t>(a) +
                        static_cast<std::size_t>(c)];
        }
      }
    }
  }
  return d_kernel;
}

}  // namespace flsim::nn
