#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flsim/checkpoint.hpp"
#include "flsim/data.hpp"
#include "flsim/filter.hpp"
#include "flsim/generator.hpp"
#include "flsim/model.hpp"
#include "flsim/rng.hpp"
#include "testutil.hpp"

using namespace flsim;

namespace {

nn::ClassifierSpec small_spec(std::vector<int> hidden = {}) {
  nn::ClassifierSpec s;
  s.rows = 3;
  s.cols = 3;
  s.channels = 1;
  s.hidden = std::move(hidden);
  s.num_classes = 4;
  return s;
}

nn::LabeledBatch random_batch(const nn::ClassifierSpec& spec, int n, Rng& rng) {
  nn::LabeledBatch b;
  b.n = n;
  b.rows = spec.rows;
  b.cols = spec.cols;
  b.channels = spec.channels;
  b.images.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.input_dim()));
  for (auto& v : b.images) v = rng.uniform();
  b.labels.resize(static_cast<std::size_t>(n));
  for (auto& l : b.labels) l = rng.uniform_int(spec.num_classes);
  return b;
}

}  // namespace

TEST_CASE("forward with zero params gives uniform rows") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count(), 0.0);
  Rng rng(3);
  auto batch = random_batch(spec, 2, rng);
  auto probs = nn::forward(params, spec, batch.images);
  for (double p : probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("forward on an empty batch is empty") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count(), 0.5);
  CHECK(nn::forward(params, spec, {}).empty());
}

TEST_CASE("forward rows are probability simplices") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = small_spec({6});
    Rng rng(seed);
    auto params = nn::init_params<double>(spec, rng);
    auto batch = random_batch(spec, 7, rng);
    auto probs = nn::forward(params, spec, batch.images);
    for (int i = 0; i < batch.n; ++i) {
      double sum = 0.0;
      for (int c = 0; c < spec.num_classes; ++c) {
        const double p = probs[static_cast<std::size_t>(i * spec.num_classes + c)];
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("forward rejects mismatched parameter length") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count() + 1, 0.0);
  CHECK_THROWS_AS(nn::forward(params, spec, std::vector<double>(9, 0.0)), InputError);
}

TEST_CASE("loss at zero params is ln(L)") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count(), 0.0);
  nn::LabeledBatch b;
  b.n = 1;
  b.rows = 3;
  b.cols = 3;
  b.images.assign(9, 0.3);
  b.labels = {2};
  auto [loss, grad] = nn::loss_and_grad(params, spec, b);
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(grad.size() == params.size());
}

TEST_CASE("saturated correct prediction has vanishing loss and gradient") {
  nn::ClassifierSpec spec;
  spec.rows = 1;
  spec.cols = 2;
  spec.num_classes = 2;
  // Softmax regression on 2 pixels; huge weights toward class 0.
  nn::ParamVector params(spec.param_count(), 0.0);
  params[0] = 50.0;   // w[pixel0 -> class0]
  params[3] = -50.0;  // w[pixel1 -> class1]
  nn::LabeledBatch b;
  b.n = 1;
  b.rows = 1;
  b.cols = 2;
  b.images = {1.0, 1.0};
  b.labels = {0};
  auto [loss, grad] = nn::loss_and_grad(params, spec, b);
  CHECK(loss < 1e-9);
  double gnorm = 0.0;
  for (double g : grad) gnorm += g * g;
  CHECK(std::sqrt(gnorm) < 1e-9);
}

TEST_CASE("parameter gradient matches finite differences on 20 seeded instances") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const bool deep = seed % 2 == 0;
    auto spec = small_spec(deep ? std::vector<int>{5} : std::vector<int>{});
    Rng rng(seed);
    auto params = nn::init_params<double>(spec, rng);
    auto batch = random_batch(spec, 3, rng);
    auto [loss, grad] = nn::loss_and_grad(params, spec, batch);
    CHECK(loss >= 0.0);
    auto oracle = testutil::fd_grad(
        [&](const std::vector<double>& p) { return nn::loss_and_grad(p, spec, batch).first; },
        params);
    CHECK(testutil::max_rel_error(grad, oracle) < 1e-4);
  }
}

TEST_CASE("float32 parameter gradient stays within the loose tolerance") {
  nn::ClassifierSpec spec = small_spec({5});
  Rng rng(11);
  auto params64 = nn::init_params<double>(spec, rng);
  auto batch64 = random_batch(spec, 3, rng);
  nn::Vec<float> params(params64.begin(), params64.end());
  nn::LabeledBatchT<float> batch;
  batch.n = batch64.n;
  batch.rows = batch64.rows;
  batch.cols = batch64.cols;
  batch.images.assign(batch64.images.begin(), batch64.images.end());
  batch.labels = batch64.labels;
  auto [loss, grad] = nn::loss_and_grad(params, spec, batch);
  CHECK(loss >= 0.0f);
  // Oracle runs in float64 on the same values.
  auto oracle = testutil::fd_grad(
      [&](const std::vector<double>& p) {
        nn::Vec<double> pd(p.begin(), p.end());
        return nn::loss_and_grad(pd, spec, batch64).first;
      },
      params64);
  std::vector<double> grad_d(grad.begin(), grad.end());
  CHECK(testutil::max_rel_error(grad_d, oracle) < 1e-2);
}

TEST_CASE("input gradient: zero params give zero gradient") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count(), 0.0);
  std::vector<double> image(9, 0.4);
  std::vector<double> target(4, 0.25);
  auto g = nn::input_grad(params, spec, image, target);
  for (double v : g) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("input gradient rejects a non-simplex target") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count(), 0.1);
  std::vector<double> image(9, 0.4);
  CHECK_THROWS_AS(nn::input_grad(params, spec, image, std::vector<double>{0.5, 0.5, 0.5, 0.5}),
                  InputError);
  CHECK_THROWS_AS(nn::input_grad(params, spec, image, std::vector<double>{1.5, -0.5, 0.0, 0.0}),
                  InputError);
}

TEST_CASE("input gradient matches finite differences on 20 seeded instances") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto spec = small_spec(seed % 2 == 0 ? std::vector<int>{5} : std::vector<int>{});
    Rng rng(100 + seed);
    auto params = nn::init_params<double>(spec, rng);
    std::vector<double> image(static_cast<std::size_t>(spec.input_dim()));
    for (auto& v : image) v = rng.uniform();
    std::vector<double> target(static_cast<std::size_t>(spec.num_classes),
                               1.0 / spec.num_classes);
    auto grad = nn::input_grad(params, spec, image, target);
    auto ce = [&](const std::vector<double>& img) {
      auto probs = nn::forward(params, spec, img);
      double l = 0.0;
      for (int c = 0; c < spec.num_classes; ++c)
        l -= target[static_cast<std::size_t>(c)] * std::log(probs[static_cast<std::size_t>(c)]);
      return l;
    };
    auto oracle = testutil::fd_grad(ce, image);
    CHECK(testutil::max_rel_error(grad, oracle) < 1e-4);
  }
}

TEST_CASE("input gradient against the current prediction is generally nonzero") {
  auto spec = small_spec();
  Rng rng(42);
  auto params = nn::init_params<double>(spec, rng);
  std::vector<double> image(9);
  for (auto& v : image) v = rng.uniform();
  auto probs = nn::forward(params, spec, image);
  auto grad = nn::input_grad(params, spec, image, probs);
  auto ce = [&](const std::vector<double>& img) {
    auto p = nn::forward(params, spec, img);
    double l = 0.0;
    for (int c = 0; c < spec.num_classes; ++c)
      l -= probs[static_cast<std::size_t>(c)] * std::log(p[static_cast<std::size_t>(c)]);
    return l;
  };
  CHECK(testutil::max_rel_error(grad, testutil::fd_grad(ce, image)) < 1e-4);
  double norm = 0.0;
  for (double g : grad) norm += g * g;
  CHECK(std::sqrt(norm) > 1e-8);  // not a stationary point for this seed
}

TEST_CASE("sgd_step applies the exact elementwise update") {
  nn::ParamVector p{1.0, 1.0};
  nn::ParamVector g{1.0, -1.0};
  auto next = nn::sgd_step(p, g, 0.5);
  CHECK(next[0] == doctest::Approx(0.5));
  CHECK(next[1] == doctest::Approx(1.5));
  CHECK(nn::sgd_step(p, {0.0, 0.0}, 0.7) == p);
  CHECK(nn::sgd_step(p, g, 0.0) == p);
}

TEST_CASE("training a classifier on separable blobs drives the loss down") {
  auto ds = data::make_blobs(2, 40, 4, 7, 0.05);
  nn::ClassifierSpec spec;
  spec.rows = 4;
  spec.cols = 4;
  spec.num_classes = 2;
  Rng rng(5);
  auto params = nn::init_params<double>(spec, rng);
  double loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    auto [l, g] = nn::loss_and_grad(params, spec, ds.train);
    params = nn::sgd_step(params, g, 0.5);
    loss = l;
  }
  CHECK(loss < 0.1);
  CHECK(nn::accuracy(params, spec, ds.test) > 0.9);
}

TEST_CASE("loss_and_grad reports the offending index on non-finite params") {
  auto spec = small_spec();
  nn::ParamVector params(spec.param_count(), 0.0);
  params[7] = std::nan("");
  nn::LabeledBatch b;
  b.n = 1;
  b.rows = 3;
  b.cols = 3;
  b.images.assign(9, 0.1);
  b.labels = {0};
  try {
    nn::loss_and_grad(params, spec, b);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.index == 7);
  }
}

TEST_CASE("filter size relation holds verbatim") {
  // J=3, St=1, P=0, b=4 -> a = 4*2 - 0 + 3 = 11
  auto spec = nn::FilterLayerSpec::for_output(4, 3, 1, 0);
  CHECK(spec.input_size == 11);
  // Violating the relation is a construction-time error.
  nn::FilterLayerSpec bad = spec;
  bad.input_size = 12;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero filter kernel produces an all-zero image") {
  auto spec = nn::FilterLayerSpec::for_output(4, 3, 1, 0);
  std::vector<double> kernel(9, 0.0);
  Rng rng(2);
  std::vector<double> dummy(11 * 11);
  for (auto& v : dummy) v = rng.uniform();
  auto out = nn::filter_forward(spec, kernel, dummy);
  CHECK(out.size() == 16);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("composed filter gradient matches finite differences on 20 instances") {
  nn::ClassifierSpec cls;
  cls.rows = 4;
  cls.cols = 4;
  cls.num_classes = 3;
  auto fspec = nn::FilterLayerSpec::for_output(4, 3, 1, 0);
  const std::vector<double> target(3, 1.0 / 3.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(200 + seed);
    auto params = nn::init_params<double>(cls, rng);
    std::vector<double> kernel(9);
    for (auto& v : kernel) v = rng.normal() * 0.3;
    std::vector<double> dummy(11 * 11);
    for (auto& v : dummy) v = rng.uniform();

    auto composed = [&](const std::vector<double>& k) {
      auto img = nn::filter_forward(fspec, k, dummy);
      auto probs = nn::forward(params, cls, img);
      double l = 0.0;
      for (int c = 0; c < 3; ++c)
        l -= target[static_cast<std::size_t>(c)] * std::log(probs[static_cast<std::size_t>(c)]);
      return l;
    };
    auto img = nn::filter_forward(fspec, kernel, dummy);
    auto d_img = nn::input_grad(params, cls, img, target);
    auto grad = nn::filter_backward(fspec, dummy, d_img);
    CHECK(testutil::max_rel_error(grad, testutil::fd_grad(composed, kernel)) < 1e-4);
  }
}

TEST_CASE("generator with zero params emits mid-range images") {
  nn::GeneratorSpec g;
  g.noise_dim = 4;
  g.hidden = 6;
  g.out_side = 3;
  nn::Vec<double> theta(g.param_count(), 0.0);
  auto noise = nn::gaussian_noise<double>(2, 4, 99);
  auto imgs = nn::generator_forward(g, theta, noise);
  for (double v : imgs) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("same noise seed reproduces bitwise-identical outputs") {
  nn::GeneratorSpec g;
  g.noise_dim = 4;
  g.hidden = 6;
  g.out_side = 3;
  Rng rng(3);
  auto theta = nn::init_generator<double>(g, rng);
  auto z1 = nn::gaussian_noise<double>(5, 4, 1234);
  auto z2 = nn::gaussian_noise<double>(5, 4, 1234);
  CHECK(z1 == z2);
  CHECK(nn::generator_forward(g, theta, z1) == nn::generator_forward(g, theta, z2));
}

TEST_CASE("composed generator gradient matches finite differences on 20 instances") {
  nn::ClassifierSpec cls;
  cls.rows = 3;
  cls.cols = 3;
  cls.num_classes = 3;
  nn::GeneratorSpec g;
  g.noise_dim = 4;
  g.hidden = 5;
  g.out_side = 3;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(300 + seed);
    auto cls_params = nn::init_params<double>(cls, rng);
    auto theta = nn::init_generator<double>(g, rng);
    auto noise = nn::gaussian_noise<double>(3, 4, 500 + seed);
    const int label = 1;

    auto composed = [&](const std::vector<double>& th) {
      auto imgs = nn::generator_forward(g, th, noise);
      return nn::input_grad_label(cls_params, cls, imgs, label).first;
    };
    auto imgs = nn::generator_forward(g, theta, noise);
    auto [ce, d_imgs] = nn::input_grad_label(cls_params, cls, imgs, label);
    CHECK(ce >= 0.0);
    auto grad = nn::generator_backward(g, theta, noise, d_imgs);
    CHECK(testutil::max_rel_error(grad, testutil::fd_grad(composed, theta)) < 1e-4);
  }
}

TEST_CASE("checkpoint round-trips a parameter vector") {
  auto dir = testutil::scratch_dir("ckpt");
  nn::ParamVector params{0.0, -1.5, 3.25, 1e-12, 7e300};
  const std::string path = dir + "/p.ckpt";
  nn::save_params(path, params);
  CHECK(nn::load_params(path) == params);
}

TEST_CASE("checkpoint loader rejects a bad magic") {
  auto dir = testutil::scratch_dir("ckpt-bad");
  const std::string path = dir + "/bad.ckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTMAGIC\x01\x00\x00\x00";
  }
  CHECK_THROWS_AS(nn::load_params(path), ParseError);
}
