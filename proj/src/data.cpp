#include "flsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

namespace flsim::data {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::ifstream& in, std::size_t& offset, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw ParseError("truncated IDX header in " + path, offset);
  offset += 4;
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

LabeledBatch load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw InputError("cannot open IDX images file: " + images_path);
  std::size_t off = 0;
  const std::uint32_t magic = read_u32_be(img, off, images_path);
  if (magic != kImagesMagic)
    throw ParseError("bad IDX images magic in " + images_path, off - 4);
  const std::uint32_t count = read_u32_be(img, off, images_path);
  const std::uint32_t rows = read_u32_be(img, off, images_path);
  const std::uint32_t cols = read_u32_be(img, off, images_path);

  LabeledBatch batch;
  batch.n = static_cast<int>(count);
  batch.rows = static_cast<int>(rows);
  batch.cols = static_cast<int>(cols);
  batch.channels = 1;
  const std::size_t pixels = static_cast<std::size_t>(count) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
  if (static_cast<std::size_t>(img.gcount()) != pixels)
    throw ParseError("truncated IDX image payload in " + images_path,
                     off + static_cast<std::size_t>(img.gcount()));
  batch.images.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) batch.images[i] = raw[i] / 255.0;

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw InputError("cannot open IDX labels file: " + labels_path);
  std::size_t loff = 0;
  const std::uint32_t lmagic = read_u32_be(lab, loff, labels_path);
  if (lmagic != kLabelsMagic)
    throw ParseError("bad IDX labels magic in " + labels_path, loff - 4);
  const std::uint32_t lcount = read_u32_be(lab, loff, labels_path);
  if (lcount != count)
    throw ParseError("IDX label count " + std::to_string(lcount) + " != image count " +
                         std::to_string(count) + " in " + labels_path,
                     loff - 4);
  std::vector<unsigned char> lraw(lcount);
  lab.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lcount));
  if (static_cast<std::size_t>(lab.gcount()) != lcount)
    throw ParseError("truncated IDX label payload in " + labels_path,
                     loff + static_cast<std::size_t>(lab.gcount()));
  batch.labels.assign(lraw.begin(), lraw.end());
  return batch;
}

namespace {

// Each class lights up its own random quarter of the pixels; patterns are
// sampled per class from the seed so any (L, side) pair is reproducible.
std::vector<std::vector<double>> class_templates(int num_classes, int dim, std::uint64_t seed) {
  std::vector<std::vector<double>> templates;
  templates.reserve(static_cast<std::size_t>(num_classes));
  const int lit = std::max(1, dim / 4);
  for (int c = 0; c < num_classes; ++c) {
    Rng rng(derive_seed(seed, "blob-template", static_cast<std::uint64_t>(c)));
    std::vector<double> t(static_cast<std::size_t>(dim), 0.2);
    auto on = rng.sample_without_replacement(dim, lit);
    for (int idx : on) t[static_cast<std::size_t>(idx)] = 0.8;
    templates.push_back(std::move(t));
  }
  return templates;
}

LabeledBatch sample_blob_split(const std::vector<std::vector<double>>& templates, int per_class,
                               int side, double noise, std::uint64_t seed) {
  const int L = static_cast<int>(templates.size());
  const int dim = side * side;
  LabeledBatch b;
  b.rows = side;
  b.cols = side;
  b.channels = 1;
  b.n = L * per_class;
  b.images.resize(static_cast<std::size_t>(b.n) * static_cast<std::size_t>(dim));
  b.labels.resize(static_cast<std::size_t>(b.n));
  Rng rng(seed);
  std::size_t p = 0;
  for (int c = 0; c < L; ++c) {
    for (int k = 0; k < per_class; ++k) {
      b.labels[p / static_cast<std::size_t>(dim)] = c;
      for (int d = 0; d < dim; ++d) {
        double v = templates[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] +
                   noise * rng.normal();
        b.images[p++] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return b;
}

}  // namespace

Dataset make_blobs(int num_classes, int per_class, int side, std::uint64_t seed, double noise,
                   int test_per_class) {
  if (num_classes < 2) throw ConfigError("make_blobs needs at least 2 classes");
  if (per_class < 1 || side < 1) throw ConfigError("make_blobs sizes must be positive");
  if (test_per_class <= 0) test_per_class = std::max(per_class / 5, 10);
  auto templates = class_templates(num_classes, side * side, seed);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.name = "blobs";
  ds.train = sample_blob_split(templates, per_class, side, noise, derive_seed(seed, "blob-train"));
  ds.test =
      sample_blob_split(templates, test_per_class, side, noise, derive_seed(seed, "blob-test"));
  return ds;
}

Dataset subsample_train(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("subsample fraction must be in (0,1]");
  if (fraction == 1.0) return ds;
  const int keep = std::max(1, static_cast<int>(std::lround(fraction * ds.train.n)));
  Rng rng(derive_seed(seed, "subsample"));
  auto chosen = rng.sample_without_replacement(ds.train.n, keep);
  std::sort(chosen.begin(), chosen.end());
  Dataset out;
  out.num_classes = ds.num_classes;
  out.name = ds.name;
  out.test = ds.test;
  out.train = gather(ds.train, chosen);
  return out;
}

LabeledBatch gather(const LabeledBatch& from, const std::vector<int>& indices) {
  LabeledBatch out;
  out.rows = from.rows;
  out.cols = from.cols;
  out.channels = from.channels;
  out.n = static_cast<int>(indices.size());
  const std::size_t d = static_cast<std::size_t>(from.dim());
  out.images.resize(static_cast<std::size_t>(out.n) * d);
  out.labels.resize(static_cast<std::size_t>(out.n));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(indices[i]);
    std::copy_n(from.images.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                out.images.begin() + static_cast<std::ptrdiff_t>(i * d));
    out.labels[i] = from.labels[src];
  }
  return out;
}

Partition dirichlet_partition(const Dataset& ds, int num_clients, double beta,
                              std::uint64_t seed) {
  if (beta <= 0.0) throw ConfigError("dirichlet beta must be positive");
  if (num_clients < 1) throw ConfigError("need at least one client");
  Partition part;
  part.beta = beta;
  part.iid = false;
  part.assignment.assign(static_cast<std::size_t>(num_clients), {});

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (int i = 0; i < ds.train.n; ++i)
    by_class[static_cast<std::size_t>(ds.train.labels[static_cast<std::size_t>(i)])].push_back(i);

  for (int c = 0; c < ds.num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, "dirichlet", static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    auto props = rng.dirichlet(beta, num_clients);
    const int total = static_cast<int>(idx.size());

    // Largest-remainder rounding of proportions into integer counts.
    std::vector<int> counts(static_cast<std::size_t>(num_clients));
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int i = 0; i < num_clients; ++i) {
      const double want = props[static_cast<std::size_t>(i)] * total;
      counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(want));
      assigned += counts[static_cast<std::size_t>(i)];
      rema.emplace_back(want - std::floor(want), i);
    }
    std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int r = 0; r < total - assigned; ++r)
      counts[static_cast<std::size_t>(rema[static_cast<std::size_t>(r)].second)]++;

    int pos = 0;
    for (int i = 0; i < num_clients; ++i) {
      auto& dest = part.assignment[static_cast<std::size_t>(i)];
      dest.insert(dest.end(), idx.begin() + pos, idx.begin() + pos + counts[static_cast<std::size_t>(i)]);
      pos += counts[static_cast<std::size_t>(i)];
    }
  }
  for (auto& a : part.assignment) std::sort(a.begin(), a.end());
  return part;
}

Partition iid_partition(const Dataset& ds, int num_clients, std::uint64_t seed) {
  if (num_clients < 1) throw ConfigError("need at least one client");
  Partition part;
  part.beta = 0.0;
  part.iid = true;
  part.assignment.assign(static_cast<std::size_t>(num_clients), {});
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (int i = 0; i < ds.train.n; ++i)
    by_class[static_cast<std::size_t>(ds.train.labels[static_cast<std::size_t>(i)])].push_back(i);
  int next = 0;
  for (int c = 0; c < ds.num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, "iid", static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    for (int i : idx) {
      part.assignment[static_cast<std::size_t>(next)].push_back(i);
      next = (next + 1) % num_clients;
    }
  }
  for (auto& a : part.assignment) std::sort(a.begin(), a.end());
  return part;
}

ReferenceSet make_reference_set(const Dataset& ds, int size, std::uint64_t seed) {
  const int L = ds.num_classes;
  if (size < 1) throw ConfigError("reference set size must be positive");
  if (ds.test.n < size) throw ConfigError("test split smaller than requested reference set");
  const int base = size / L;
  const int extra = size % L;  // first `extra` classes get one more sample

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(L));
  for (int i = 0; i < ds.test.n; ++i)
    by_class[static_cast<std::size_t>(ds.test.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<int> chosen;
  for (int c = 0; c < L; ++c) {
    const int want = base + (c < extra ? 1 : 0);
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(idx.size()) < want)
      throw ConfigError("class " + std::to_string(c) + " has only " +
                        std::to_string(idx.size()) + " test samples, need " +
                        std::to_string(want) + " for the reference set");
    Rng rng(derive_seed(seed, "refset", static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + want);
  }
  std::sort(chosen.begin(), chosen.end());
  ReferenceSet ref;
  ref.samples = gather(ds.test, chosen);
  return ref;
}

std::vector<std::vector<int>> class_histograms(const Dataset& ds, const Partition& p) {
  std::vector<std::vector<int>> hist(p.assignment.size(),
                                     std::vector<int>(static_cast<std::size_t>(ds.num_classes), 0));
  for (std::size_t i = 0; i < p.assignment.size(); ++i)
    for (int idx : p.assignment[i])
      hist[i][static_cast<std::size_t>(ds.train.labels[static_cast<std::size_t>(idx)])]++;
  return hist;
}

}  // namespace flsim::data
