#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flsim/model.hpp"

namespace flsim::data {

using nn::LabeledBatch;

struct Dataset {
  LabeledBatch train;
  LabeledBatch test;
  int num_classes = 0;
  std::string name;
};

// Per-client index lists into the train split. Index sets are disjoint;
// a client may end up empty (the federation layer resamples selection then).
struct Partition {
  std::vector<std::vector<int>> assignment;
  double beta = 0.0;
  bool iid = false;
};

// Class-balanced labeled set held by the server.
struct ReferenceSet {
  LabeledBatch samples;
};

// Reads an IDX image/label file pair (big-endian, magic 0x803 / 0x801).
// Pixels are scaled into [0,1] by dividing by 255.
LabeledBatch load_idx(const std::string& images_path, const std::string& labels_path);

// Synthetic classification set: class templates (distinct pixel patterns)
// plus Gaussian noise, clamped to [0,1]. Linearly separable at low noise;
// `noise` tunes difficulty. test_per_class <= 0 picks max(per_class/5, 10).
Dataset make_blobs(int num_classes, int per_class, int side, std::uint64_t seed,
                   double noise = 0.08, int test_per_class = 0);

// Keeps a uniform random fraction of the train split (test is untouched).
Dataset subsample_train(const Dataset& ds, double fraction, std::uint64_t seed);

// Per class, splits that class's train indices across clients with
// proportions ~ Dirichlet(beta), using largest-remainder rounding.
Partition dirichlet_partition(const Dataset& ds, int num_clients, double beta,
                              std::uint64_t seed);

// Round-robin class-stratified assignment (the i.i.d. condition).
Partition iid_partition(const Dataset& ds, int num_clients, std::uint64_t seed);

// Class-balanced (within +-1) subset of the test split.
ReferenceSet make_reference_set(const Dataset& ds, int size, std::uint64_t seed);

// Gathers a client's shard as a standalone batch.
LabeledBatch gather(const LabeledBatch& from, const std::vector<int>& indices);

// Per-client class histogram (used by partition-inspect and tests).
std::vector<std::vector<int>> class_histograms(const Dataset& ds, const Partition& p);

}  // namespace flsim::data
