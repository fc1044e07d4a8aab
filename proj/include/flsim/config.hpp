#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/federation.hpp"

namespace flsim::cli {

// Sectioned key-value config text as parsed, before validation. Ordering
// and comments are syntax only; they do not survive into the resolved form.
struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
};

RawConfig parse_config_text(const std::string& text, const std::string& origin);
RawConfig parse_config_file(const std::string& path);

// Applies one "section.key=value" override.
void apply_override(RawConfig& raw, const std::string& assignment);

struct DatasetConfig {
  enum class Kind { blobs, idx } kind = Kind::blobs;
  // blobs
  int classes = 10;
  int per_class = 60;
  int test_per_class = 0;  // 0: derived
  int side = 8;
  double noise = 0.08;
  std::uint64_t seed = 7;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  double subsample_fraction = 1.0;
  int rows = 28;  // expected square image side of the IDX files
  // partitioning
  bool iid = false;
  double beta = 0.5;
};

struct RunSpec {
  fed::ExperimentConfig experiment;  // includes model, attack, defense
  DatasetConfig dataset;
};

// Validates sections/keys (unknown keys are errors) and fills defaults.
RunSpec resolve(const RawConfig& raw);

// Canonical "section.key=value" lines for every semantic field, sorted.
std::vector<std::string> canonical_entries(const RunSpec& spec);

// FNV-1a over the canonical entries; stable across comment/order changes.
std::string config_hash(const RunSpec& spec);

// The paired attack-free, defense-free spec (same data, model and seeds).
RunSpec baseline_spec(const RunSpec& spec);

// Materializes the dataset (generation or IDX load + subsample).
data::Dataset build_dataset(const DatasetConfig& cfg);

// Partition seed is derived from both the experiment seed and the data seed.
data::Partition build_partition(const RunSpec& spec, const data::Dataset& ds);

data::ReferenceSet build_reference_set(const RunSpec& spec, const data::Dataset& ds);

extern const char* kToolVersion;

}  // namespace flsim::cli
