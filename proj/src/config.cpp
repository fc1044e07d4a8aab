#include "flsim/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "flsim/errors.hpp"

namespace flsim::cli {

const char* kToolVersion = "0.1.0";

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Tracks which keys a section consumed so leftovers can be reported.
class SectionReader {
 public:
  SectionReader(const RawConfig& raw, std::string name) : name_(std::move(name)) {
    auto it = raw.sections.find(name_);
    if (it != raw.sections.end()) entries_ = &it->second;
  }

  bool has(const std::string& key) const {
    return entries_ != nullptr && entries_->count(key) > 0;
  }
  std::string raw(const std::string& key) {
    used_.insert(key);
    return entries_->at(key);
  }
  long get_int(const std::string& key, long fallback) {
    return has(key) ? parse_int(name_ + "." + key, raw(key)) : fallback;
  }
  double get_double(const std::string& key, double fallback) {
    return has(key) ? parse_double(name_ + "." + key, raw(key)) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) {
    return has(key) ? parse_bool(name_ + "." + key, raw(key)) : fallback;
  }
  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? raw(key) : fallback;
  }

  void finish() const {
    if (!entries_) return;
    for (const auto& [key, value] : *entries_)
      if (!used_.count(key)) throw ConfigError("unknown config key: " + name_ + "." + key);
  }

 private:
  std::string name_;
  const std::map<std::string, std::string>* entries_ = nullptr;
  std::set<std::string> used_;
};

}  // namespace

RawConfig parse_config_text(const std::string& text, const std::string& origin) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno);
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      raw.sections[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    // Strip a trailing comment that is separated by whitespace.
    const auto hash = value.find(" #");
    if (hash != std::string::npos) value = trim(value.substr(0, hash));
    if (key.empty()) throw ConfigError(where + ": empty key");
    raw.sections[section][key] = value;
  }
  return raw;
}

RawConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void apply_override(RawConfig& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
    throw ConfigError("override must look like section.key=value: " + assignment);
  raw.sections[path.substr(0, dot)][path.substr(dot + 1)] = value;
}

RunSpec resolve(const RawConfig& raw) {
  static const std::set<std::string> known = {"experiment", "dataset", "model", "attack",
                                              "defense"};
  for (const auto& [name, entries] : raw.sections)
    if (!known.count(name)) throw ConfigError("unknown config section: [" + name + "]");

  RunSpec spec;

  SectionReader exp(raw, "experiment");
  spec.experiment.num_clients = static_cast<int>(exp.get_int("clients", 100));
  spec.experiment.selected_per_round = static_cast<int>(exp.get_int("selected_per_round", 10));
  spec.experiment.rounds = static_cast<int>(exp.get_int("rounds", 150));
  spec.experiment.attacker_fraction = exp.get_double("attacker_fraction", 0.2);
  spec.experiment.learning_rate = exp.get_double("learning_rate", 0.05);
  spec.experiment.local_epochs = static_cast<int>(exp.get_int("local_epochs", 1));
  spec.experiment.batch_size = static_cast<int>(exp.get_int("batch_size", 10));
  spec.experiment.eval_interval = static_cast<int>(exp.get_int("eval_interval", 1));
  spec.experiment.checkpoint_interval = static_cast<int>(exp.get_int("checkpoint_interval", 0));
  spec.experiment.record_timing = exp.get_bool("record_timing", true);
  spec.experiment.seed = static_cast<std::uint64_t>(exp.get_int("seed", 1));
  exp.finish();

  SectionReader ds(raw, "dataset");
  const std::string kind = ds.get_string("kind", "blobs");
  if (kind == "blobs")
    spec.dataset.kind = DatasetConfig::Kind::blobs;
  else if (kind == "idx")
    spec.dataset.kind = DatasetConfig::Kind::idx;
  else
    throw ConfigError("dataset.kind must be 'blobs' or 'idx', got '" + kind + "'");
  spec.dataset.classes = static_cast<int>(ds.get_int("classes", 10));
  spec.dataset.per_class = static_cast<int>(ds.get_int("per_class", 60));
  spec.dataset.test_per_class = static_cast<int>(ds.get_int("test_per_class", 0));
  spec.dataset.side = static_cast<int>(ds.get_int("side", 8));
  spec.dataset.noise = ds.get_double("noise", 0.08);
  spec.dataset.seed = static_cast<std::uint64_t>(ds.get_int("seed", 7));
  spec.dataset.train_images = ds.get_string("train_images", "");
  spec.dataset.train_labels = ds.get_string("train_labels", "");
  spec.dataset.test_images = ds.get_string("test_images", "");
  spec.dataset.test_labels = ds.get_string("test_labels", "");
  spec.dataset.subsample_fraction = ds.get_double("subsample_fraction", 1.0);
  spec.dataset.rows = static_cast<int>(ds.get_int("rows", 28));
  const std::string part = ds.get_string("partition", "dirichlet");
  if (part == "dirichlet")
    spec.dataset.iid = false;
  else if (part == "iid")
    spec.dataset.iid = true;
  else
    throw ConfigError("dataset.partition must be 'dirichlet' or 'iid', got '" + part + "'");
  spec.dataset.beta = ds.get_double("beta", 0.5);
  ds.finish();
  if (spec.dataset.kind == DatasetConfig::Kind::idx &&
      (spec.dataset.train_images.empty() || spec.dataset.train_labels.empty() ||
       spec.dataset.test_images.empty() || spec.dataset.test_labels.empty()))
    throw ConfigError("dataset.kind=idx needs train_images/train_labels/test_images/test_labels");
  if (!spec.dataset.iid && spec.dataset.beta <= 0.0)
    throw ConfigError("dataset.beta must be positive");

  SectionReader model(raw, "model");
  const std::string hidden = model.get_string("hidden", "32");
  spec.experiment.model.hidden.clear();
  if (!hidden.empty() && hidden != "0") {
    std::istringstream hs(hidden);
    std::string tok;
    while (std::getline(hs, tok, ',')) {
      const long h = parse_int("model.hidden", trim(tok));
      if (h < 0) throw ConfigError("model.hidden entries must be non-negative");
      if (h > 0) spec.experiment.model.hidden.push_back(static_cast<int>(h));
    }
  }
  model.finish();

  SectionReader atk(raw, "attack");
  spec.experiment.attack.kind = attacks::attack_kind_from_string(atk.get_string("kind", "none"));
  spec.experiment.attack.synth_size = static_cast<int>(atk.get_int("synth_size", 50));
  spec.experiment.attack.epochs = static_cast<int>(atk.get_int("epochs", 5));
  spec.experiment.attack.lr = atk.get_double("lr", 0.1);
  spec.experiment.attack.lambda_reg = atk.get_double("lambda_reg", 1.0);
  spec.experiment.attack.static_mode = atk.get_bool("static", false);
  spec.experiment.attack.z_seed = static_cast<std::uint64_t>(atk.get_int("z_seed", 0));
  spec.experiment.attack.noise_dim = static_cast<int>(atk.get_int("noise_dim", 16));
  spec.experiment.attack.gen_hidden = static_cast<int>(atk.get_int("gen_hidden", 64));
  spec.experiment.attack.kernel = static_cast<int>(atk.get_int("kernel", 3));
  spec.experiment.attack.stride = static_cast<int>(atk.get_int("stride", 1));
  spec.experiment.attack.padding = static_cast<int>(atk.get_int("padding", 0));
  spec.experiment.attack.lie_z = atk.get_double("lie_z", 1.5);
  const std::string pert = atk.get_string("minmax_perturbation", "unit");
  if (pert == "unit")
    spec.experiment.attack.minmax_perturbation = attacks::Perturbation::unit;
  else if (pert == "sign")
    spec.experiment.attack.minmax_perturbation = attacks::Perturbation::sign;
  else if (pert == "std")
    spec.experiment.attack.minmax_perturbation = attacks::Perturbation::std_dev;
  else
    throw ConfigError("attack.minmax_perturbation must be unit, sign or std");
  spec.experiment.attack.fang_lambda = atk.get_double("fang_lambda", 0.0);
  atk.finish();

  SectionReader def(raw, "defense");
  spec.experiment.defense.kind =
      defenses::defense_kind_from_string(def.get_string("kind", "fedavg"));
  spec.experiment.defense.assumed_fraction = def.get_double("assumed_fraction", 0.2);
  spec.experiment.defense.f = static_cast<int>(def.get_int("f", -1));
  spec.experiment.defense.m = static_cast<int>(def.get_int("m", -1));
  spec.experiment.defense.k = static_cast<int>(def.get_int("k", -1));
  spec.experiment.defense.x = static_cast<int>(def.get_int("x", 2));
  spec.experiment.defense.alpha = def.get_double("alpha", 1.0);
  spec.experiment.defense.ref_size = static_cast<int>(def.get_int("ref_size", 1000));
  spec.experiment.defense.ref_seed = static_cast<std::uint64_t>(def.get_int("ref_seed", 11));
  def.finish();

  // Model input dims follow the dataset.
  if (spec.dataset.kind == DatasetConfig::Kind::blobs) {
    spec.experiment.model.rows = spec.dataset.side;
    spec.experiment.model.cols = spec.dataset.side;
    spec.experiment.model.channels = 1;
    spec.experiment.model.num_classes = spec.dataset.classes;
  } else {
    // IDX dims are validated against the loaded files at run time.
    spec.experiment.model.rows = spec.dataset.rows;
    spec.experiment.model.cols = spec.dataset.rows;
    spec.experiment.model.channels = 1;
    spec.experiment.model.num_classes = spec.dataset.classes;
  }

  spec.experiment.validate();
  return spec;
}

std::vector<std::string> canonical_entries(const RunSpec& spec) {
  std::vector<std::string> e;
  const auto& x = spec.experiment;
  e.push_back("experiment.clients=" + std::to_string(x.num_clients));
  e.push_back("experiment.selected_per_round=" + std::to_string(x.selected_per_round));
  e.push_back("experiment.rounds=" + std::to_string(x.rounds));
  e.push_back("experiment.attacker_fraction=" + fmt_double(x.attacker_fraction));
  e.push_back("experiment.learning_rate=" + fmt_double(x.learning_rate));
  e.push_back("experiment.local_epochs=" + std::to_string(x.local_epochs));
  e.push_back("experiment.batch_size=" + std::to_string(x.batch_size));
  e.push_back("experiment.eval_interval=" + std::to_string(x.eval_interval));
  e.push_back("experiment.checkpoint_interval=" + std::to_string(x.checkpoint_interval));
  e.push_back("experiment.seed=" + std::to_string(x.seed));

  const auto& d = spec.dataset;
  e.push_back(std::string("dataset.kind=") +
              (d.kind == DatasetConfig::Kind::blobs ? "blobs" : "idx"));
  e.push_back("dataset.classes=" + std::to_string(d.classes));
  e.push_back("dataset.per_class=" + std::to_string(d.per_class));
  e.push_back("dataset.test_per_class=" + std::to_string(d.test_per_class));
  e.push_back("dataset.side=" + std::to_string(d.side));
  e.push_back("dataset.noise=" + fmt_double(d.noise));
  e.push_back("dataset.seed=" + std::to_string(d.seed));
  e.push_back("dataset.train_images=" + d.train_images);
  e.push_back("dataset.train_labels=" + d.train_labels);
  e.push_back("dataset.test_images=" + d.test_images);
  e.push_back("dataset.test_labels=" + d.test_labels);
  e.push_back("dataset.subsample_fraction=" + fmt_double(d.subsample_fraction));
  e.push_back("dataset.rows=" + std::to_string(d.rows));
  e.push_back(std::string("dataset.partition=") + (d.iid ? "iid" : "dirichlet"));
  e.push_back("dataset.beta=" + fmt_double(d.beta));

  std::string hidden;
  for (std::size_t i = 0; i < x.model.hidden.size(); ++i) {
    if (i) hidden += ",";
    hidden += std::to_string(x.model.hidden[i]);
  }
  e.push_back("model.hidden=" + hidden);

  const auto& a = x.attack;
  e.push_back("attack.kind=" + attacks::to_string(a.kind));
  e.push_back("attack.synth_size=" + std::to_string(a.synth_size));
  e.push_back("attack.epochs=" + std::to_string(a.epochs));
  e.push_back("attack.lr=" + fmt_double(a.lr));
  e.push_back("attack.lambda_reg=" + fmt_double(a.lambda_reg));
  e.push_back(std::string("attack.static=") + (a.static_mode ? "true" : "false"));
  e.push_back("attack.z_seed=" + std::to_string(a.z_seed));
  e.push_back("attack.noise_dim=" + std::to_string(a.noise_dim));
  e.push_back("attack.gen_hidden=" + std::to_string(a.gen_hidden));
  e.push_back("attack.kernel=" + std::to_string(a.kernel));
  e.push_back("attack.stride=" + std::to_string(a.stride));
  e.push_back("attack.padding=" + std::to_string(a.padding));
  e.push_back("attack.lie_z=" + fmt_double(a.lie_z));
  e.push_back(std::string("attack.minmax_perturbation=") +
              (a.minmax_perturbation == attacks::Perturbation::unit
                   ? "unit"
                   : (a.minmax_perturbation == attacks::Perturbation::sign ? "sign" : "std")));
  e.push_back("attack.fang_lambda=" + fmt_double(a.fang_lambda));

  const auto& f = x.defense;
  e.push_back("defense.kind=" + defenses::to_string(f.kind));
  e.push_back("defense.assumed_fraction=" + fmt_double(f.assumed_fraction));
  e.push_back("defense.f=" + std::to_string(f.f));
  e.push_back("defense.m=" + std::to_string(f.m));
  e.push_back("defense.k=" + std::to_string(f.k));
  e.push_back("defense.x=" + std::to_string(f.x));
  e.push_back("defense.alpha=" + fmt_double(f.alpha));
  e.push_back("defense.ref_size=" + std::to_string(f.ref_size));
  e.push_back("defense.ref_seed=" + std::to_string(f.ref_seed));

  std::sort(e.begin(), e.end());
  return e;
}

std::string config_hash(const RunSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& entry : canonical_entries(spec)) {
    for (char c : entry) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunSpec baseline_spec(const RunSpec& spec) {
  RunSpec base = spec;
  base.experiment.attack = attacks::AttackConfig{};
  base.experiment.attack.kind = attacks::AttackKind::none;
  base.experiment.attacker_fraction = 0.0;
  base.experiment.defense = defenses::DefenseConfig{};
  base.experiment.defense.kind = defenses::DefenseKind::fedavg;
  return base;
}

data::Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == DatasetConfig::Kind::blobs)
    return data::make_blobs(cfg.classes, cfg.per_class, cfg.side, cfg.seed, cfg.noise,
                            cfg.test_per_class);
  data::Dataset ds;
  ds.name = "idx";
  ds.train = data::load_idx(cfg.train_images, cfg.train_labels);
  ds.test = data::load_idx(cfg.test_images, cfg.test_labels);
  ds.num_classes = cfg.classes;
  if (ds.train.rows != cfg.rows || ds.train.cols != cfg.rows)
    throw ConfigError("IDX images are " + std::to_string(ds.train.rows) + "x" +
                      std::to_string(ds.train.cols) + " but dataset.rows=" +
                      std::to_string(cfg.rows));
  for (int label : ds.train.labels)
    if (label < 0 || label >= cfg.classes)
      throw ConfigError("IDX train label " + std::to_string(label) +
                        " outside [0, dataset.classes)");
  if (cfg.subsample_fraction < 1.0) return data::subsample_train(ds, cfg.subsample_fraction, cfg.seed);
  return ds;
}

data::Partition build_partition(const RunSpec& spec, const data::Dataset& ds) {
  const std::uint64_t seed =
      derive_seed(spec.experiment.seed, "partition", spec.dataset.seed);
  if (spec.dataset.iid) return data::iid_partition(ds, spec.experiment.num_clients, seed);
  return data::dirichlet_partition(ds, spec.experiment.num_clients, spec.dataset.beta, seed);
}

data::ReferenceSet build_reference_set(const RunSpec& spec, const data::Dataset& ds) {
  return data::make_reference_set(ds, spec.experiment.defense.ref_size,
                                  spec.experiment.defense.ref_seed);
}

}  // namespace flsim::cli
