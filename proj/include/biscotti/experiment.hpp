#pragma once

// Experiment description, its JSON form, and the runners for the full
// protocol simulation and the undefended federated baseline.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "biscotti/attacks.hpp"
#include "biscotti/simnet.hpp"

namespace biscotti {

using json = nlohmann::ordered_json;

/// Configuration rejected; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DataSpec {
  ml::DatasetKind kind = ml::DatasetKind::SyntheticBlobs;
  ml::DatasetParams params;
  std::size_t examples_per_peer = 100;
  std::size_t validation_examples = 2000;
};

struct ExperimentSpec {
  std::string name = "defaults";
  /// "biscotti" or "federated"
  std::string system = "biscotti";
  /// "debug" or "bn254"
  std::string backend = "debug";
  uint64_t seed = 1;
  uint64_t iterations = 100;

  double epsilon = 2.0;
  double delta = 1e-5;
  std::size_t nodes = 100;
  std::size_t spare_nodes = 0;
  CommitteeSizes committees;
  double sample_fraction = 0.7;
  std::optional<std::size_t> samples_R;
  std::optional<std::size_t> adversary_f;
  std::optional<std::size_t> updates_u;
  uint64_t initial_stake = 10;
  std::string stake_update_function = "linear+5";

  DataSpec data;
  ml::ModelKind model = ml::ModelKind::LogReg;
  ml::TrainConfig train;
  QuantizeConfig quant;
  AdversaryConfig adversary;
  SimConfig sim;

  std::size_t R() const {
    if (samples_R) return *samples_R;
    return std::size_t(std::llround(sample_fraction * double(nodes)));
  }
  std::size_t f() const { return adversary_f ? *adversary_f : (R() >= 3 ? (R() - 3) / 2 : 0); }
  std::size_t u() const { return updates_u ? *updates_u : R() / 2; }

  void validate() const {
    if (system != "biscotti" && system != "federated") throw ConfigError("system: expected \"biscotti\" or \"federated\"");
    if (backend != "debug" && backend != "bn254") throw ConfigError("backend: expected \"debug\" or \"bn254\"");
    if (stake_update_function != "linear+5") throw ConfigError("stake_update_function: only \"linear+5\" is supported");
    if (nodes < 4) throw ConfigError("number_of_nodes: at least 4 peers required");
    if (iterations < 1) throw ConfigError("iterations: must be >= 1");
    if (!(sample_fraction > 0 && sample_fraction <= 1)) throw ConfigError("sample_fraction: must be in (0, 1]");
    if (committees.verifiers < 1 || committees.aggregators < 2 || committees.noisers < 1)
      throw ConfigError("committee sizes: need >= 1 noiser, >= 1 verifier, >= 2 aggregators");
    if (committees.verifiers + committees.aggregators >= nodes) throw ConfigError("committees larger than the network");
    if (2 * f() + 2 >= R()) throw ConfigError("adversary_upper_bound_f: must satisfy f < (R - 2) / 2");
    if (u() < 1) throw ConfigError("number_of_updates_per_block_u: must be >= 1");
    if (data.examples_per_peer < 1) throw ConfigError("dataset.examples_per_peer: must be >= 1");
    if (data.validation_examples < 1) throw ConfigError("dataset.validation_examples: must be >= 1");
    try {
      NoiseConfig{epsilon, delta}.validate();
      train.validate();
      adversary.validate();
      SimConfig sc = sim;
      sc.online = nodes;
      sc.validate(nodes + spare_nodes);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline const char* kind_name(ml::DatasetKind k) {
  switch (k) {
    case ml::DatasetKind::SyntheticBlobs: return "synthetic-blobs";
    case ml::DatasetKind::SyntheticImages: return "synthetic-images";
    case ml::DatasetKind::IdxImages: return "idx-images";
    case ml::DatasetKind::CsvTabular: return "csv-tabular";
  }
  return "";
}

inline const char* model_name(ml::ModelKind k) {
  switch (k) {
    case ml::ModelKind::LogReg: return "logreg";
    case ml::ModelKind::Softmax: return "softmax";
    case ml::ModelKind::Squared: return "squared";
  }
  return "";
}

inline const char* strategy_name(AdversaryStrategy s) {
  switch (s) {
    case AdversaryStrategy::Honest: return "honest";
    case AdversaryStrategy::LabelFlip: return "label-flip";
    case AdversaryStrategy::ZeroNoiseCollusion: return "zero-noise";
  }
  return "";
}

/// Walks a JSON object, rejecting unknown keys and wrong types with the
/// dotted path of the field.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  ~FieldReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(where(it.key()) + "unknown field");
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) throw ConfigError(where(key) + "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer() || (std::is_unsigned_v<T> && v->get<int64_t>() < 0))
        throw ConfigError(where(key) + (std::is_unsigned_v<T> ? "expected a non-negative integer" : "expected an integer"));
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) throw ConfigError(where(key) + "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v->is_string()) throw ConfigError(where(key) + "expected a string");
    }
    out = v->get<T>();
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!find(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  void get(const std::string& key, std::vector<double>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(where(key) + "expected an array of numbers");
    out.clear();
    for (const auto& x : *v) {
      if (!x.is_number()) throw ConfigError(where(key) + "expected an array of numbers");
      out.push_back(x.get<double>());
    }
  }

  std::string where(const std::string& key) const {
    std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return "field '" + p + "': ";
  }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Reference defaults: 100 nodes, 2 noisers, 3 verifiers, 3 aggregators,
/// R = 70, f = 33, u = 35, uniform stake 10, +5 linear stake updates.
inline ExperimentSpec default_spec() { return ExperimentSpec{}; }

inline void apply_json(const json& j, ExperimentSpec& s) {
  detail::FieldReader r(j, "");
  r.get("name", s.name);
  r.get("system", s.system);
  r.get("backend", s.backend);
  r.get("seed", s.seed);
  r.get("iterations", s.iterations);
  r.get("privacy_budget_epsilon", s.epsilon);
  r.get("delta", s.delta);
  r.get("number_of_nodes", s.nodes);
  r.get("spare_nodes", s.spare_nodes);
  r.get("number_of_noisers", s.committees.noisers);
  r.get("number_of_verifiers", s.committees.verifiers);
  r.get("number_of_aggregators", s.committees.aggregators);
  r.get("number_of_samples_R", s.samples_R);
  r.get("adversary_upper_bound_f", s.adversary_f);
  r.get("number_of_updates_per_block_u", s.updates_u);
  r.get("initial_stake", s.initial_stake);
  r.get("stake_update_function", s.stake_update_function);
  r.get("sample_fraction", s.sample_fraction);
  r.find("sweep");  // consumed by the runner

  if (const json* m = r.find("model")) {
    if (!m->is_string()) throw ConfigError(r.where("model") + "expected a string");
    auto v = m->get<std::string>();
    if (v == "logreg") s.model = ml::ModelKind::LogReg;
    else if (v == "softmax") s.model = ml::ModelKind::Softmax;
    else throw ConfigError(r.where("model") + "expected \"logreg\" or \"softmax\"");
  }
  if (const json* d = r.find("dataset")) {
    detail::FieldReader dr(*d, "dataset");
    if (const json* k = dr.find("kind")) {
      std::string v = k->is_string() ? k->get<std::string>() : "";
      if (v == "synthetic-blobs") s.data.kind = ml::DatasetKind::SyntheticBlobs;
      else if (v == "synthetic-images") s.data.kind = ml::DatasetKind::SyntheticImages;
      else if (v == "idx-images") s.data.kind = ml::DatasetKind::IdxImages;
      else if (v == "csv-tabular") s.data.kind = ml::DatasetKind::CsvTabular;
      else throw ConfigError(dr.where("kind") + "expected synthetic-blobs, synthetic-images, idx-images or csv-tabular");
    }
    auto& p = s.data.params;
    dr.get("examples_per_peer", s.data.examples_per_peer);
    dr.get("validation_examples", s.data.validation_examples);
    dr.get("dim", p.dim);
    dr.get("classes", p.classes);
    dr.get("class_weights", p.class_weights);
    dr.get("separation", p.separation);
    dr.get("noise", p.noise);
    dr.get("bias_feature", p.bias_feature);
    dr.get("image_side", p.image_side);
    dr.get("images_path", p.images_path);
    dr.get("labels_path", p.labels_path);
    dr.get("csv_path", p.csv_path);
    dr.get("limit", p.limit);
  }
  if (const json* t = r.find("train")) {
    detail::FieldReader tr(*t, "train");
    tr.get("eta0", s.train.eta0);
    tr.get("decay", s.train.decay);
    tr.get("lambda", s.train.lambda);
    tr.get("batch_size", s.train.batch_size);
  }
  if (const json* q = r.find("quantize")) {
    detail::FieldReader qr(*q, "quantize");
    qr.get("scale_bits", s.quant.scale_bits);
    qr.get("headroom", s.quant.headroom);
  }
  if (const json* a = r.find("adversary")) {
    detail::FieldReader ar(*a, "adversary");
    if (const json* st = ar.find("strategy")) {
      std::string v = st->is_string() ? st->get<std::string>() : "";
      if (v == "honest") s.adversary.strategy = AdversaryStrategy::Honest;
      else if (v == "label-flip") s.adversary.strategy = AdversaryStrategy::LabelFlip;
      else if (v == "zero-noise") s.adversary.strategy = AdversaryStrategy::ZeroNoiseCollusion;
      else throw ConfigError(ar.where("strategy") + "expected honest, label-flip or zero-noise");
    }
    ar.get("fraction", s.adversary.fraction);
    ar.get("src_label", s.adversary.src_label);
    ar.get("dst_label", s.adversary.dst_label);
  }
  if (const json* n = r.find("network")) {
    detail::FieldReader nr(*n, "network");
    double lo = s.sim.latency_min * 1000, hi = s.sim.latency_max * 1000;
    nr.get("latency_min_ms", lo);
    nr.get("latency_max_ms", hi);
    s.sim.latency_min = lo / 1000;
    s.sim.latency_max = hi / 1000;
    nr.get("churn_per_minute", s.sim.churn_per_minute);
    nr.get("max_sim_time", s.sim.max_sim_time);
    nr.get("sync_fanout", s.sim.protocol.sync_fanout);
    if (const json* t = nr.find("timeouts")) {
      detail::FieldReader tr(*t, "network.timeouts");
      auto& to = s.sim.protocol.timeouts;
      tr.get("submit", to.submit);
      tr.get("deal", to.deal);
      tr.get("round", to.round);
      tr.get("sync_retry", to.sync_retry);
    }
    if (const json* c = nr.find("compute")) {
      detail::FieldReader cr(*c, "network.compute");
      auto& co = s.sim.protocol.costs;
      cr.get("sgd", co.sgd);
      cr.get("noise", co.noise);
      cr.get("krum", co.krum);
      cr.get("deal", co.deal);
      cr.get("aggregate", co.aggregate);
      cr.get("recover", co.recover);
    }
  }
}

inline json to_json(const ExperimentSpec& s) {
  const auto& p = s.data.params;
  const auto& to = s.sim.protocol.timeouts;
  const auto& co = s.sim.protocol.costs;
  return json{
      {"name", s.name},
      {"system", s.system},
      {"backend", s.backend},
      {"seed", s.seed},
      {"iterations", s.iterations},
      {"privacy_budget_epsilon", s.epsilon},
      {"delta", s.delta},
      {"number_of_nodes", s.nodes},
      {"spare_nodes", s.spare_nodes},
      {"number_of_noisers", s.committees.noisers},
      {"number_of_verifiers", s.committees.verifiers},
      {"number_of_aggregators", s.committees.aggregators},
      {"number_of_samples_R", s.R()},
      {"adversary_upper_bound_f", s.f()},
      {"number_of_updates_per_block_u", s.u()},
      {"initial_stake", s.initial_stake},
      {"stake_update_function", s.stake_update_function},
      {"sample_fraction", s.sample_fraction},
      {"model", detail::model_name(s.model)},
      {"dataset",
       {{"kind", detail::kind_name(s.data.kind)},
        {"examples_per_peer", s.data.examples_per_peer},
        {"validation_examples", s.data.validation_examples},
        {"dim", p.dim},
        {"classes", p.classes},
        {"class_weights", p.class_weights},
        {"separation", p.separation},
        {"noise", p.noise},
        {"bias_feature", p.bias_feature},
        {"image_side", p.image_side},
        {"images_path", p.images_path},
        {"labels_path", p.labels_path},
        {"csv_path", p.csv_path},
        {"limit", p.limit}}},
      {"train",
       {{"eta0", s.train.eta0}, {"decay", s.train.decay}, {"lambda", s.train.lambda}, {"batch_size", s.train.batch_size}}},
      {"quantize", {{"scale_bits", s.quant.scale_bits}, {"headroom", s.quant.headroom}}},
      {"adversary",
       {{"strategy", detail::strategy_name(s.adversary.strategy)},
        {"fraction", s.adversary.fraction},
        {"src_label", s.adversary.src_label},
        {"dst_label", s.adversary.dst_label}}},
      {"network",
       {{"latency_min_ms", s.sim.latency_min * 1000},
        {"latency_max_ms", s.sim.latency_max * 1000},
        {"churn_per_minute", s.sim.churn_per_minute},
        {"max_sim_time", s.sim.max_sim_time},
        {"sync_fanout", s.sim.protocol.sync_fanout},
        {"timeouts", {{"submit", to.submit}, {"deal", to.deal}, {"round", to.round}, {"sync_retry", to.sync_retry}}},
        {"compute",
         {{"sgd", co.sgd},
          {"noise", co.noise},
          {"krum", co.krum},
          {"deal", co.deal},
          {"aggregate", co.aggregate},
          {"recover", co.recover}}}}},
  };
}

/// Built-in experiments. "defaults" is the reference 100-peer setup; the others are the
/// desk-scale poisoning, sample-fraction, noise, and churn studies.
inline const std::map<std::string, json>& presets() {
  static const std::map<std::string, json> table = [] {
    std::map<std::string, json> m;
    m["defaults"] = json::object();
    json desk = {
        {"number_of_nodes", 50},
        {"iterations", 50},
        {"dataset",
         {{"kind", "synthetic-blobs"}, {"class_weights", {0.7, 0.3}}, {"separation", 3.0}, {"examples_per_peer", 200}}},
        {"train", {{"batch_size", 200}}},
    };
    json poison = desk;
    poison["adversary"] = {{"strategy", "label-flip"}, {"fraction", 0.3}, {"src_label", 1}, {"dst_label", 0}};
    m["poisoning"] = poison;
    m["poisoning"]["name"] = "poisoning";
    m["poisoning"]["sweep"] = {{"system", {"federated", "biscotti"}}};
    m["sample-fraction"] = poison;
    m["sample-fraction"]["name"] = "sample-fraction";
    m["sample-fraction"]["adversary"]["fraction"] = 0.4;
    m["sample-fraction"]["sweep"] = {{"sample_fraction", {0.5, 0.9}}, {"seed", {1, 2, 3}}};
    m["noise-krum"] = poison;
    m["noise-krum"]["name"] = "noise-krum";
    m["noise-krum"]["sweep"] = {{"privacy_budget_epsilon", {0.5, 2}}, {"seed", {1, 2, 3}}};
    json churn = desk;
    churn["name"] = "churn";
    churn["iterations"] = 100;
    churn["spare_nodes"] = 50;
    churn["sweep"] = {{"churn_per_minute", {0, 1}}};
    m["churn"] = churn;
    for (auto& [name, j] : m)
      if (!j.contains("name")) j["name"] = name;
    return m;
  }();
  return table;
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : presets()) out.push_back(k);
  return out;
}

inline bool is_preset(const std::string& name) { return presets().count(name) > 0; }

inline json preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown experiment '" + name + "'");
  return it->second;
}

/// Parses a JSON document; syntax errors report line and column.
inline json parse_config_text(const std::string& text) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
}

struct ExperimentData {
  ml::ModelShape shape;
  std::vector<ml::Dataset> partitions;
  ml::Dataset validation;
  std::set<PeerId> malicious;
};

/// Generates (or loads) the data, splits off validation, picks the
/// malicious peers among the initially online ones, and builds one
/// partition per registered peer. Label flippers all hold the same set of
/// source-class examples relabelled to the destination class.
inline ExperimentData prepare_data(const ExperimentSpec& s) {
  const std::size_t registered = s.nodes + s.spare_nodes;
  auto params = s.data.params;
  params.examples = s.data.examples_per_peer * registered + s.data.validation_examples;
  auto all = ml::make_dataset(s.data.kind, params, derive_seed(s.seed, {0xda7a}));
  if (all.size() <= s.data.validation_examples) throw ConfigError("dataset too small for the validation split");

  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(s.seed, {0x5b1175}));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::span<const std::size_t> sidx(idx);
  ExperimentData out;
  out.validation = all.subset(sidx.first(s.data.validation_examples));
  auto train = all.subset(sidx.subspan(s.data.validation_examples));
  out.shape = ml::ModelShape::for_dataset(s.model, all);
  if (s.model == ml::ModelKind::LogReg && all.num_classes != 2)
    throw ConfigError("model: logreg needs a binary dataset");

  std::size_t bad = std::size_t(std::llround(s.adversary.fraction * double(s.nodes)));
  if (s.adversary.strategy == AdversaryStrategy::Honest) bad = 0;
  std::vector<PeerId> online(s.nodes);
  for (std::size_t i = 0; i < s.nodes; ++i) online[i] = PeerId(i);
  std::shuffle(online.begin(), online.end(), rng);
  out.malicious.insert(online.begin(), online.begin() + std::ptrdiff_t(bad));

  out.partitions = ml::partition(train, registered, derive_seed(s.seed, {0x9a27}));
  if (s.adversary.strategy == AdversaryStrategy::LabelFlip && bad > 0) {
    std::vector<std::size_t> src;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.labels[i] == s.adversary.src_label) src.push_back(i);
    if (src.empty()) throw ConfigError("adversary.src_label: no training examples carry this label");
    std::vector<std::size_t> pick;
    for (std::size_t k = 0; k < s.data.examples_per_peer; ++k) pick.push_back(src[k % src.size()]);
    auto poisoned = poison_dataset(train.subset(pick), s.adversary.src_label, s.adversary.dst_label);
    for (PeerId p : out.malicious) out.partitions[p] = poisoned;
  }
  return out;
}

struct RunOutcome {
  std::string system;
  std::string backend;
  MetricsLog metrics;
  /// Serialized blocks from height 1 (protocol runs only).
  std::vector<std::vector<uint8_t>> chain;
  uint64_t blocks = 0;
  uint64_t forks = 0;
  uint64_t void_rounds = 0;
  uint64_t churn_events = 0;
  std::size_t audit_entries = 0;
  bool agreement = true;
  /// Fresh replay from genesis re-validated every block (including the
  /// commitment equality) and reproduced the final model and stake.
  bool replay_ok = true;
  double sim_time = 0;

  double final_validation_error() const { return metrics.rows.empty() ? 1.0 : metrics.rows.back().validation_error; }
  double final_attack_rate() const { return metrics.rows.empty() ? 0.0 : metrics.rows.back().attack_rate; }
  double max_attack_rate() const {
    double m = 0;
    for (const auto& r : metrics.rows)
      if (!std::isnan(r.attack_rate)) m = std::max(m, r.attack_rate);
    return m;
  }
  /// Mean attack rate over the last `k` recorded iterations.
  double tail_attack_rate(std::size_t k) const {
    if (metrics.rows.empty()) return 0;
    std::size_t n = std::min(k, metrics.rows.size());
    double s = 0;
    for (std::size_t i = metrics.rows.size() - n; i < metrics.rows.size(); ++i) s += metrics.rows[i].attack_rate;
    return s / double(n);
  }
};

inline GenesisParams genesis_params(const ExperimentSpec& s, const ExperimentData& d) {
  GenesisParams g;
  g.shape = d.shape;
  g.T = s.iterations;
  g.peers = s.nodes + s.spare_nodes;
  g.initial_stake = s.initial_stake;
  // spare peers have not joined yet when the genesis block is cut
  g.staked_peers = s.nodes;
  g.committees = s.committees;
  g.sample_size = s.R();
  g.krum_f = s.f();
  g.updates_per_block = s.u();
  g.train = s.train;
  g.noise = {s.epsilon, s.delta};
  g.quant = s.quant;
  if (s.adversary.strategy == AdversaryStrategy::ZeroNoiseCollusion) {
    g.noise_kinds.assign(g.peers, NoiseKind::Gaussian);
    for (PeerId p : d.malicious) g.noise_kinds[p] = NoiseKind::Zero;
  }
  return g;
}

inline uint64_t genesis_seed(const ExperimentSpec& s) { return derive_seed(s.seed, {0x6e4e515}); }

/// Re-validates `blocks` from a fresh genesis. Returns the failing height,
/// or 0 when every block appends.
template <class B>
uint64_t replay_chain(const GenesisBundle<B>& g, std::span<const Block<B>> blocks, Ledger<B>* out = nullptr,
                      Rejection* reason = nullptr) {
  Ledger<B> l(g.genesis);
  for (const auto& b : blocks) {
    auto v = l.append(b);
    if (!v) {
      if (reason) *reason = v.reason;
      return l.height() + 1;
    }
  }
  if (out) *out = std::move(l);
  return 0;
}

template <class B>
RunOutcome run_protocol(const ExperimentSpec& s, ExperimentData d) {
  auto g = build_genesis<B>(genesis_params(s, d), genesis_seed(s));
  SimConfig sc = s.sim;
  sc.online = s.nodes;
  sc.seed = derive_seed(s.seed, {0x5137});
  Evaluation ev{d.validation, std::nullopt, d.malicious};
  if (s.adversary.strategy == AdversaryStrategy::LabelFlip) ev.target_label = s.adversary.src_label;
  Simulation<B> sim(sc, g, std::move(d.partitions), std::move(ev));
  auto r = sim.run();

  RunOutcome out;
  out.system = "biscotti";
  out.backend = std::string(B::kName);
  out.metrics = std::move(r.metrics);
  out.blocks = r.ledger.height();
  out.forks = r.forks;
  out.void_rounds = r.void_rounds;
  out.churn_events = r.churn_events;
  out.audit_entries = r.audit_entries;
  out.agreement = r.agreement;
  out.sim_time = r.sim_time;
  std::vector<Block<B>> blocks(r.ledger.chain().begin() + 1, r.ledger.chain().end());
  for (const auto& b : blocks) out.chain.push_back(serialize_block(b));
  Ledger<B> replayed;
  out.replay_ok = replay_chain<B>(g, blocks, &replayed) == 0 && replayed.stake() == r.ledger.stake() &&
                  replayed.tip().model == r.ledger.tip().model && replayed.tip_hash() == r.ledger.tip_hash();
  return out;
}

/// Undefended baseline: each iteration sums the clipped updates of u peers
/// drawn uniformly from the online population, with no noise or filtering.
inline RunOutcome run_federated(const ExperimentSpec& s, const ExperimentData& d) {
  RunOutcome out;
  out.system = "federated";
  out.backend = "none";
  Rng rng(derive_seed(s.seed, {0xfed}));
  auto model = ml::ModelParams::zeros(d.shape);
  const std::size_t u = std::min(s.u(), s.nodes);
  for (uint64_t t = 0; t < s.iterations; ++t) {
    std::vector<PeerId> ids(s.nodes);
    for (std::size_t i = 0; i < s.nodes; ++i) ids[i] = PeerId(i);
    for (std::size_t i = 0; i < u; ++i) std::swap(ids[i], ids[i + rng.below(s.nodes - i)]);
    std::vector<double> sum(d.shape.dim(), 0.0);
    for (std::size_t i = 0; i < u; ++i) {
      auto up = ml::compute_local_update(d.shape, model, d.partitions[ids[i]], s.train,
                                         derive_seed(s.seed, {0xfed, t, ids[i]}), ids[i]);
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += up.delta[j];
    }
    model = ml::apply_aggregate(model, sum);
    MetricsRow row;
    row.iteration = model.iteration;
    row.validation_error = ml::validation_error(d.shape, model, d.validation);
    if (s.adversary.strategy == AdversaryStrategy::LabelFlip)
      row.attack_rate = attack_rate(d.shape, model, d.validation, s.adversary.src_label);
    row.honest_stake_fraction = 1.0 - double(d.malicious.size()) / double(s.nodes);
    row.blocks = model.iteration;
    out.metrics.rows.push_back(row);
  }
  out.blocks = s.iterations;
  return out;
}

inline RunOutcome run_experiment(const ExperimentSpec& s) {
  s.validate();
  auto d = prepare_data(s);
  if (s.system == "federated") return run_federated(s, d);
  if (s.backend == "bn254") return run_protocol<crypto::Bn254Backend>(s, std::move(d));
  return run_protocol<crypto::DebugBackend>(s, std::move(d));
}

}  // namespace biscotti
