#pragma once

// Deterministic discrete-event network hosting a set of peers: seeded
// latency, timers, paired churn, and per-iteration metrics.

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "biscotti/attacks.hpp"
#include "biscotti/protocol.hpp"

namespace biscotti {

struct SimConfig {
  /// Peers online at any time; the remaining registered peers start offline
  /// and are the pool churn draws joiners from.
  std::size_t online = 50;
  double latency_min = 0.010;
  double latency_max = 0.100;
  /// Fail/join pairs per simulated minute.
  double churn_per_minute = 0;
  double max_sim_time = 1e7;
  uint64_t seed = 1;
  ProtocolConfig protocol;

  void validate(std::size_t registered) const {
    if (online == 0 || online > registered) throw InvalidArgument("online peer count must be in [1, registered]");
    if (!(latency_min >= 0 && latency_max >= latency_min)) throw InvalidArgument("bad latency range");
    if (churn_per_minute < 0) throw InvalidArgument("churn rate must be non-negative");
    protocol.timeouts.validate();
  }
};

struct MetricsRow {
  uint64_t iteration = 0;
  double sim_time = 0;
  double validation_error = 0;
  double attack_rate = std::numeric_limits<double>::quiet_NaN();
  double honest_stake_fraction = 1;
  uint64_t blocks = 0;
  uint64_t forks = 0;
  uint64_t dropped_updates = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  static constexpr const char* kHeader =
      "iteration,sim_time,validation_error,attack_rate,honest_stake_fraction,blocks,forks,dropped_updates";

  std::string to_csv() const {
    std::string out = std::string(kHeader) + "\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%llu,%.3f,%.6f,%s,%.6f,%llu,%llu,%llu\n", (unsigned long long)r.iteration,
                    r.sim_time, r.validation_error,
                    std::isnan(r.attack_rate) ? "" : std::to_string(r.attack_rate).c_str(),
                    r.honest_stake_fraction, (unsigned long long)r.blocks, (unsigned long long)r.forks,
                    (unsigned long long)r.dropped_updates);
      out += buf;
    }
    return out;
  }
};

/// What the observer measures on each new block.
struct Evaluation {
  ml::Dataset validation;
  std::optional<int> target_label;
  std::set<PeerId> malicious;
};

template <class B>
struct SimResult {
  MetricsLog metrics;
  Ledger<B> ledger;
  uint64_t forks = 0;
  uint64_t void_rounds = 0;
  uint64_t churn_events = 0;
  uint64_t submissions = 0;
  std::size_t audit_entries = 0;
  double sim_time = 0;
  /// Every online peer's chain is a prefix of the reference chain.
  bool agreement = true;
};

template <class B>
class Simulation {
 public:
  Simulation(SimConfig cfg, const GenesisBundle<B>& genesis, std::vector<ml::Dataset> partitions, Evaluation eval)
      : cfg_(std::move(cfg)), genesis_(genesis.genesis), eval_(std::move(eval)), rng_(derive_seed(cfg_.seed, {0x51e7})) {
    const std::size_t n = genesis.secrets.size();
    if (partitions.size() != n) throw InvalidArgument("one data partition per registered peer required");
    cfg_.validate(n);
    PeerContext<B> ctx{genesis_, cfg_.protocol, std::make_shared<ValidationCache>()};
    for (std::size_t i = 0; i < n; ++i)
      peers_.emplace_back(PeerId(i), genesis.secrets[i], std::move(partitions[i]), ctx,
                          derive_seed(cfg_.seed, {0xbee5, i}));
    epoch_.assign(n, 0);
    seen_height_.assign(n, 0);
    ever_online_.assign(n, false);
  }

  SimResult<B> run() {
    for (std::size_t i = 0; i < cfg_.online; ++i) {
      ever_online_[i] = true;
      dispatch(PeerId(i), peers_[i].boot());
    }
    if (cfg_.churn_per_minute > 0) schedule_churn(60.0 / cfg_.churn_per_minute);

    std::optional<double> stop_at;
    const double grace = cfg_.latency_max + cfg_.protocol.costs.recover + 1.0;
    while (!queue_.empty()) {
      Item it = queue_.top();
      if (stop_at && it.time > *stop_at) break;
      if (it.time > cfg_.max_sim_time) break;
      queue_.pop();
      now_ = it.time;
      if (it.churn) {
        churn_tick();
        schedule_churn(now_ + 60.0 / cfg_.churn_per_minute);
      } else {
        deliver(it);
      }
      if (!stop_at && done()) stop_at = now_ + grace;
    }
    if (!stop_at && now_ < cfg_.max_sim_time && !done()) throw Error("simulation deadlocked\n" + dump_state());
    return finish();
  }

 private:
  struct Item {
    double time = 0;
    uint64_t seq = 0;
    PeerId target = 0;
    uint64_t epoch = 0;
    bool churn = false;
    bool is_timer = false;
    Event event;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };

  void push(Item it) {
    it.seq = seq_++;
    queue_.push(std::move(it));
  }

  double latency() { return rng_.uniform(cfg_.latency_min, cfg_.latency_max); }

  void send(PeerId from, PeerId to, const std::vector<uint8_t>& bytes, double delay) {
    double lat = to == from ? 0.0 : latency();
    Item it;
    it.time = now_ + delay + lat;
    it.target = to;
    it.event = MessageEvent{bytes};
    push(std::move(it));
  }

  void dispatch(PeerId from, StepOutput out) {
    for (auto& m : out.messages) {
      if (m.to == kBroadcast) {
        for (PeerId p = 0; p < peers_.size(); ++p) send(from, p, m.bytes, m.delay);
      } else if (m.to < peers_.size()) {
        send(from, m.to, m.bytes, m.delay);
      }
    }
    for (const auto& t : out.timers) {
      Item it;
      it.time = now_ + t.after;
      it.target = from;
      it.epoch = epoch_[from];
      it.is_timer = true;
      it.event = t.event;
      push(std::move(it));
    }
  }

  void deliver(const Item& it) {
    auto& p = peers_[it.target];
    if (!p.online()) return;
    if (it.is_timer && it.epoch != epoch_[it.target]) return;
    dispatch(it.target, p.handle(it.event));
    observe(it.target);
  }

  void schedule_churn(double at) {
    Item it;
    it.time = at;
    it.churn = true;
    push(std::move(it));
  }

  void churn_tick() {
    std::vector<PeerId> online, fresh, returning;
    for (PeerId i = 0; i < peers_.size(); ++i) {
      if (peers_[i].online())
        online.push_back(i);
      else
        (ever_online_[i] ? returning : fresh).push_back(i);
    }
    if (online.empty() || (fresh.empty() && returning.empty())) return;
    PeerId victim = online[rng_.below(online.size())];
    peers_[victim].go_offline();
    ++epoch_[victim];
    // joiners are peers that never trained before while any remain
    auto& pool = fresh.empty() ? returning : fresh;
    PeerId joiner = pool[rng_.below(pool.size())];
    ever_online_[joiner] = true;
    ++churn_events_;
    dispatch(joiner, peers_[joiner].join());
  }

  void observe(PeerId id) {
    const auto& l = peers_[id].ledger();
    for (uint64_t h = seen_height_[id] + 1; h <= l.height(); ++h) {
      auto& set = hashes_[h];
      set.insert(l.hash_at(h));
      if (h > max_height_) {
        max_height_ = h;
        record(l, h);
      }
    }
    seen_height_[id] = l.height();
  }

  uint64_t fork_count() const {
    uint64_t f = 0;
    for (const auto& [h, s] : hashes_) f += s.size() > 1;
    return f;
  }

  void record(const Ledger<B>& l, uint64_t h) {
    const auto& block = l.chain()[h];
    contributed_ += block.commitments.size();
    MetricsRow row;
    row.iteration = h;
    row.sim_time = now_;
    row.validation_error = ml::validation_error(genesis_->shape, block.model, eval_.validation);
    if (eval_.target_label) row.attack_rate = attack_rate(genesis_->shape, block.model, eval_.validation, *eval_.target_label);
    uint64_t total = 0, honest = 0;
    for (const auto& [p, s] : l.stake()) {
      total += s;
      if (!eval_.malicious.count(p)) honest += s;
    }
    row.honest_stake_fraction = total ? double(honest) / double(total) : 1.0;
    row.blocks = h;
    row.forks = fork_count();
    uint64_t subs = 0;
    for (const auto& p : peers_) subs += p.counters().submissions;
    row.dropped_updates = subs >= contributed_ ? subs - contributed_ : 0;
    log_.rows.push_back(row);
  }

  bool done() const {
    if (max_height_ >= genesis_->T) return true;
    for (const auto& p : peers_)
      if (p.online() && p.round() > genesis_->T && p.stage() != Stage::Syncing &&
          p.stage() != Stage::AwaitingNextBlock)
        return true;
    return false;
  }

  std::string dump_state() const {
    std::ostringstream os;
    os << "t=" << now_ << " max_height=" << max_height_ << "\n";
    for (const auto& p : peers_)
      os << "peer " << p.id() << " stage=" << to_string(p.stage()) << " height=" << p.ledger().height()
         << " round=" << p.round() << "\n";
    return os.str();
  }

  SimResult<B> finish() {
    SimResult<B> r;
    const Peer<B>* best = &peers_[0];
    for (const auto& p : peers_)
      if (p.ledger().height() > best->ledger().height()) best = &p;
    r.ledger = best->ledger();
    for (const auto& p : peers_) {
      r.void_rounds = std::max(r.void_rounds, p.counters().void_rounds);
      r.submissions += p.counters().submissions;
      r.audit_entries += p.audit_log().size();
      if (!p.online()) continue;
      const auto& l = p.ledger();
      for (uint64_t h = 0; h <= l.height(); ++h)
        if (h > r.ledger.height() || l.hash_at(h) != r.ledger.hash_at(h)) r.agreement = false;
    }
    r.metrics = std::move(log_);
    r.forks = fork_count();
    r.churn_events = churn_events_;
    r.sim_time = now_;
    return r;
  }

 public:
  const std::vector<Peer<B>>& peers() const { return peers_; }

 private:
  SimConfig cfg_;
  std::shared_ptr<const Genesis<B>> genesis_;
  Evaluation eval_;
  Rng rng_;
  std::vector<Peer<B>> peers_;
  std::vector<uint64_t> epoch_;
  std::vector<uint64_t> seen_height_;
  std::vector<bool> ever_online_;
  std::priority_queue<Item, std::vector<Item>, Later> queue_;
  uint64_t seq_ = 0;
  double now_ = 0;
  uint64_t max_height_ = 0;
  uint64_t contributed_ = 0;
  uint64_t churn_events_ = 0;
  std::map<uint64_t, std::set<crypto::Digest>> hashes_;
  MetricsLog log_;
};

}  // namespace biscotti
