#pragma once

// Per-peer protocol state machine. A peer consumes timer and message events
// and returns the messages and timers it wants scheduled; the transport is
// supplied by the caller (see simnet.hpp).

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "biscotti/ledger.hpp"
#include "biscotti/ml/dataset.hpp"

namespace biscotti {

struct StageTimeouts {
  /// Offsets from the local round start, in simulated seconds.
  double submit = 6.0;
  double deal = 10.0;
  double round = 20.0;
  double sync_retry = 2.0;

  void validate() const {
    if (!(submit > 0 && deal > submit && round > deal && sync_retry > 0))
      throw InvalidArgument("stage timeouts must be positive and ordered submit < deal < round");
  }
};

/// Simulated compute time spent before a message leaves the peer.
struct ComputeCosts {
  double sgd = 1.0;
  double noise = 0.05;
  double krum = 0.2;
  double deal = 0.5;
  double aggregate = 0.2;
  double recover = 0.3;
};

struct ProtocolConfig {
  StageTimeouts timeouts;
  ComputeCosts costs;
  std::size_t sync_fanout = 3;
};

enum class MsgType : uint8_t {
  NoiseRequest = 1,
  NoiseReply,
  Submission,
  Approval,
  Bundle,
  AggregateShares,
  BlockAnnounce,
  SyncRequest,
  SyncReply,
};

inline const char* to_string(MsgType t) {
  switch (t) {
    case MsgType::NoiseRequest: return "noise-request";
    case MsgType::NoiseReply: return "noise-reply";
    case MsgType::Submission: return "submission";
    case MsgType::Approval: return "approval";
    case MsgType::Bundle: return "bundle";
    case MsgType::AggregateShares: return "aggregate-shares";
    case MsgType::BlockAnnounce: return "block";
    case MsgType::SyncRequest: return "sync-request";
    case MsgType::SyncReply: return "sync-reply";
  }
  return "unknown";
}

struct Envelope {
  MsgType type = MsgType::NoiseRequest;
  uint64_t height = 0;
  uint64_t round = 0;
  PeerId sender = 0;
  std::vector<uint8_t> payload;
  crypto::Signature sig{};
};

namespace detail {

inline void write_envelope_body(ByteWriter& w, const Envelope& e) {
  w.str("biscotti-msg");
  w.u8(uint8_t(e.type));
  w.u64(e.height);
  w.u64(e.round);
  w.u32(e.sender);
  w.bytes(e.payload);
}

}  // namespace detail

inline std::vector<uint8_t> seal(MsgType type, uint64_t height, uint64_t round, PeerId sender,
                                 std::vector<uint8_t> payload, const crypto::SigningKey& key) {
  Envelope e{type, height, round, sender, std::move(payload), {}};
  ByteWriter w;
  detail::write_envelope_body(w, e);
  w.raw(key.sign(w.data()));
  return w.take();
}

inline Envelope open_envelope(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  Envelope e;
  if (r.str() != "biscotti-msg") r.fail("bad envelope tag");
  uint8_t t = r.u8();
  if (t < uint8_t(MsgType::NoiseRequest) || t > uint8_t(MsgType::SyncReply)) r.fail("unknown message type");
  e.type = MsgType(t);
  e.height = r.u64();
  e.round = r.u64();
  e.sender = r.u32();
  auto p = r.bytes();
  e.payload.assign(p.begin(), p.end());
  e.sig = r.fixed<64>();
  r.expect_done();
  return e;
}

inline bool verify_envelope(const Envelope& e, const PublicKeys& keys) {
  auto k = keys.find(e.sender);
  if (k == keys.end()) return false;
  ByteWriter w;
  detail::write_envelope_body(w, e);
  return crypto::verify_signature(k->second, w.data(), e.sig);
}

inline void write_vrf(ByteWriter& w, const VrfOutput& v) {
  w.u32(uint32_t(v.committee.size()));
  for (PeerId p : v.committee) w.u32(p);
  w.bytes(v.proof);
  w.bytes(v.seed);
}

inline VrfOutput read_vrf(ByteReader& r) {
  VrfOutput v;
  std::size_t n = r.count(4);
  for (std::size_t i = 0; i < n; ++i) v.committee.push_back(r.u32());
  auto p = r.bytes();
  v.proof.assign(p.begin(), p.end());
  auto s = r.bytes();
  v.seed.assign(s.begin(), s.end());
  return v;
}

template <class B>
struct Submission {
  Commitment<B> commitment;
  QuantizedPoly<typename B::Scalar> masked;
  VrfOutput noisers;
  std::vector<Commitment<B>> noise_commitments;
};

template <class B>
std::vector<uint8_t> encode_submission(const Submission<B>& s) {
  ByteWriter w;
  w.bytes(B::encode_g1(s.commitment.value));
  write_poly(w, s.masked);
  write_vrf(w, s.noisers);
  w.u32(uint32_t(s.noise_commitments.size()));
  for (const auto& c : s.noise_commitments) w.bytes(B::encode_g1(c.value));
  return w.take();
}

template <class B>
Submission<B> decode_submission(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  Submission<B> s;
  s.commitment.value = read_g1<B>(r, r.bytes());
  s.masked = read_poly<B>(r);
  s.noisers = read_vrf(r);
  std::size_t n = r.count(4 + B::kG1Bytes);
  for (std::size_t i = 0; i < n; ++i) s.noise_commitments.push_back({read_g1<B>(r, r.bytes())});
  r.expect_done();
  return s;
}

template <class B>
struct AggregateSharesMsg {
  std::vector<CommitmentEntry<B>> contributors;
  std::vector<AggregateShare<B>> shares;
};

template <class B>
std::vector<uint8_t> encode_aggregate_shares(const AggregateSharesMsg<B>& m) {
  ByteWriter w;
  w.u32(uint32_t(m.contributors.size()));
  for (const auto& e : m.contributors) write_commitment_entry(w, e);
  w.u32(uint32_t(m.shares.size()));
  for (const auto& s : m.shares) {
    w.raw(s.point.to_bytes());
    w.raw(s.summed_eval.to_bytes());
    w.raw(B::encode_g1(s.summed_witness));
    w.u32(uint32_t(s.contributor_count));
  }
  return w.take();
}

template <class B>
AggregateSharesMsg<B> decode_aggregate_shares(std::span<const uint8_t> bytes) {
  using F = typename B::Scalar;
  ByteReader r(bytes);
  AggregateSharesMsg<B> m;
  std::size_t n = r.count(12);
  for (std::size_t i = 0; i < n; ++i) m.contributors.push_back(read_commitment_entry<B>(r));
  std::size_t k = r.count(2 * F::kBytes + B::kG1Bytes + 4);
  for (std::size_t i = 0; i < k; ++i) {
    AggregateShare<B> s;
    s.point = read_scalar<B>(r);
    s.summed_eval = read_scalar<B>(r);
    s.summed_witness = read_g1<B>(r, r.raw(B::kG1Bytes));
    s.contributor_count = r.u32();
    m.shares.push_back(s);
  }
  r.expect_done();
  return m;
}

/// Checks a masked submission: the noiser draw is the submitter's VRF
/// output for this round, each noise commitment is the genesis entry for
/// that noiser at iteration t, and the masked polynomial commits to the
/// product of the update and noise commitments.
template <class B>
bool verify_masked_submission(const Genesis<B>& g, const StakeMap& stake, const crypto::Digest& prev_hash,
                              uint64_t round, uint64_t t, PeerId submitter, const Submission<B>& s) {
  auto key = g.peer_keys.find(submitter);
  if (key == g.peer_keys.end()) return false;
  if (s.noisers.committee.size() != g.committees.noisers) return false;
  if (s.noise_commitments.size() != s.noisers.committee.size()) return false;
  if (s.masked.coeffs.size() != g.shape.dim() + 1 || s.masked.scale_bits != g.quant.scale_bits) return false;
  auto seed = noiser_seed(key->second, prev_hash, round);
  if (!verify_vrf(key->second, submitter, seed, s.noisers, stake)) return false;
  std::vector<Commitment<B>> parts{s.commitment};
  for (std::size_t i = 0; i < s.noisers.committee.size(); ++i) {
    PeerId n = s.noisers.committee[i];
    if (n >= g.noise_table.peers || t >= g.noise_table.iterations) return false;
    if (!(g.noise_table.at(n, t) == s.noise_commitments[i])) return false;
    parts.push_back(s.noise_commitments[i]);
  }
  return commit(*g.pk, s.masked) == combine<B>(parts);
}

enum class TimerKind : uint8_t { SubmitDeadline, DealDeadline, RoundTimeout, SyncRetry };

struct TimerEvent {
  TimerKind kind = TimerKind::RoundTimeout;
  uint64_t height = 0;
  uint64_t round = 0;
};

struct MessageEvent {
  std::vector<uint8_t> bytes;
};

using Event = std::variant<TimerEvent, MessageEvent>;

inline constexpr PeerId kBroadcast = ~PeerId(0);

struct Outbound {
  PeerId to = 0;
  std::vector<uint8_t> bytes;
  /// Simulated compute time before the message leaves.
  double delay = 0;
};

struct TimerRequest {
  double after = 0;
  TimerEvent event;
};

struct StepOutput {
  std::vector<Outbound> messages;
  std::vector<TimerRequest> timers;

  void append(StepOutput&& o) {
    for (auto& m : o.messages) messages.push_back(std::move(m));
    for (auto& t : o.timers) timers.push_back(t);
  }
};

enum class Stage {
  Offline,
  Syncing,
  AwaitingNextBlock,
  Idle,
  Noising,
  AwaitingSignatures,
  Dealing,
  AwaitingBlock,
  Finished,
};

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Offline: return "offline";
    case Stage::Syncing: return "syncing";
    case Stage::AwaitingNextBlock: return "awaiting-next-block";
    case Stage::Idle: return "idle";
    case Stage::Noising: return "noising";
    case Stage::AwaitingSignatures: return "awaiting-signatures";
    case Stage::Dealing: return "dealing";
    case Stage::AwaitingBlock: return "awaiting-block";
    case Stage::Finished: return "finished";
  }
  return "unknown";
}

struct AuditEntry {
  uint64_t height = 0;
  uint64_t round = 0;
  PeerId sender = 0;
  std::string what;
};

struct PeerCounters {
  uint64_t submissions = 0;
  uint64_t void_rounds = 0;
  uint64_t blocks_minted = 0;
  uint64_t syncs = 0;
};

/// Shared, read-only inputs of every peer in one deployment.
template <class B>
struct PeerContext {
  std::shared_ptr<const Genesis<B>> genesis;
  ProtocolConfig cfg;
  std::shared_ptr<ValidationCache> cache;
};

template <class B>
class Peer {
 public:
  using F = typename B::Scalar;

  Peer(PeerId id, PeerSecret secret, ml::Dataset data, PeerContext<B> ctx, uint64_t seed)
      : id_(id),
        secret_(std::move(secret)),
        data_(std::move(data)),
        ctx_(std::move(ctx)),
        seed_(seed),
        ledger_(ctx_.genesis, ctx_.cache) {
    ctx_.cfg.timeouts.validate();
  }

  PeerId id() const { return id_; }
  Stage stage() const { return stage_; }
  bool online() const { return stage_ != Stage::Offline; }
  uint64_t round() const { return round_; }
  const Ledger<B>& ledger() const { return ledger_; }
  const PeerCounters& counters() const { return counters_; }
  const std::vector<AuditEntry>& audit_log() const { return audit_; }
  const ml::Dataset& data() const { return data_; }
  void set_data(ml::Dataset d) { data_ = std::move(d); }

  /// Online from genesis: starts the first round immediately.
  StepOutput boot() {
    stage_ = Stage::Idle;
    return begin_round(ledger_.tip().round + 1);
  }

  /// Comes online after downtime (or for the first time late) and asks
  /// peers for the blocks it missed.
  StepOutput join() {
    stage_ = Stage::Syncing;
    clear_round();
    return request_sync();
  }

  void go_offline() {
    stage_ = Stage::Offline;
    clear_round();
    buffered_.clear();
  }

  StepOutput handle(const Event& ev) {
    if (stage_ == Stage::Offline) return {};
    if (auto* t = std::get_if<TimerEvent>(&ev)) return on_timer(*t);
    return on_message(std::get<MessageEvent>(ev).bytes);
  }

 private:
  const Genesis<B>& g() const { return *ctx_.genesis; }

  void audit(const Envelope& e, std::string what) { audit_.push_back({e.height, e.round, e.sender, std::move(what)}); }

  std::vector<uint8_t> sealed(MsgType t, std::vector<uint8_t> payload) const {
    return seal(t, ledger_.height(), round_, id_, std::move(payload), secret_.key);
  }

  void clear_round() {
    committees_ = {};
    update_.reset();
    noise_replies_.clear();
    approvals_.clear();
    submissions_.clear();
    bundles_.clear();
    agg_sets_.clear();
    verifier_done_ = dealt_ = shared_ = minted_ = false;
  }

  bool is_verifier() const { return contains(committees_.verifiers, id_); }
  bool is_aggregator() const { return contains(committees_.aggregators, id_); }
  static bool contains(const std::vector<PeerId>& v, PeerId p) { return std::find(v.begin(), v.end(), p) != v.end(); }

  crypto::Digest order_key(PeerId p) const {
    return crypto::Sha256().update(ledger_.tip_hash()).update_u64(round_).update_u64(p).finish();
  }

  StepOutput begin_round(uint64_t r) {
    StepOutput out;
    clear_round();
    round_ = r;
    const uint64_t h = ledger_.height();
    if (h >= g().T) {
      stage_ = Stage::Finished;
      return out;
    }
    committees_ = committees_for(g(), ledger_.stake(), ledger_.tip_hash(), r);
    const auto& to = ctx_.cfg.timeouts;
    out.timers.push_back({to.submit, {TimerKind::SubmitDeadline, h, r}});
    out.timers.push_back({to.deal, {TimerKind::DealDeadline, h, r}});
    out.timers.push_back({to.round, {TimerKind::RoundTimeout, h, r}});
    stage_ = Stage::Idle;
    if (!committees_.contains(id_) && !data_.empty()) out.append(start_update());
    // messages that arrived before this peer entered the round
    auto pending = std::move(buffered_);
    buffered_.clear();
    for (auto& m : pending) out.append(on_message(m));
    return out;
  }

  StepOutput start_update() {
    StepOutput out;
    const uint64_t h = ledger_.height();
    Rng rng(derive_seed(seed_, {h, round_, id_}));
    auto delta = ml::compute_local_update(g().shape, ledger_.tip().model, data_, g().train, rng(), id_);
    UpdateState st;
    st.poly = encode<F>(delta.delta, F::random(rng), g().quant);
    st.commitment = commit(*g().pk, st.poly);
    auto seed = noiser_seed(secret_.key.public_key(), ledger_.tip_hash(), round_);
    st.noisers = keyed_draw(secret_.key, id_, StakeRing(ledger_.stake()), seed, g().committees.noisers);
    ByteWriter w;
    write_vrf(w, st.noisers);
    auto payload = w.take();
    for (PeerId n : st.noisers.committee)
      out.messages.push_back({n, sealed(MsgType::NoiseRequest, payload), ctx_.cfg.costs.sgd});
    update_ = std::move(st);
    stage_ = Stage::Noising;
    return out;
  }

  StepOutput request_sync() {
    StepOutput out;
    Rng rng(derive_seed(seed_, {0x5111c, counters_.syncs++}));
    const std::size_t n = g().peer_keys.size();
    std::set<PeerId> picked;
    while (picked.size() < std::min(ctx_.cfg.sync_fanout, n - 1)) {
      PeerId p = PeerId(rng.below(n));
      if (p != id_) picked.insert(p);
    }
    ByteWriter w;
    w.u64(ledger_.height());
    auto payload = w.take();
    for (PeerId p : picked) out.messages.push_back({p, sealed(MsgType::SyncRequest, payload), 0});
    out.timers.push_back({ctx_.cfg.timeouts.sync_retry, {TimerKind::SyncRetry, ledger_.height(), 0}});
    return out;
  }

  StepOutput on_timer(const TimerEvent& t) {
    if (t.kind == TimerKind::SyncRetry) {
      if (stage_ == Stage::Syncing && ledger_.height() == t.height) return request_sync();
      return {};
    }
    if (t.height != ledger_.height() || t.round != round_) return {};
    if (stage_ == Stage::Syncing || stage_ == Stage::AwaitingNextBlock || stage_ == Stage::Finished) return {};
    switch (t.kind) {
      case TimerKind::SubmitDeadline: return run_verification();
      case TimerKind::DealDeadline: return share_aggregate();
      case TimerKind::RoundTimeout:
        ++counters_.void_rounds;
        return begin_round(round_ + 1);
      case TimerKind::SyncRetry: break;
    }
    return {};
  }

  StepOutput on_message(const std::vector<uint8_t>& bytes) {
    Envelope e;
    try {
      e = open_envelope(bytes);
    } catch (const ParseError& err) {
      audit_.push_back({0, 0, 0, std::string("malformed envelope: ") + err.what()});
      return {};
    }
    if (!verify_envelope(e, g().peer_keys)) {
      audit(e, "bad envelope signature");
      return {};
    }
    try {
      switch (e.type) {
        case MsgType::SyncRequest: return on_sync_request(e);
        case MsgType::SyncReply: return on_sync_reply(e);
        case MsgType::BlockAnnounce: return on_block(e);
        default: break;
      }
      if (stage_ == Stage::Syncing || stage_ == Stage::AwaitingNextBlock || stage_ == Stage::Finished) return {};
      const uint64_t h = ledger_.height();
      if (e.height > h) return ask_sender_for_blocks(e);
      if (e.height < h || e.round < round_) return {};
      if (e.round > round_) {
        buffered_.push_back(bytes);
        return {};
      }
      switch (e.type) {
        case MsgType::NoiseRequest: return on_noise_request(e);
        case MsgType::NoiseReply: return on_noise_reply(e);
        case MsgType::Submission: return on_submission(e);
        case MsgType::Approval: return on_approval(e);
        case MsgType::Bundle: return on_bundle(e);
        case MsgType::AggregateShares: return on_aggregate_shares(e);
        default: break;
      }
    } catch (const ParseError& err) {
      audit(e, std::string("malformed ") + to_string(e.type) + ": " + err.what());
    } catch (const Error& err) {
      audit(e, std::string("rejected ") + to_string(e.type) + ": " + err.what());
    }
    return {};
  }

  StepOutput ask_sender_for_blocks(const Envelope& e) {
    StepOutput out;
    if (sync_asked_at_ == ledger_.height() + 1) return out;
    sync_asked_at_ = ledger_.height() + 1;
    ByteWriter w;
    w.u64(ledger_.height());
    out.messages.push_back({e.sender, sealed(MsgType::SyncRequest, w.take()), 0});
    return out;
  }

  // ---- noiser -----------------------------------------------------------

  StepOutput on_noise_request(const Envelope& e) {
    ByteReader r(e.payload);
    VrfOutput draw = read_vrf(r);
    r.expect_done();
    auto key = g().peer_keys.find(e.sender);
    auto seed = noiser_seed(key->second, ledger_.tip_hash(), round_);
    if (!contains(draw.committee, id_) || !verify_vrf(key->second, e.sender, seed, draw, ledger_.stake())) {
      audit(e, "noise request with invalid draw");
      return {};
    }
    const uint64_t t = ledger_.height();
    auto noise = generate_noise<F>(g().noise, g().train, g().shape.dim(), secret_.noise_seed, t, id_,
                                   secret_.noise_kind, g().quant);
    ByteWriter w;
    write_poly(w, noise.quantized);
    StepOutput out;
    out.messages.push_back({e.sender, sealed(MsgType::NoiseReply, w.take()), ctx_.cfg.costs.noise});
    return out;
  }

  // ---- update owner -----------------------------------------------------

  StepOutput on_noise_reply(const Envelope& e) {
    if (!update_ || stage_ != Stage::Noising) return {};
    if (!contains(update_->noisers.committee, e.sender) || noise_replies_.count(e.sender)) return {};
    ByteReader r(e.payload);
    auto noise = read_poly<B>(r);
    r.expect_done();
    if (!(commit(*g().pk, noise) == g().noise_table.at(e.sender, ledger_.height()))) {
      audit(e, "noise does not match its genesis commitment");
      return {};
    }
    noise_replies_[e.sender] = std::move(noise);
    if (noise_replies_.size() < update_->noisers.committee.size()) return {};

    std::vector<QuantizedPoly<F>> noises;
    Submission<B> s;
    s.commitment = update_->commitment;
    s.noisers = update_->noisers;
    for (PeerId n : update_->noisers.committee) {
      noises.push_back(noise_replies_.at(n));
      s.noise_commitments.push_back(g().noise_table.at(n, ledger_.height()));
    }
    s.masked = mask_update(update_->poly, std::span<const QuantizedPoly<F>>(noises), g().quant);
    auto payload = encode_submission(s);
    StepOutput out;
    for (PeerId v : committees_.verifiers) out.messages.push_back({v, sealed(MsgType::Submission, payload), 0});
    ++counters_.submissions;
    stage_ = Stage::AwaitingSignatures;
    return out;
  }

  StepOutput on_approval(const Envelope& e) {
    if (!update_ || stage_ != Stage::AwaitingSignatures) return {};
    if (!contains(committees_.verifiers, e.sender) || approvals_.count(e.sender)) return {};
    ByteReader r(e.payload);
    crypto::Signature sig = r.fixed<64>();
    r.expect_done();
    auto msg = approval_message<B>(ledger_.height(), round_, id_, update_->commitment);
    if (!crypto::verify_signature(g().peer_keys.at(e.sender), msg, sig)) {
      audit(e, "invalid approval signature");
      return {};
    }
    approvals_[e.sender] = sig;
    if (2 * approvals_.size() <= committees_.verifiers.size()) return {};

    auto bundles = deal_shares(update_->poly, *g().pk, g().n_points(), committees_.aggregators, id_,
                               ledger_.height(), round_);
    StepOutput out;
    for (auto& [agg, b] : bundles) {
      b.commitment = update_->commitment;
      for (const auto& [v, s] : approvals_) b.signatures.push_back({v, s});
      ByteWriter w;
      write_bundle(w, b);
      out.messages.push_back({agg, sealed(MsgType::Bundle, w.take()), ctx_.cfg.costs.deal});
    }
    dealt_ = true;
    stage_ = Stage::AwaitingBlock;
    return out;
  }

  // ---- verifier ---------------------------------------------------------

  StepOutput on_submission(const Envelope& e) {
    if (!is_verifier() || verifier_done_) return {};
    if (committees_.contains(e.sender) || submissions_.count(e.sender)) return {};
    auto s = decode_submission<B>(e.payload);
    if (!verify_masked_submission(g(), ledger_.stake(), ledger_.tip_hash(), round_, ledger_.height(), e.sender, s)) {
      audit(e, "masked submission failed verification");
      return {};
    }
    submissions_.emplace(e.sender, std::move(s));
    return {};
  }

  StepOutput run_verification() {
    StepOutput out;
    if (!is_verifier() || verifier_done_) return out;
    verifier_done_ = true;
    std::vector<PeerId> pool;
    for (const auto& [p, s] : submissions_) pool.push_back(p);
    // every verifier samples the same subset when more than R arrived
    if (pool.size() > g().sample_size) {
      std::sort(pool.begin(), pool.end(), [&](PeerId a, PeerId b) { return order_key(a) < order_key(b); });
      pool.resize(g().sample_size);
      std::sort(pool.begin(), pool.end());
    }
    if (pool.size() < 3) return out;
    std::vector<std::vector<double>> updates;
    for (PeerId p : pool) updates.push_back(decode(submissions_.at(p).masked));
    auto accepted = multi_krum_select(updates, g().krum_for(pool.size()));
    for (std::size_t i : accepted) {
      PeerId p = pool[i];
      auto msg = approval_message<B>(ledger_.height(), round_, p, submissions_.at(p).commitment);
      ByteWriter w;
      w.raw(secret_.key.sign(msg));
      out.messages.push_back({p, sealed(MsgType::Approval, w.take()), ctx_.cfg.costs.krum});
    }
    return out;
  }

  // ---- aggregator -------------------------------------------------------

  std::size_t aggregator_index(PeerId a) const {
    auto it = std::find(committees_.aggregators.begin(), committees_.aggregators.end(), a);
    return std::size_t(it - committees_.aggregators.begin());
  }

  bool points_match(PeerId agg, const std::vector<F>& points) const {
    auto expected = assigned_points(aggregator_index(agg), committees_.aggregators.size(), g().n_points());
    if (expected.size() != points.size()) return false;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (!(points[i] == F::from_u64(expected[i]))) return false;
    return true;
  }

  StepOutput on_bundle(const Envelope& e) {
    if (!is_aggregator() || shared_) return {};
    ByteReader r(e.payload);
    auto b = read_bundle<B>(r);
    r.expect_done();
    if (b.dealer != e.sender || b.iteration != ledger_.height() || b.round != round_ || bundles_.count(b.dealer))
      return {};
    if (committees_.contains(b.dealer)) return {};
    std::vector<F> pts;
    for (const auto& w : b.shares) pts.push_back(w.point);
    if (!points_match(id_, pts) || !accept_bundle(b, committees_.verifiers, *g().pk, g().peer_keys)) {
      audit(e, "share bundle rejected");
      return {};
    }
    bundles_.emplace(b.dealer, std::move(b));
    return {};
  }

  StepOutput share_aggregate() {
    StepOutput out;
    if (!is_aggregator() || shared_) return out;
    shared_ = true;
    if (bundles_.empty()) return out;
    std::vector<PeerId> chosen;
    for (const auto& [p, b] : bundles_) chosen.push_back(p);
    std::sort(chosen.begin(), chosen.end(), [&](PeerId a, PeerId b) { return order_key(a) < order_key(b); });
    if (chosen.size() > g().updates_per_block) chosen.resize(g().updates_per_block);
    std::sort(chosen.begin(), chosen.end());
    std::vector<ShareBundle<B>> picked;
    AggregateSharesMsg<B> m;
    for (PeerId p : chosen) {
      const auto& b = bundles_.at(p);
      picked.push_back(b);
      m.contributors.push_back({p, b.commitment, b.signatures});
    }
    m.shares = sum_shares<B>(picked);
    auto payload = encode_aggregate_shares(m);
    for (PeerId a : committees_.aggregators) {
      if (a == id_) continue;
      out.messages.push_back({a, sealed(MsgType::AggregateShares, payload), ctx_.cfg.costs.aggregate});
    }
    agg_sets_[id_] = std::move(m);
    out.append(try_recover());
    return out;
  }

  StepOutput on_aggregate_shares(const Envelope& e) {
    if (!is_aggregator() || minted_) return {};
    if (!contains(committees_.aggregators, e.sender) || e.sender == id_ || agg_sets_.count(e.sender)) return {};
    auto m = decode_aggregate_shares<B>(e.payload);
    if (!valid_aggregate_set(e.sender, m)) {
      audit(e, "aggregate shares failed verification");
      return {};
    }
    agg_sets_[e.sender] = std::move(m);
    return try_recover();
  }

  bool valid_aggregate_set(PeerId from, const AggregateSharesMsg<B>& m) const {
    if (m.contributors.empty() || m.contributors.size() > g().updates_per_block) return false;
    std::vector<Commitment<B>> cs;
    for (std::size_t i = 0; i < m.contributors.size(); ++i) {
      const auto& c = m.contributors[i];
      if (i > 0 && m.contributors[i - 1].peer >= c.peer) return false;
      if (committees_.contains(c.peer)) return false;
      ShareBundle<B> probe{c.peer, ledger_.height(), round_, c.commitment, {}, c.approvals};
      if (2 * count_approvals(probe, committees_.verifiers, g().peer_keys) <= committees_.verifiers.size())
        return false;
      cs.push_back(c.commitment);
    }
    auto combined = combine<B>(cs);
    std::vector<F> pts;
    for (const auto& s : m.shares) {
      if (s.contributor_count != m.contributors.size()) return false;
      if (!verify_share(*g().pk, combined, s.as_witness())) return false;
      pts.push_back(s.point);
    }
    return points_match(from, pts);
  }

  static crypto::Digest contributor_digest(const AggregateSharesMsg<B>& m) {
    ByteWriter w;
    for (const auto& c : m.contributors) {
      w.u32(c.peer);
      w.bytes(B::encode_g1(c.commitment.value));
    }
    return crypto::sha256(w.data());
  }

  StepOutput try_recover() {
    StepOutput out;
    if (minted_) return out;
    std::map<crypto::Digest, std::vector<PeerId>> groups;
    for (const auto& [a, m] : agg_sets_) groups[contributor_digest(m)].push_back(a);
    for (const auto& [digest, members] : groups) {
      if (members.size() < g().recovery_quorum()) continue;
      std::vector<AggregateShare<B>> shares;
      for (PeerId a : members)
        for (const auto& s : agg_sets_.at(a).shares) shares.push_back(s);
      if (shares.size() < g().shape.dim() + 1) continue;
      // the contributor list is identical across the group; use any member's
      const auto& ref = agg_sets_.at(members.front());
      std::vector<Commitment<B>> cs;
      for (const auto& c : ref.contributors) cs.push_back(c.commitment);
      QuantizedPoly<F> agg;
      try {
        agg = recover_aggregate<B>(shares, *g().pk, combine<B>(cs), g().quant.scale_bits);
      } catch (const Error& err) {
        audit_.push_back({ledger_.height(), round_, id_, std::string("recovery failed: ") + err.what()});
        continue;
      }
      auto block = assemble_block(ledger_.tip(), round_, ref.contributors, std::move(agg));
      block.aggregator_sigs.push_back(sign_block_hash(block_hash(block), secret_.key, id_));
      auto payload = serialize_block(block);
      out.messages.push_back({kBroadcast, sealed(MsgType::BlockAnnounce, payload), ctx_.cfg.costs.recover});
      minted_ = true;
      ++counters_.blocks_minted;
      break;
    }
    return out;
  }

  // ---- chain ------------------------------------------------------------

  StepOutput on_block(const Envelope& e) {
    auto block = deserialize_block<B>(e.payload);
    const uint64_t h = ledger_.height();
    if (block.height <= h) return {};
    if (block.height > h + 1) {
      if (stage_ == Stage::Syncing) return {};
      return ask_sender_for_blocks(e);
    }
    auto v = ledger_.append(block);
    if (!v) {
      audit(e, std::string("block rejected: ") + to_string(v.reason));
      return {};
    }
    return after_append();
  }

  StepOutput after_append() {
    buffered_.erase(std::remove_if(buffered_.begin(), buffered_.end(),
                                   [&](const std::vector<uint8_t>& m) {
                                     try {
                                       return open_envelope(m).height < ledger_.height();
                                     } catch (const ParseError&) {
                                       return true;
                                     }
                                   }),
                    buffered_.end());
    return begin_round(ledger_.tip().round + 1);
  }

  StepOutput on_sync_request(const Envelope& e) {
    if (stage_ == Stage::Syncing) return {};
    ByteReader r(e.payload);
    uint64_t from = r.u64();
    r.expect_done();
    if (from >= ledger_.height()) return {};
    ByteWriter w;
    w.u64(from);
    w.u32(uint32_t(ledger_.height() - from));
    for (uint64_t h = from + 1; h <= ledger_.height(); ++h) w.bytes(serialize_block(ledger_.chain()[h]));
    StepOutput out;
    out.messages.push_back({e.sender, sealed(MsgType::SyncReply, w.take()), 0});
    return out;
  }

  StepOutput on_sync_reply(const Envelope& e) {
    ByteReader r(e.payload);
    uint64_t from = r.u64();
    std::size_t n = r.count(4);
    std::vector<Block<B>> remote(ledger_.chain().begin(),
                                 ledger_.chain().begin() + std::ptrdiff_t(std::min<uint64_t>(from, ledger_.height()) + 1));
    for (std::size_t i = 0; i < n; ++i) remote.push_back(deserialize_block<B>(r.bytes()));
    r.expect_done();
    if (from > ledger_.height() || remote.size() <= ledger_.chain().size()) return {};
    auto res = ledger_.catch_up(remote);
    if (!res.adopted) {
      audit(e, std::string("sync rejected at height ") + std::to_string(res.failed_height) + ": " +
                   to_string(res.reason));
      return {};
    }
    if (stage_ == Stage::Syncing) {
      stage_ = Stage::AwaitingNextBlock;
      return {};
    }
    return begin_round(ledger_.tip().round + 1);
  }

  struct UpdateState {
    QuantizedPoly<F> poly;
    Commitment<B> commitment;
    VrfOutput noisers;
  };

  PeerId id_;
  PeerSecret secret_;
  ml::Dataset data_;
  PeerContext<B> ctx_;
  uint64_t seed_;
  Ledger<B> ledger_;
  Stage stage_ = Stage::Offline;
  uint64_t round_ = 0;
  Committees committees_;
  std::optional<UpdateState> update_;
  std::map<PeerId, QuantizedPoly<F>> noise_replies_;
  std::map<PeerId, crypto::Signature> approvals_;
  std::map<PeerId, Submission<B>> submissions_;
  std::map<PeerId, ShareBundle<B>> bundles_;
  std::map<PeerId, AggregateSharesMsg<B>> agg_sets_;
  uint64_t sync_asked_at_ = 0;
  bool verifier_done_ = false, dealt_ = false, shared_ = false, minted_ = false;
  std::vector<std::vector<uint8_t>> buffered_;
  std::vector<AuditEntry> audit_;
  PeerCounters counters_;
};

}  // namespace biscotti
