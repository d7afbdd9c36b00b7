#pragma once

// Genesis state, blocks, validation, and the per-peer chain replica.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "biscotti/commit.hpp"
#include "biscotti/crypto/hash.hpp"
#include "biscotti/crypto/signature.hpp"
#include "biscotti/dp_noise.hpp"
#include "biscotti/error.hpp"
#include "biscotti/krum.hpp"
#include "biscotti/ml/model.hpp"
#include "biscotti/quantize.hpp"
#include "biscotti/roles.hpp"
#include "biscotti/serialize.hpp"
#include "biscotti/vss.hpp"

namespace biscotti {

struct CommitteeSizes {
  std::size_t noisers = 2;
  std::size_t verifiers = 3;
  std::size_t aggregators = 3;
};

template <class B>
struct Genesis {
  ml::ModelShape shape;
  ml::ModelParams w0;
  uint64_t T = 100;
  std::shared_ptr<const CommitPK<B>> pk;
  PublicKeys peer_keys;
  crypto::PublicKey global_pk{};
  NoiseTable<B> noise_table;
  StakeMap initial_stake;
  std::string stake_rule = "+5-linear";
  ml::TrainConfig train;
  NoiseConfig noise;
  QuantizeConfig quant;
  CommitteeSizes committees;
  /// R: masked updates each verifier samples per iteration.
  std::size_t sample_size = 70;
  /// f: adversary bound Multi-KRUM assumes for a full sample of R.
  std::size_t krum_f = 33;
  /// u: updates aggregated per block.
  std::size_t updates_per_block = 35;

  /// Multi-KRUM parameters for a pool of `n` verified submissions.
  KrumConfig krum_for(std::size_t n) const {
    if (n == sample_size) return {n, krum_f};
    return KrumConfig::for_sample(n);
  }

  std::size_t n_points() const { return 2 * (shape.dim() + 1); }
  std::size_t recovery_quorum() const { return (committees.aggregators + 1) / 2; }
};

template <class B>
struct CommitmentEntry {
  PeerId peer = 0;
  Commitment<B> commitment;
  std::vector<SignatureEntry> approvals;
  friend bool operator==(const CommitmentEntry&, const CommitmentEntry&) = default;
};

template <class B>
struct Block {
  using F = typename B::Scalar;
  uint64_t height = 0;
  uint64_t round = 0;
  crypto::Digest prev_hash{};
  QuantizedPoly<F> aggregate;
  ml::ModelParams model;
  std::vector<CommitmentEntry<B>> commitments;
  std::vector<SignatureEntry> aggregator_sigs;

  friend bool operator==(const Block&, const Block&) = default;

  std::vector<PeerId> contributors() const {
    std::vector<PeerId> out;
    for (const auto& c : commitments) out.push_back(c.peer);
    return out;
  }
};

template <class B>
void write_commitment_entry(ByteWriter& w, const CommitmentEntry<B>& e) {
  w.u32(e.peer);
  w.bytes(B::encode_g1(e.commitment.value));
  w.u32(uint32_t(e.approvals.size()));
  for (const auto& s : e.approvals) {
    w.u32(s.signer);
    w.raw(s.sig);
  }
}

template <class B>
CommitmentEntry<B> read_commitment_entry(ByteReader& r) {
  CommitmentEntry<B> e;
  e.peer = r.u32();
  auto cb = r.bytes();
  e.commitment.value = read_g1<B>(r, cb);
  std::size_t n = r.count(68);
  for (std::size_t i = 0; i < n; ++i) {
    SignatureEntry s;
    s.signer = r.u32();
    s.sig = r.fixed<64>();
    e.approvals.push_back(s);
  }
  return e;
}

template <class F>
void write_poly(ByteWriter& w, const QuantizedPoly<F>& q) {
  w.u32(uint32_t(q.scale_bits));
  w.u32(uint32_t(q.coeffs.size()));
  for (const auto& c : q.coeffs) w.raw(c.to_bytes());
}

template <class B>
QuantizedPoly<typename B::Scalar> read_poly(ByteReader& r) {
  using F = typename B::Scalar;
  QuantizedPoly<F> q;
  q.scale_bits = int(r.u32());
  std::size_t n = r.count(F::kBytes);
  for (std::size_t i = 0; i < n; ++i) q.coeffs.push_back(read_scalar<B>(r));
  return q;
}

inline void write_model(ByteWriter& w, const ml::ModelParams& m) {
  w.u64(m.iteration);
  w.u32(uint32_t(m.weights.size()));
  for (double x : m.weights) w.f64(x);
}

inline ml::ModelParams read_model(ByteReader& r) {
  ml::ModelParams m;
  m.iteration = r.u64();
  std::size_t n = r.count(8);
  for (std::size_t i = 0; i < n; ++i) m.weights.push_back(r.f64());
  return m;
}

/// Canonical body encoding. Aggregator signatures sign the body hash and
/// therefore sit outside it.
template <class B>
void write_block_body(ByteWriter& w, const Block<B>& b) {
  w.str("biscotti-block");
  w.u64(b.height);
  w.u64(b.round);
  w.raw(b.prev_hash);
  write_poly(w, b.aggregate);
  write_model(w, b.model);
  w.u32(uint32_t(b.commitments.size()));
  for (const auto& e : b.commitments) write_commitment_entry(w, e);
}

template <class B>
std::vector<uint8_t> serialize_block(const Block<B>& b) {
  ByteWriter w;
  write_block_body(w, b);
  w.u32(uint32_t(b.aggregator_sigs.size()));
  for (const auto& s : b.aggregator_sigs) {
    w.u32(s.signer);
    w.raw(s.sig);
  }
  return w.take();
}

template <class B>
Block<B> deserialize_block(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  Block<B> b;
  if (r.str() != "biscotti-block") r.fail("bad block tag");
  b.height = r.u64();
  b.round = r.u64();
  b.prev_hash = r.fixed<32>();
  b.aggregate = read_poly<B>(r);
  b.model = read_model(r);
  std::size_t n = r.count(8);
  for (std::size_t i = 0; i < n; ++i) b.commitments.push_back(read_commitment_entry<B>(r));
  std::size_t ns = r.count(68);
  for (std::size_t i = 0; i < ns; ++i) {
    SignatureEntry s;
    s.signer = r.u32();
    s.sig = r.fixed<64>();
    b.aggregator_sigs.push_back(s);
  }
  r.expect_done();
  return b;
}

template <class B>
crypto::Digest block_hash(const Block<B>& b) {
  ByteWriter w;
  write_block_body(w, b);
  return crypto::sha256(w.data());
}

template <class B>
Block<B> genesis_block(const Genesis<B>& g) {
  Block<B> b;
  b.aggregate = QuantizedPoly<typename B::Scalar>::zero(g.shape.dim(), g.quant.scale_bits);
  b.model = g.w0;
  return b;
}

struct Committees {
  std::vector<PeerId> verifiers;
  std::vector<PeerId> aggregators;

  bool contains(PeerId p) const {
    return std::find(verifiers.begin(), verifiers.end(), p) != verifiers.end() ||
           std::find(aggregators.begin(), aggregators.end(), p) != aggregators.end();
  }
  std::vector<PeerId> members() const {
    std::vector<PeerId> m = verifiers;
    for (PeerId a : aggregators)
      if (std::find(m.begin(), m.end(), a) == m.end()) m.push_back(a);
    return m;
  }
};

template <class B>
Committees committees_for(const Genesis<B>& g, const StakeMap& stake, const crypto::Digest& prev_hash,
                          uint64_t round) {
  StakeRing ring(stake);
  auto vs = committee_seed(g.global_pk, prev_hash, kVerifyRole, round);
  auto as = committee_seed(g.global_pk, prev_hash, kAggregateRole, round);
  return {draw_members(ring, vs, g.committees.verifiers), draw_members(ring, as, g.committees.aggregators)};
}

inline std::vector<uint8_t> block_signing_message(const crypto::Digest& h) {
  ByteWriter w;
  w.str("biscotti-block-sig");
  w.raw(h);
  return w.take();
}

/// Successor of `prev` carrying `entries` and their summed polynomial. The
/// model is advanced from `prev`; signatures are added separately.
template <class B>
Block<B> assemble_block(const Block<B>& prev, uint64_t round, std::vector<CommitmentEntry<B>> entries,
                        QuantizedPoly<typename B::Scalar> aggregate) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.peer < b.peer; });
  Block<B> b;
  b.height = prev.height + 1;
  b.round = round;
  b.prev_hash = block_hash(prev);
  b.model = ml::apply_aggregate(prev.model, decode(aggregate));
  b.aggregate = std::move(aggregate);
  b.commitments = std::move(entries);
  return b;
}

inline SignatureEntry sign_block_hash(const crypto::Digest& h, const crypto::SigningKey& key, PeerId signer) {
  return {signer, key.sign(block_signing_message(h))};
}

enum class Rejection {
  None,
  BadHeight,
  BadPrevHash,
  BadRound,
  BadShape,
  EmptyBlock,
  TooManyUpdates,
  UnorderedContributors,
  UnknownPeer,
  CommitteeContributor,
  MissingApprovals,
  AggregateMismatch,
  ModelMismatch,
  BadAggregatorSignature,
};

inline const char* to_string(Rejection r) {
  switch (r) {
    case Rejection::None: return "ok";
    case Rejection::BadHeight: return "bad-height";
    case Rejection::BadPrevHash: return "bad-prev-hash";
    case Rejection::BadRound: return "bad-round";
    case Rejection::BadShape: return "bad-shape";
    case Rejection::EmptyBlock: return "empty-block";
    case Rejection::TooManyUpdates: return "too-many-updates";
    case Rejection::UnorderedContributors: return "unordered-contributors";
    case Rejection::UnknownPeer: return "unknown-peer";
    case Rejection::CommitteeContributor: return "committee-contributor";
    case Rejection::MissingApprovals: return "missing-approvals";
    case Rejection::AggregateMismatch: return "aggregate-mismatch";
    case Rejection::ModelMismatch: return "model-mismatch";
    case Rejection::BadAggregatorSignature: return "bad-aggregator-signature";
  }
  return "unknown";
}

struct Validation {
  Rejection reason = Rejection::None;
  explicit operator bool() const { return reason == Rejection::None; }
};

/// Checks `candidate` as the successor of `prev` under the stake in force
/// at `prev`.
template <class B>
Validation validate_block(const Genesis<B>& g, const Block<B>& prev, const Block<B>& candidate,
                          const StakeMap& stake) {
  auto fail = [](Rejection r) { return Validation{r}; };
  if (candidate.height != prev.height + 1) return fail(Rejection::BadHeight);
  auto prev_hash = block_hash(prev);
  if (candidate.prev_hash != prev_hash) return fail(Rejection::BadPrevHash);
  if (candidate.height > 1 && candidate.round <= prev.round) return fail(Rejection::BadRound);
  const std::size_t d = g.shape.dim();
  if (candidate.aggregate.coeffs.size() != d + 1 || candidate.aggregate.scale_bits != g.quant.scale_bits ||
      candidate.model.weights.size() != d)
    return fail(Rejection::BadShape);
  if (candidate.commitments.empty()) return fail(Rejection::EmptyBlock);
  if (candidate.commitments.size() > g.updates_per_block) return fail(Rejection::TooManyUpdates);

  Committees cm = committees_for(g, stake, prev_hash, candidate.round);
  for (std::size_t i = 0; i < candidate.commitments.size(); ++i) {
    const auto& e = candidate.commitments[i];
    if (i > 0 && candidate.commitments[i - 1].peer >= e.peer) return fail(Rejection::UnorderedContributors);
    if (!g.peer_keys.count(e.peer)) return fail(Rejection::UnknownPeer);
    if (cm.contains(e.peer)) return fail(Rejection::CommitteeContributor);
    ShareBundle<B> probe{e.peer, candidate.height - 1, candidate.round, e.commitment, {}, e.approvals};
    if (2 * count_approvals(probe, cm.verifiers, g.peer_keys) <= cm.verifiers.size())
      return fail(Rejection::MissingApprovals);
  }

  std::vector<Commitment<B>> cs;
  for (const auto& e : candidate.commitments) cs.push_back(e.commitment);
  if (!(commit(*g.pk, candidate.aggregate) == combine<B>(cs))) return fail(Rejection::AggregateMismatch);

  auto expected = ml::apply_aggregate(prev.model, decode(candidate.aggregate));
  if (candidate.model.iteration != expected.iteration || candidate.model.weights != expected.weights)
    return fail(Rejection::ModelMismatch);

  auto msg = block_signing_message(block_hash(candidate));
  bool signed_ok = false;
  for (const auto& s : candidate.aggregator_sigs) {
    if (std::find(cm.aggregators.begin(), cm.aggregators.end(), s.signer) == cm.aggregators.end()) continue;
    auto k = g.peer_keys.find(s.signer);
    if (k != g.peer_keys.end() && crypto::verify_signature(k->second, msg, s.sig)) signed_ok = true;
  }
  if (!signed_ok) return fail(Rejection::BadAggregatorSignature);
  return {};
}

/// Memo of validation outcomes keyed by (prev hash, full block encoding).
/// Validation is a pure function of those inputs for a fixed genesis, so
/// simulated peers sharing one genesis can share results.
class ValidationCache {
 public:
  std::optional<Rejection> find(const crypto::Digest& key) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  void store(const crypto::Digest& key, Rejection r) {
    std::lock_guard lock(mu_);
    map_[key] = r;
  }

 private:
  struct DigestHash {
    std::size_t operator()(const crypto::Digest& d) const {
      std::size_t h = 0;
      for (int i = 0; i < 8; ++i) h = (h << 8) | d[std::size_t(i)];
      return h;
    }
  };
  mutable std::mutex mu_;
  std::unordered_map<crypto::Digest, Rejection, DigestHash> map_;
};

template <class B>
class Ledger {
 public:
  Ledger() = default;
  explicit Ledger(std::shared_ptr<const Genesis<B>> g, std::shared_ptr<ValidationCache> cache = nullptr)
      : genesis_(std::move(g)), cache_(std::move(cache)) {
    chain_.push_back(genesis_block(*genesis_));
    hashes_.push_back(block_hash(chain_[0]));
    stake_ = genesis_->initial_stake;
  }

  const Genesis<B>& genesis() const { return *genesis_; }
  std::shared_ptr<const Genesis<B>> genesis_ptr() const { return genesis_; }
  const std::vector<Block<B>>& chain() const { return chain_; }
  const Block<B>& tip() const { return chain_.back(); }
  const crypto::Digest& tip_hash() const { return hashes_.back(); }
  const crypto::Digest& hash_at(uint64_t h) const { return hashes_.at(h); }
  uint64_t height() const { return chain_.size() - 1; }
  const StakeMap& stake() const { return stake_; }

  Validation validate(const Block<B>& candidate) const {
    if (!cache_) return validate_block(*genesis_, tip(), candidate, stake_);
    auto key = crypto::Sha256().update(tip_hash()).update(serialize_block(candidate)).finish();
    if (auto r = cache_->find(key)) return {*r};
    auto v = validate_block(*genesis_, tip(), candidate, stake_);
    cache_->store(key, v.reason);
    return v;
  }

  /// Validates and appends; the ledger is unchanged on rejection.
  Validation append(const Block<B>& candidate) {
    auto v = validate(candidate);
    if (!v) return v;
    Committees cm = committees_for(*genesis_, stake_, tip_hash(), candidate.round);
    auto contributors = candidate.contributors();
    auto members = cm.members();
    stake_ = update_stake(stake_, contributors, members);
    chain_.push_back(candidate);
    hashes_.push_back(block_hash(candidate));
    return v;
  }

  struct CatchUp {
    bool adopted = false;
    uint64_t failed_height = 0;
    Rejection reason = Rejection::None;
  };

  /// Adopts `remote` (a full chain starting at genesis) when it extends a
  /// common prefix and every new block validates.
  CatchUp catch_up(std::span<const Block<B>> remote) {
    CatchUp out;
    if (remote.size() <= chain_.size()) return out;
    for (std::size_t h = 0; h < chain_.size(); ++h)
      if (block_hash(remote[h]) != hashes_[h]) {
        out.failed_height = h;
        out.reason = Rejection::BadPrevHash;
        return out;
      }
    Ledger copy = *this;
    for (std::size_t h = chain_.size(); h < remote.size(); ++h) {
      auto v = copy.append(remote[h]);
      if (!v) {
        out.failed_height = h;
        out.reason = v.reason;
        return out;
      }
    }
    *this = std::move(copy);
    out.adopted = true;
    return out;
  }

 private:
  std::shared_ptr<const Genesis<B>> genesis_;
  std::shared_ptr<ValidationCache> cache_;
  std::vector<Block<B>> chain_;
  std::vector<crypto::Digest> hashes_;
  StakeMap stake_;
};

struct PeerSecret {
  crypto::SigningKey key;
  uint64_t noise_seed = 0;
  NoiseKind noise_kind = NoiseKind::Gaussian;
};

struct GenesisParams {
  ml::ModelShape shape;
  uint64_t T = 100;
  std::size_t peers = 100;
  uint64_t initial_stake = 10;
  /// Peers [0, staked_peers) receive the initial stake; the rest start at
  /// zero and earn stake by contributing. 0 means every peer.
  std::size_t staked_peers = 0;
  CommitteeSizes committees;
  std::size_t sample_size = 70;
  std::size_t krum_f = 33;
  std::size_t updates_per_block = 35;
  ml::TrainConfig train;
  NoiseConfig noise;
  QuantizeConfig quant;
  /// Per-peer noise behaviour; empty means every peer is honest.
  std::vector<NoiseKind> noise_kinds;
};

template <class B>
struct GenesisBundle {
  std::shared_ptr<const Genesis<B>> genesis;
  std::vector<PeerSecret> secrets;
};

/// Deterministic genesis: keys, noise seeds, the trusted setup, and the
/// committed noise table all derive from `seed`.
template <class B>
GenesisBundle<B> build_genesis(const GenesisParams& p, uint64_t seed) {
  if (p.peers == 0) throw InvalidArgument("genesis needs at least one peer");
  if (p.staked_peers > p.peers) throw InvalidArgument("more staked peers than peers");
  if (!p.noise_kinds.empty() && p.noise_kinds.size() != p.peers)
    throw InvalidArgument("noise_kinds must list every peer");
  p.train.validate();
  p.noise.validate();
  auto g = std::make_shared<Genesis<B>>();
  g->shape = p.shape;
  g->w0 = ml::ModelParams::zeros(p.shape);
  g->T = p.T;
  g->committees = p.committees;
  g->sample_size = p.sample_size;
  g->krum_f = p.krum_f;
  KrumConfig{p.sample_size, p.krum_f}.validate();
  g->updates_per_block = p.updates_per_block;
  g->train = p.train;
  g->noise = p.noise;
  g->quant = p.quant;

  GenesisBundle<B> out;
  std::vector<uint64_t> noise_seeds;
  std::vector<NoiseKind> kinds;
  for (std::size_t i = 0; i < p.peers; ++i) {
    PeerSecret s;
    s.key = crypto::SigningKey::from_seed(
        crypto::Sha256().update(std::string_view("biscotti-peer-key")).update_u64(seed).update_u64(i).finish());
    s.noise_seed = derive_seed(seed, {0x9015e, i});
    s.noise_kind = p.noise_kinds.empty() ? NoiseKind::Gaussian : p.noise_kinds[i];
    g->peer_keys[PeerId(i)] = s.key.public_key();
    g->initial_stake[PeerId(i)] = (p.staked_peers == 0 || i < p.staked_peers) ? p.initial_stake : 0;
    noise_seeds.push_back(s.noise_seed);
    kinds.push_back(s.noise_kind);
    out.secrets.push_back(std::move(s));
  }
  g->global_pk = crypto::SigningKey::from_seed(
                     crypto::Sha256().update(std::string_view("biscotti-global")).update_u64(seed).finish())
                     .public_key();
  auto pk = std::make_shared<CommitPK<B>>(trusted_setup<B>(p.shape.dim(), derive_seed(seed, {0x5e7}), g->n_points()));
  g->noise_table = build_noise_table<B>(*pk, noise_seeds, kinds, p.T, p.noise, p.train, p.quant);
  g->pk = std::move(pk);
  out.genesis = std::move(g);
  return out;
}

inline constexpr char kChainMagic[8] = {'B', 'S', 'C', 'T', 'C', 'H', 'N', '1'};

/// Append-only chain file: magic, then u32-length-prefixed serialized
/// blocks from height 1 upward (the genesis block is rebuilt from
/// configuration).
inline void write_chain_bytes(const std::string& path, std::span<const std::vector<uint8_t>> blocks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(kChainMagic, 8);
  for (const auto& bytes : blocks) {
    ByteWriter w;
    w.bytes(bytes);
    out.write(reinterpret_cast<const char*>(w.data().data()), std::streamsize(w.data().size()));
  }
}

template <class B>
void write_chain_file(const std::string& path, std::span<const Block<B>> chain) {
  std::vector<std::vector<uint8_t>> blocks;
  for (std::size_t h = 1; h < chain.size(); ++h) blocks.push_back(serialize_block(chain[h]));
  write_chain_bytes(path, blocks);
}

template <class B>
std::vector<Block<B>> read_chain_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 8 || !std::equal(kChainMagic, kChainMagic + 8, bytes.begin()))
    throw ParseError("bad chain file magic", 0);
  ByteReader r(std::span<const uint8_t>(bytes).subspan(8));
  std::vector<Block<B>> out;
  while (!r.done()) {
    std::size_t off = 8 + r.offset();
    auto blob = r.bytes();
    try {
      out.push_back(deserialize_block<B>(blob));
    } catch (const ParseError& e) {
      throw ParseError("malformed block at height " + std::to_string(out.size() + 1), off + 4 + e.offset());
    }
  }
  return out;
}

}  // namespace biscotti
