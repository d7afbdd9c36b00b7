#pragma once

// Stake-weighted committee selection. The ring [0, 2^256) is split into
// consecutive intervals, one per peer in id order, with lengths
// proportional to stake. A 256-bit hash h lands on the peer whose interval
// contains it, computed exactly as floor(h * total / 2^256) against the
// cumulative stake boundaries.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biscotti/crypto/hash.hpp"
#include "biscotti/crypto/signature.hpp"
#include "biscotti/error.hpp"
#include "biscotti/types.hpp"

namespace biscotti {

using StakeMap = std::map<PeerId, uint64_t>;

inline constexpr uint64_t kStakeIncrement = 5;

class StakeRing {
 public:
  explicit StakeRing(const StakeMap& stake) {
    for (const auto& [peer, s] : stake) {
      if (s == 0) continue;
      if (total_ > UINT64_MAX - s) throw OverflowError("total stake overflows");
      total_ += s;
      bounds_.push_back({total_, peer});
    }
    if (total_ == 0) throw InvalidArgument("total stake must be positive");
  }

  uint64_t total() const { return total_; }
  std::size_t members() const { return bounds_.size(); }

  /// Owner of ring position x in [0, total).
  PeerId owner_at(uint64_t x) const {
    auto it = std::upper_bound(bounds_.begin(), bounds_.end(), x,
                               [](uint64_t v, const std::pair<uint64_t, PeerId>& b) { return v < b.first; });
    return it->second;
  }

  /// Owner of the point given by a big-endian 256-bit hash.
  PeerId owner_of(const crypto::Digest& h) const { return owner_at(scale(h)); }

  /// Interval [lo, hi) of `peer` in units of total stake.
  std::pair<uint64_t, uint64_t> interval(PeerId peer) const {
    uint64_t lo = 0;
    for (const auto& [hi, p] : bounds_) {
      if (p == peer) return {lo, hi};
      lo = hi;
    }
    return {0, 0};
  }

  /// floor(h * total / 2^256): the high limb of the 320-bit product.
  uint64_t scale(const crypto::Digest& h) const {
    uint64_t words[4];
    for (int i = 0; i < 4; ++i) {
      uint64_t w = 0;
      for (int b = 0; b < 8; ++b) w = (w << 8) | h[std::size_t(8 * i + b)];
      words[3 - i] = w;
    }
    unsigned __int128 carry = 0;
    for (int i = 0; i < 4; ++i) {
      unsigned __int128 p = (unsigned __int128)words[i] * total_ + carry;
      carry = p >> 64;
    }
    return uint64_t(carry);
  }

 private:
  std::vector<std::pair<uint64_t, PeerId>> bounds_;
  uint64_t total_ = 0;
};

struct VrfOutput {
  std::vector<PeerId> committee;
  std::vector<uint8_t> proof;
  std::vector<uint8_t> seed;
  friend bool operator==(const VrfOutput&, const VrfOutput&) = default;
};

/// Hash chain h0 = H(seed), h_{i+1} = H(h_i); each h_i picks a ring owner,
/// skipping repeats and `exclude`, until k distinct members are found.
inline std::vector<PeerId> draw_members(const StakeRing& ring, std::span<const uint8_t> seed, std::size_t k,
                                        std::optional<PeerId> exclude = std::nullopt) {
  std::size_t eligible = ring.members();
  if (exclude && ring.interval(*exclude).second > 0) --eligible;
  if (k > eligible) throw InvalidArgument("committee larger than the eligible peer set");
  std::vector<PeerId> out;
  crypto::Digest h = crypto::sha256(seed);
  while (out.size() < k) {
    PeerId p = ring.owner_of(h);
    if ((!exclude || p != *exclude) && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    h = crypto::sha256(h);
  }
  return out;
}

/// Publicly recomputable draw; the proof is empty.
inline VrfOutput draw_committee(const StakeRing& ring, std::span<const uint8_t> seed, std::size_t k) {
  return {draw_members(ring, seed, k), {}, {seed.begin(), seed.end()}};
}

/// Draw keyed by the drawer's signature over the seed; the signature is the
/// proof. The drawer itself is never selected.
inline VrfOutput keyed_draw(const crypto::SigningKey& key, PeerId self, const StakeRing& ring,
                            std::span<const uint8_t> seed, std::size_t k) {
  auto sig = key.sign(seed);
  return {draw_members(ring, sig, k, self), {sig.begin(), sig.end()}, {seed.begin(), seed.end()}};
}

inline crypto::Digest noiser_seed(const crypto::PublicKey& pk, const crypto::Digest& prev_hash, uint64_t t) {
  return crypto::Sha256().update(pk).update(prev_hash).update_u64(t).finish();
}

inline constexpr std::string_view kVerifyRole = "verify";
inline constexpr std::string_view kAggregateRole = "aggregate";

/// Seed for a role committee. `round` distinguishes retries at the same
/// chain tip after a voided iteration.
inline crypto::Digest committee_seed(const crypto::PublicKey& global_pk, const crypto::Digest& prev_hash,
                                     std::string_view role_tag, uint64_t round) {
  return crypto::Sha256().update(global_pk).update(prev_hash).update(role_tag).update_u64(round).finish();
}

/// Checks a publicly recomputable committee draw.
inline bool verify_committee(std::span<const uint8_t> seed, const VrfOutput& out, const StakeMap& stake) {
  try {
    if (!out.proof.empty()) return false;
    if (!std::equal(seed.begin(), seed.end(), out.seed.begin(), out.seed.end())) return false;
    return draw_members(StakeRing(stake), seed, out.committee.size()) == out.committee;
  } catch (const Error&) {
    return false;
  }
}

/// Checks a keyed draw: the proof must be the drawer's signature over the
/// seed and must reproduce the committee under `stake`.
inline bool verify_vrf(const crypto::PublicKey& pubkey, PeerId drawer, std::span<const uint8_t> seed,
                       const VrfOutput& out, const StakeMap& stake) {
  try {
    if (out.proof.size() != 64) return false;
    if (!std::equal(seed.begin(), seed.end(), out.seed.begin(), out.seed.end())) return false;
    crypto::Signature sig;
    std::copy(out.proof.begin(), out.proof.end(), sig.begin());
    if (!crypto::verify_signature(pubkey, seed, sig)) return false;
    return draw_members(StakeRing(stake), out.proof, out.committee.size(), drawer) == out.committee;
  } catch (const Error&) {
    return false;
  }
}

/// Linear rule: +5 to each contributor and each committee member (once per
/// peer even when it holds several roles).
inline StakeMap update_stake(const StakeMap& stake, std::span<const PeerId> contributors,
                             std::span<const PeerId> committee_members, uint64_t increment = kStakeIncrement) {
  StakeMap out = stake;
  std::set<PeerId> rewarded(contributors.begin(), contributors.end());
  rewarded.insert(committee_members.begin(), committee_members.end());
  for (PeerId p : rewarded) {
    auto it = out.find(p);
    if (it == out.end()) throw InvalidArgument("stake update for unknown peer " + std::to_string(p));
    it->second += increment;
  }
  return out;
}

}  // namespace biscotti
