#pragma once

// Ed25519 signatures. Signing is deterministic, so a signature over a public
// seed doubles as a verifiable random value bound to the signer's key.

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <span>

#include "biscotti/crypto/hash.hpp"
#include "biscotti/error.hpp"

namespace biscotti::crypto {

using PublicKey = std::array<uint8_t, 32>;
using Signature = std::array<uint8_t, 64>;

namespace detail {
struct PkeyDeleter {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
using PkeyPtr = std::shared_ptr<EVP_PKEY>;
}  // namespace detail

class SigningKey {
 public:
  SigningKey() = default;

  /// Key derived from a 32-byte seed.
  static SigningKey from_seed(const Digest& seed) {
    EVP_PKEY* k = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size());
    if (!k) throw Error("ed25519 key creation failed");
    SigningKey out;
    out.key_ = detail::PkeyPtr(k, detail::PkeyDeleter{});
    std::size_t len = out.pub_.size();
    EVP_PKEY_get_raw_public_key(k, out.pub_.data(), &len);
    return out;
  }

  const PublicKey& public_key() const { return pub_; }

  Signature sign(std::span<const uint8_t> msg) const {
    if (!key_) throw Error("signing with an empty key");
    Signature sig{};
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::size_t len = sig.size();
    if (EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key_.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &len, msg.data(), msg.size()) != 1)
      throw Error("ed25519 signing failed");
    return sig;
  }

 private:
  detail::PkeyPtr key_;
  PublicKey pub_{};
};

inline bool verify_signature(const PublicKey& pub, std::span<const uint8_t> msg, const Signature& sig) {
  EVP_PKEY* k = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), pub.size());
  if (!k) return false;
  std::unique_ptr<EVP_PKEY, detail::PkeyDeleter> key(k);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, k) != 1) return false;
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

}  // namespace biscotti::crypto
