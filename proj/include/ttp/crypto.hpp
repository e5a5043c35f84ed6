#pragma once

// Keys, digests and detached signatures.
//
// The signature suite is Ed25519 (deterministic by construction, 128-bit
// security level); SHA-256 is the digest. The suite identifier travels in
// every envelope header so a different suite can be slotted in later.

#include <array>
#include <cstdint>

#include "ttp/bytes.hpp"
#include "ttp/messages.hpp"

namespace ttp::crypto {

/// COSE algorithm identifier for EdDSA.
inline constexpr std::int64_t kAlgorithmEdDsa = -8;

inline constexpr std::size_t kSeedLength = 32;
inline constexpr std::size_t kDigestLength = 32;
inline constexpr std::size_t kKeyIdLength = 8;
inline constexpr std::size_t kPublicKeyLength = 32;
inline constexpr std::size_t kSignatureLength = 64;

using Digest = std::array<std::uint8_t, kDigestLength>;

struct KeyPair {
  Bytes privateKey;  // libsodium secret key (seed || public key)
  Bytes publicKey;
  Bytes keyId;       // digest(publicKey)[0..8)

  friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

/// Throws BadSeedLength unless seed is exactly kSeedLength bytes.
KeyPair generateKeyPair(BytesView seed);

Digest digest(BytesView bytes);
Bytes digestBytes(BytesView bytes);

/// keyId for a public key; a pure function of the key.
Bytes keyIdOf(BytesView publicKey);

Bytes sign(const KeyPair& key, BytesView message);
/// False for any malformed key or signature as well as a mismatch.
bool verify(BytesView publicKey, BytesView message, BytesView signature);

/// Throws InvariantViolation for an empty payload.
SignedEnvelope signEnvelope(const KeyPair& key, EnvelopeProfile profile, BytesView payload);
bool verifyEnvelope(BytesView publicKey, const SignedEnvelope& env);

/// Signs a CSR in place (proof of possession by the subject key).
CertificateSigningRequest makeCsr(const KeyPair& subjectKey, BytesView subjectName, CertProfile profile);
bool verifyCsr(const CertificateSigningRequest& csr);

}  // namespace ttp::crypto
