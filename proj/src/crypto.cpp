#include "ttp/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

#include "ttp/error.hpp"

namespace ttp::crypto {

namespace {

void ensureInit() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

}  // namespace

Digest digest(BytesView bytes) {
  ensureInit();
  Digest out{};
  crypto_hash_sha256(out.data(), bytes.data(), bytes.size());
  return out;
}

Bytes digestBytes(BytesView bytes) {
  const Digest d = digest(bytes);
  return Bytes(d.begin(), d.end());
}

Bytes keyIdOf(BytesView publicKey) {
  const Digest d = digest(publicKey);
  return Bytes(d.begin(), d.begin() + kKeyIdLength);
}

KeyPair generateKeyPair(BytesView seed) {
  if (seed.size() != kSeedLength) {
    throw Error(ErrorCode::BadSeedLength, "seed must be 32 bytes, got " + std::to_string(seed.size()));
  }
  ensureInit();
  KeyPair kp;
  kp.publicKey.resize(crypto_sign_PUBLICKEYBYTES);
  kp.privateKey.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_seed_keypair(kp.publicKey.data(), kp.privateKey.data(), seed.data());
  kp.keyId = keyIdOf(kp.publicKey);
  return kp;
}

Bytes sign(const KeyPair& key, BytesView message) {
  ensureInit();
  if (key.privateKey.size() != crypto_sign_SECRETKEYBYTES) {
    throw Error(ErrorCode::InvariantViolation, "private key has wrong length");
  }
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), key.privateKey.data());
  return sig;
}

bool verify(BytesView publicKey, BytesView message, BytesView signature) {
  ensureInit();
  if (publicKey.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), publicKey.data()) == 0;
}

SignedEnvelope signEnvelope(const KeyPair& key, EnvelopeProfile profile, BytesView payload) {
  if (payload.empty()) throw Error(ErrorCode::InvariantViolation, "envelope payload must be nonempty");
  SignedEnvelope env;
  env.header = EnvelopeHeader{kAlgorithmEdDsa, profile, key.keyId};
  env.payload.assign(payload.begin(), payload.end());
  env.signature = sign(key, env.signingInput());
  return env;
}

bool verifyEnvelope(BytesView publicKey, const SignedEnvelope& env) {
  if (env.header.algorithmId != kAlgorithmEdDsa) return false;
  if (env.payload.empty()) return false;
  try {
    return verify(publicKey, env.signingInput(), env.signature);
  } catch (const Error&) {
    return false;
  }
}

CertificateSigningRequest makeCsr(const KeyPair& subjectKey, BytesView subjectName, CertProfile profile) {
  CertificateSigningRequest csr;
  csr.subjectName.assign(subjectName.begin(), subjectName.end());
  csr.subjectPublicKey = subjectKey.publicKey;
  csr.requestedProfile = profile;
  csr.proofOfPossession = sign(subjectKey, csr.toBeSigned());
  return csr;
}

bool verifyCsr(const CertificateSigningRequest& csr) {
  return verify(csr.subjectPublicKey, csr.toBeSigned(), csr.proofOfPossession);
}

}  // namespace ttp::crypto
