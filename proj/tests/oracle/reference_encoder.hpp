#pragma once

// Reference encoder for golden vectors. Builds every message with
// nlohmann::json's CBOR writer (and raw libsodium for signatures) from plain
// field values, sharing no code with the library's codec.

#include <sodium.h>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace oracle {

using json = nlohmann::json;
using bytes = std::vector<std::uint8_t>;

inline json bstr(std::string_view s) { return json::binary(bytes(s.begin(), s.end())); }
inline json bstr(const bytes& b) { return json::binary(b); }

inline bytes cbor(const json& j) { return json::to_cbor(j); }

struct CertFields {
  std::uint64_t serial;
  std::string subject;
  bytes publicKey;
  std::string issuer;
  std::uint64_t notBefore;
  std::uint64_t notAfter;
  std::uint64_t profile;
  bytes signature;
};

inline json certTbs(const CertFields& c) {
  return json::array({c.serial, bstr(c.subject), bstr(c.publicKey), bstr(c.issuer), c.notBefore, c.notAfter,
                      c.profile});
}

inline json cert(const CertFields& c) {
  json j = certTbs(c);
  j.push_back(bstr(c.signature));
  return j;
}

inline json versionInfo(std::uint64_t seq, std::string_view uri) { return json::array({seq, bstr(uri)}); }

inline json deviceUpdateInfo(const CertFields& c, std::uint64_t nb, std::uint64_t na, std::uint64_t seq,
                             std::string_view manifestUri) {
  return json::array({cert(c), nb, na, versionInfo(seq, manifestUri)});
}

inline json transferMessage(std::uint64_t resetNotBefore, std::uint64_t resetNotAfter,
                            const std::optional<std::string>& raUri, std::string_view updateUri, bool contactFirst,
                            std::string_view enrollUri, std::string_view fallbackUri) {
  return json::array({resetNotBefore, resetNotAfter, raUri ? bstr(*raUri) : json(nullptr),
                      json::array({bstr(updateUri), contactFirst}), bstr(enrollUri), bstr(fallbackUri)});
}

/// {1: alg, 3: profile, 4: kid}; nlohmann maps only take text keys, so the
/// integer-keyed header is written out by hand.
inline bytes envelopeHeader(std::int64_t alg, std::uint8_t profile, const bytes& kid) {
  bytes out{0xa3, 0x01};
  if (alg >= 0) {
    out.push_back(static_cast<std::uint8_t>(alg));
  } else {
    out.push_back(static_cast<std::uint8_t>(0x20 | (-1 - alg)));
  }
  out.push_back(0x03);
  out.push_back(profile);
  out.push_back(0x04);
  out.push_back(static_cast<std::uint8_t>(0x40 | kid.size()));
  out.insert(out.end(), kid.begin(), kid.end());
  return out;
}

struct Ed25519 {
  bytes publicKey = bytes(crypto_sign_PUBLICKEYBYTES);
  bytes secretKey = bytes(crypto_sign_SECRETKEYBYTES);

  explicit Ed25519(const bytes& seed) {
    if (sodium_init() < 0) throw std::runtime_error("sodium_init");
    crypto_sign_seed_keypair(publicKey.data(), secretKey.data(), seed.data());
  }

  bytes sign(const bytes& msg) const {
    bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), secretKey.data());
    return sig;
  }

  bytes keyId() const {
    bytes d(crypto_hash_sha256_BYTES);
    crypto_hash_sha256(d.data(), publicKey.data(), publicKey.size());
    d.resize(8);
    return d;
  }
};

inline bytes signedEnvelope(const Ed25519& key, std::uint8_t profile, const bytes& payload) {
  const bytes header = envelopeHeader(-8, profile, key.keyId());
  bytes input = header;
  input.insert(input.end(), payload.begin(), payload.end());
  return cbor(json::array({bstr(header), bstr(payload), bstr(key.sign(input))}));
}

inline std::string hex(const bytes& b) {
  static constexpr char d[] = "0123456789abcdef";
  std::string s;
  for (auto v : b) {
    s.push_back(d[v >> 4]);
    s.push_back(d[v & 15]);
  }
  return s;
}

// Fixed inputs shared by the vector generator and the golden tests.
namespace fixture {

inline bytes seed(std::uint8_t fill) { return bytes(32, fill); }

inline json exampleTransferMessage() {
  return transferMessage(1000, 2000, std::nullopt, "coaps://u.sp2.ex", false, "coaps://ca2.ex/est",
                         "coaps://u.sp1.ex");
}

/// Factory certificate for "dev-0001" issued by "PermanentCA" (seed 0x02)
/// over the subject key from seed 0x03.
inline CertFields exampleFactoryCert() {
  const Ed25519 issuer(seed(0x02));
  const Ed25519 subject(seed(0x03));
  CertFields c{7, "dev-0001", subject.publicKey, "PermanentCA", 0, 4000000000ULL, 2, {}};
  c.signature = issuer.sign(cbor(certTbs(c)));
  return c;
}

inline json exampleDeviceUpdateInfo() {
  return deviceUpdateInfo(exampleFactoryCert(), 1500, 2500, 3, "coaps://fw.sp1.ex/dev-0001");
}

}  // namespace fixture

}  // namespace oracle
