#pragma once

// Protocol payload types and their deterministic binary codecs.
//
// Every type here is a plain value: copyable, comparable, immutable in
// practice once built. encode() checks the type invariants and throws
// InvariantViolation; decode() throws MalformedEncoding for structural
// problems (element counts, primitive types, trailing bytes) and
// InvariantViolation for well-formed input that breaks an invariant.
//
// Wire shapes (all definite-length CBOR arrays, fields in declared order):
//
//   VersionInfo         [seq, uri]
//   CompactCertificate  [serial, subject, publicKey, issuer, notBefore,
//                        notAfter, profile, signature]
//   DeviceUpdateInfo    [certificate, notBefore, notAfter, VersionInfo]
//   UpdateInfoList      [* DeviceUpdateInfo]
//   TransferMessage     [resetNotBefore, resetNotAfter, raUri / null,
//                        [updateUri, contactBeforeEnroll], enrollUri,
//                        fallbackUri]
//   CSR                 [subject, publicKey, profile, proofOfPossession]
//   SignedEnvelope      [bstr .cbor header, payload, signature]
//   header              {1: algorithm, 3: profile, 4: signerKeyId}
//
// URIs travel as byte strings.

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ttp/bytes.hpp"
#include "ttp/cbor.hpp"

namespace ttp {

class Uri {
 public:
  static constexpr std::size_t kMaxLength = 255;

  /// Throws InvariantViolation when empty, longer than kMaxLength bytes, or
  /// not valid UTF-8.
  explicit Uri(std::string value);

  const std::string& str() const noexcept { return value_; }
  /// Authority component ("coaps://host:port/path" -> "host:port"); the whole
  /// value when there is no scheme separator.
  std::string authority() const;

  friend auto operator<=>(const Uri&, const Uri&) = default;

 private:
  std::string value_;
};

struct TimeStamp {
  std::uint64_t seconds = 0;

  friend auto operator<=>(const TimeStamp&, const TimeStamp&) = default;
};

struct VersionInfo {
  std::uint64_t manifestSequence = 0;
  Uri manifestUri;

  friend bool operator==(const VersionInfo&, const VersionInfo&) = default;
};

enum class CertProfile : std::uint8_t {
  RootCa = 0,
  SubCa = 1,
  Factory = 2,
  Operational = 3,
  Server = 4,
};

std::string_view toString(CertProfile p);

/// Compact credential binding a subject name to a public key. The signature
/// covers encode(tbs) where tbs is the first seven fields as an array.
struct CompactCertificate {
  std::uint64_t serial = 0;
  Bytes subjectName;
  Bytes subjectPublicKey;
  Bytes issuerName;
  TimeStamp notBefore;
  TimeStamp notAfter;
  CertProfile profile = CertProfile::Operational;
  Bytes signature;

  Bytes toBeSigned() const;
  bool isCa() const { return profile == CertProfile::RootCa || profile == CertProfile::SubCa; }
  bool validAt(TimeStamp now) const { return notBefore <= now && now <= notAfter; }

  friend bool operator==(const CompactCertificate&, const CompactCertificate&) = default;
};

struct DeviceUpdateInfo {
  // Full certificate (body and signature), not just the to-be-signed part.
  CompactCertificate factoryCertificate;
  TimeStamp updateTimeNotBefore;
  TimeStamp updateTimeNotAfter;
  VersionInfo versionInfo;

  friend bool operator==(const DeviceUpdateInfo&, const DeviceUpdateInfo&) = default;
};

struct UpdateInfoList {
  std::vector<DeviceUpdateInfo> entries;

  friend bool operator==(const UpdateInfoList&, const UpdateInfoList&) = default;
};

struct UpdateEndpoint {
  Uri uri;
  bool contactBeforeEnroll = false;

  friend bool operator==(const UpdateEndpoint&, const UpdateEndpoint&) = default;
};

struct TransferMessage {
  TimeStamp resetTimeNotBefore;
  TimeStamp resetTimeNotAfter;
  std::optional<Uri> raUri;
  UpdateEndpoint updateUri;
  Uri enrollUri;
  Uri fallbackUri;

  bool windowContains(TimeStamp now) const { return resetTimeNotBefore <= now && now <= resetTimeNotAfter; }

  friend bool operator==(const TransferMessage&, const TransferMessage&) = default;
};

struct CertificateSigningRequest {
  Bytes subjectName;
  Bytes subjectPublicKey;
  CertProfile requestedProfile = CertProfile::Operational;
  Bytes proofOfPossession;

  /// Bytes the proof of possession signs: [subject, publicKey, profile].
  Bytes toBeSigned() const;

  friend bool operator==(const CertificateSigningRequest&, const CertificateSigningRequest&) = default;
};

enum class EnvelopeProfile : std::uint8_t {
  Cwt = 0,         // signed TransferMessage claim set
  UpdateList = 1,  // signed UpdateInfoList
};

struct EnvelopeHeader {
  std::int64_t algorithmId = 0;
  EnvelopeProfile profile = EnvelopeProfile::Cwt;
  Bytes signerKeyId;

  friend bool operator==(const EnvelopeHeader&, const EnvelopeHeader&) = default;
};

struct SignedEnvelope {
  EnvelopeHeader header;
  Bytes payload;
  Bytes signature;

  /// encode(header) || payload
  Bytes signingInput() const;

  friend bool operator==(const SignedEnvelope&, const SignedEnvelope&) = default;
};

// Invariant checks used by encode(); exposed for callers that build values
// from untrusted parts.
void validate(const VersionInfo& v);
void validate(const CompactCertificate& c);
void validate(const DeviceUpdateInfo& d);
void validate(const UpdateInfoList& l);
void validate(const TransferMessage& m);
void validate(const CertificateSigningRequest& r);
void validate(const EnvelopeHeader& h);
void validate(const SignedEnvelope& e);

Bytes encode(const TimeStamp& t);
Bytes encode(const VersionInfo& v);
Bytes encode(const CompactCertificate& c);
Bytes encode(const DeviceUpdateInfo& d);
Bytes encode(const UpdateInfoList& l);
Bytes encode(const TransferMessage& m);
Bytes encode(const CertificateSigningRequest& r);
Bytes encode(const EnvelopeHeader& h);
Bytes encode(const SignedEnvelope& e);

// Streaming forms used when a message is nested inside a larger one.
void write(cbor::Writer& w, const VersionInfo& v);
void write(cbor::Writer& w, const CompactCertificate& c);
void write(cbor::Writer& w, const DeviceUpdateInfo& d);
void write(cbor::Writer& w, const TransferMessage& m);
void write(cbor::Writer& w, const CertificateSigningRequest& r);
void write(cbor::Writer& w, const SignedEnvelope& e);

template <class T>
T read(cbor::Reader& r);

template <>
TimeStamp read<TimeStamp>(cbor::Reader& r);
template <>
Uri read<Uri>(cbor::Reader& r);
template <>
VersionInfo read<VersionInfo>(cbor::Reader& r);
template <>
CompactCertificate read<CompactCertificate>(cbor::Reader& r);
template <>
DeviceUpdateInfo read<DeviceUpdateInfo>(cbor::Reader& r);
template <>
UpdateInfoList read<UpdateInfoList>(cbor::Reader& r);
template <>
TransferMessage read<TransferMessage>(cbor::Reader& r);
template <>
CertificateSigningRequest read<CertificateSigningRequest>(cbor::Reader& r);
template <>
EnvelopeHeader read<EnvelopeHeader>(cbor::Reader& r);
template <>
SignedEnvelope read<SignedEnvelope>(cbor::Reader& r);

/// Decodes exactly one value of type T; trailing bytes are rejected.
template <class T>
T decode(BytesView bytes) {
  cbor::Reader r(bytes);
  T value = read<T>(r);
  r.finish();
  return value;
}

enum class MessageKind : std::uint8_t {
  VersionInfo,
  CompactCertificate,
  DeviceUpdateInfo,
  UpdateInfoList,
  TransferMessage,
  CertificateSigningRequest,
  SignedEnvelope,
};

using AnyMessage = std::variant<VersionInfo, CompactCertificate, DeviceUpdateInfo, UpdateInfoList, TransferMessage,
                                CertificateSigningRequest, SignedEnvelope>;

AnyMessage decode(MessageKind kind, BytesView bytes);
Bytes encode(const AnyMessage& message);

}  // namespace ttp
