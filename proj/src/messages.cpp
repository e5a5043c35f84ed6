#include "ttp/messages.hpp"

#include <set>

#include "ttp/error.hpp"

namespace ttp {

namespace {

[[noreturn]] void violation(const std::string& what) { throw Error(ErrorCode::InvariantViolation, what); }

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedEncoding, what); }

bool validUtf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    // Reject overlong forms, surrogates and out-of-range code points.
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += extra + 1;
  }
  return true;
}

CertProfile profileFromInt(std::uint64_t v) {
  if (v > static_cast<std::uint64_t>(CertProfile::Server)) malformed("unknown certificate profile " + std::to_string(v));
  return static_cast<CertProfile>(v);
}

void writeTbs(cbor::Writer& w, const CompactCertificate& c) {
  w.array(7)
      .uint(c.serial)
      .bytes(c.subjectName)
      .bytes(c.subjectPublicKey)
      .bytes(c.issuerName)
      .uint(c.notBefore.seconds)
      .uint(c.notAfter.seconds)
      .uint(static_cast<std::uint64_t>(c.profile));
}

void writeHeader(cbor::Writer& w, const EnvelopeHeader& h) {
  // Keys in ascending order: 1 alg, 3 content profile, 4 kid.
  w.map(3).uint(1).integer(h.algorithmId).uint(3).uint(static_cast<std::uint64_t>(h.profile)).uint(4).bytes(
      h.signerKeyId);
}

}  // namespace

Uri::Uri(std::string value) : value_(std::move(value)) {
  if (value_.empty()) violation("URI must be nonempty");
  if (value_.size() > kMaxLength) violation("URI longer than " + std::to_string(kMaxLength) + " bytes");
  if (!validUtf8(value_)) violation("URI is not valid UTF-8");
}

std::string Uri::authority() const {
  const auto scheme = value_.find("://");
  if (scheme == std::string::npos) return value_;
  const auto start = scheme + 3;
  const auto end = value_.find('/', start);
  return value_.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

std::string_view toString(CertProfile p) {
  switch (p) {
    case CertProfile::RootCa: return "rootCa";
    case CertProfile::SubCa: return "subCa";
    case CertProfile::Factory: return "factory";
    case CertProfile::Operational: return "operational";
    case CertProfile::Server: return "server";
  }
  return "unknown";
}

Bytes CompactCertificate::toBeSigned() const {
  cbor::Writer w;
  writeTbs(w, *this);
  return std::move(w).take();
}

Bytes CertificateSigningRequest::toBeSigned() const {
  cbor::Writer w;
  w.array(3).bytes(subjectName).bytes(subjectPublicKey).uint(static_cast<std::uint64_t>(requestedProfile));
  return std::move(w).take();
}

Bytes SignedEnvelope::signingInput() const { return concat(encode(header), payload); }

// --- invariants -------------------------------------------------------------

void validate(const VersionInfo&) {
  // Uri is validated on construction; any sequence number is representable.
}

void validate(const CompactCertificate& c) {
  if (c.notBefore > c.notAfter) violation("certificate notBefore after notAfter");
  if (c.subjectName.empty()) violation("certificate subject name is empty");
  if (c.issuerName.empty()) violation("certificate issuer name is empty");
  if (c.profile > CertProfile::Server) violation("unknown certificate profile");
}

void validate(const DeviceUpdateInfo& d) {
  validate(d.factoryCertificate);
  if (d.updateTimeNotBefore > d.updateTimeNotAfter) violation("updateTimeNotBefore after updateTimeNotAfter");
}

void validate(const UpdateInfoList& l) {
  std::set<std::uint64_t> serials;
  for (const auto& e : l.entries) {
    validate(e);
    if (!serials.insert(e.factoryCertificate.serial).second) {
      violation("duplicate factory certificate serial " + std::to_string(e.factoryCertificate.serial));
    }
  }
}

void validate(const TransferMessage& m) {
  if (m.resetTimeNotBefore > m.resetTimeNotAfter) violation("resetTimeNotBefore after resetTimeNotAfter");
}

void validate(const CertificateSigningRequest& r) {
  if (r.subjectName.empty()) violation("CSR subject name is empty");
  if (r.subjectPublicKey.empty()) violation("CSR public key is empty");
  if (r.requestedProfile != CertProfile::Factory && r.requestedProfile != CertProfile::Operational) {
    violation("CSR may only request factory or operational profiles");
  }
}

void validate(const EnvelopeHeader& h) {
  if (h.profile > EnvelopeProfile::UpdateList) violation("unknown envelope profile");
}

void validate(const SignedEnvelope& e) { validate(e.header); }

// --- encoders ---------------------------------------------------------------

void write(cbor::Writer& w, const VersionInfo& v) {
  validate(v);
  w.array(2).uint(v.manifestSequence).bytes(toBytes(v.manifestUri.str()));
}

void write(cbor::Writer& w, const CompactCertificate& c) {
  validate(c);
  w.array(8)
      .uint(c.serial)
      .bytes(c.subjectName)
      .bytes(c.subjectPublicKey)
      .bytes(c.issuerName)
      .uint(c.notBefore.seconds)
      .uint(c.notAfter.seconds)
      .uint(static_cast<std::uint64_t>(c.profile))
      .bytes(c.signature);
}

void write(cbor::Writer& w, const DeviceUpdateInfo& d) {
  validate(d);
  w.array(4);
  write(w, d.factoryCertificate);
  w.uint(d.updateTimeNotBefore.seconds).uint(d.updateTimeNotAfter.seconds);
  write(w, d.versionInfo);
}

void write(cbor::Writer& w, const TransferMessage& m) {
  validate(m);
  w.array(6).uint(m.resetTimeNotBefore.seconds).uint(m.resetTimeNotAfter.seconds);
  if (m.raUri) {
    w.bytes(toBytes(m.raUri->str()));
  } else {
    w.null();
  }
  w.array(2).bytes(toBytes(m.updateUri.uri.str())).boolean(m.updateUri.contactBeforeEnroll);
  w.bytes(toBytes(m.enrollUri.str())).bytes(toBytes(m.fallbackUri.str()));
}

void write(cbor::Writer& w, const CertificateSigningRequest& r) {
  validate(r);
  w.array(4)
      .bytes(r.subjectName)
      .bytes(r.subjectPublicKey)
      .uint(static_cast<std::uint64_t>(r.requestedProfile))
      .bytes(r.proofOfPossession);
}

void write(cbor::Writer& w, const SignedEnvelope& e) {
  validate(e);
  w.array(3).bytes(encode(e.header)).bytes(e.payload).bytes(e.signature);
}

Bytes encode(const TimeStamp& t) {
  cbor::Writer w;
  w.uint(t.seconds);
  return std::move(w).take();
}

Bytes encode(const VersionInfo& v) {
  cbor::Writer w;
  write(w, v);
  return std::move(w).take();
}

Bytes encode(const CompactCertificate& c) {
  cbor::Writer w;
  write(w, c);
  return std::move(w).take();
}

Bytes encode(const DeviceUpdateInfo& d) {
  cbor::Writer w;
  write(w, d);
  return std::move(w).take();
}

Bytes encode(const UpdateInfoList& l) {
  validate(l);
  cbor::Writer w;
  w.array(l.entries.size());
  for (const auto& e : l.entries) write(w, e);
  return std::move(w).take();
}

Bytes encode(const TransferMessage& m) {
  cbor::Writer w;
  write(w, m);
  return std::move(w).take();
}

Bytes encode(const CertificateSigningRequest& r) {
  cbor::Writer w;
  write(w, r);
  return std::move(w).take();
}

Bytes encode(const EnvelopeHeader& h) {
  validate(h);
  cbor::Writer w;
  writeHeader(w, h);
  return std::move(w).take();
}

Bytes encode(const SignedEnvelope& e) {
  cbor::Writer w;
  write(w, e);
  return std::move(w).take();
}

// --- decoders ---------------------------------------------------------------

template <>
TimeStamp read<TimeStamp>(cbor::Reader& r) {
  return TimeStamp{r.uint()};
}

template <>
Uri read<Uri>(cbor::Reader& r) {
  const Bytes raw = r.bytes();
  return Uri(toString(raw));
}

template <>
VersionInfo read<VersionInfo>(cbor::Reader& r) {
  r.array(2, "VersionInfo");
  const std::uint64_t seq = r.uint();
  return VersionInfo{seq, read<Uri>(r)};
}

template <>
CompactCertificate read<CompactCertificate>(cbor::Reader& r) {
  r.array(8, "CompactCertificate");
  CompactCertificate c;
  c.serial = r.uint();
  c.subjectName = r.bytes();
  c.subjectPublicKey = r.bytes();
  c.issuerName = r.bytes();
  c.notBefore = read<TimeStamp>(r);
  c.notAfter = read<TimeStamp>(r);
  c.profile = profileFromInt(r.uint());
  c.signature = r.bytes();
  validate(c);
  return c;
}

template <>
DeviceUpdateInfo read<DeviceUpdateInfo>(cbor::Reader& r) {
  r.array(4, "DeviceUpdateInfo");
  auto cert = read<CompactCertificate>(r);
  const auto nb = read<TimeStamp>(r);
  const auto na = read<TimeStamp>(r);
  DeviceUpdateInfo d{std::move(cert), nb, na, read<VersionInfo>(r)};
  validate(d);
  return d;
}

template <>
UpdateInfoList read<UpdateInfoList>(cbor::Reader& r) {
  const std::size_t n = r.array();
  UpdateInfoList l;
  l.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) l.entries.push_back(read<DeviceUpdateInfo>(r));
  validate(l);
  return l;
}

template <>
TransferMessage read<TransferMessage>(cbor::Reader& r) {
  r.array(6, "TransferMessage");
  const auto nb = read<TimeStamp>(r);
  const auto na = read<TimeStamp>(r);
  std::optional<Uri> ra;
  if (!r.null()) ra = read<Uri>(r);
  r.array(2, "updateURI");
  auto updateUri = read<Uri>(r);
  const bool flag = r.boolean();
  auto enroll = read<Uri>(r);
  auto fallback = read<Uri>(r);
  TransferMessage m{nb, na, std::move(ra), UpdateEndpoint{std::move(updateUri), flag}, std::move(enroll),
                    std::move(fallback)};
  validate(m);
  return m;
}

template <>
CertificateSigningRequest read<CertificateSigningRequest>(cbor::Reader& r) {
  r.array(4, "CertificateSigningRequest");
  CertificateSigningRequest c;
  c.subjectName = r.bytes();
  c.subjectPublicKey = r.bytes();
  c.requestedProfile = profileFromInt(r.uint());
  c.proofOfPossession = r.bytes();
  validate(c);
  return c;
}

template <>
EnvelopeHeader read<EnvelopeHeader>(cbor::Reader& r) {
  if (r.map() != 3) malformed("envelope header must have exactly 3 entries");
  EnvelopeHeader h;
  if (r.uint() != 1) malformed("envelope header: expected key 1");
  h.algorithmId = r.integer();
  if (r.uint() != 3) malformed("envelope header: expected key 3");
  const std::uint64_t profile = r.uint();
  if (profile > static_cast<std::uint64_t>(EnvelopeProfile::UpdateList)) malformed("unknown envelope profile");
  h.profile = static_cast<EnvelopeProfile>(profile);
  if (r.uint() != 4) malformed("envelope header: expected key 4");
  h.signerKeyId = r.bytes();
  return h;
}

template <>
SignedEnvelope read<SignedEnvelope>(cbor::Reader& r) {
  r.array(3, "SignedEnvelope");
  const Bytes headerBytes = r.bytes();
  SignedEnvelope e;
  e.header = decode<EnvelopeHeader>(headerBytes);
  e.payload = r.bytes();
  e.signature = r.bytes();
  return e;
}

AnyMessage decode(MessageKind kind, BytesView bytes) {
  switch (kind) {
    case MessageKind::VersionInfo: return decode<VersionInfo>(bytes);
    case MessageKind::CompactCertificate: return decode<CompactCertificate>(bytes);
    case MessageKind::DeviceUpdateInfo: return decode<DeviceUpdateInfo>(bytes);
    case MessageKind::UpdateInfoList: return decode<UpdateInfoList>(bytes);
    case MessageKind::TransferMessage: return decode<TransferMessage>(bytes);
    case MessageKind::CertificateSigningRequest: return decode<CertificateSigningRequest>(bytes);
    case MessageKind::SignedEnvelope: return decode<SignedEnvelope>(bytes);
  }
  malformed("unknown message kind");
}

Bytes encode(const AnyMessage& message) {
  return std::visit([](const auto& m) { return encode(m); }, message);
}

}  // namespace ttp
