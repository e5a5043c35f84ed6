#include "ttp/device.hpp"

#include <algorithm>
#include <sstream>

namespace ttp::device {

std::string_view toString(Phase p) {
  switch (p) {
    case Phase::Blank: return "blank";
    case Phase::Provisioned: return "provisioned";
    case Phase::Enrolled: return "enrolled";
    case Phase::TransferPending: return "transferPending";
    case Phase::ResetDone: return "resetDone";
    case Phase::Attested: return "attested";
    case Phase::Updated: return "updated";
    case Phase::Reenrolled: return "reenrolled";
    case Phase::Fallback: return "fallback";
  }
  return "?";
}

bool isLifecycleEdge(Phase from, Phase to) {
  switch (from) {
    case Phase::Blank: return to == Phase::Provisioned;
    case Phase::Provisioned: return to == Phase::Enrolled;
    case Phase::Enrolled: return to == Phase::TransferPending;
    case Phase::TransferPending: return to == Phase::ResetDone || to == Phase::Fallback;
    case Phase::ResetDone:
      return to == Phase::Attested || to == Phase::Updated || to == Phase::Reenrolled || to == Phase::Fallback;
    case Phase::Attested: return to == Phase::Updated || to == Phase::Reenrolled || to == Phase::Fallback;
    case Phase::Updated: return to == Phase::Reenrolled || to == Phase::Fallback;
    case Phase::Reenrolled:
    case Phase::Fallback: return false;
  }
  return false;
}

bool isLifecyclePrefix(std::span<const Phase> phases) {
  if (phases.empty() || phases.front() != Phase::Blank) return false;
  for (std::size_t i = 1; i < phases.size(); ++i) {
    if (!isLifecycleEdge(phases[i - 1], phases[i])) return false;
  }
  return true;
}

Bytes attestationMeasurement(BytesView firmwareStateDigest, BytesView nonce) {
  return crypto::digestBytes(concat(firmwareStateDigest, nonce));
}

Device::Device(Bytes deviceId, VersionInfo firmware, Bytes imageDigest)
    : id_(std::move(deviceId)), firmware_(std::move(firmware)), imageDigest_(std::move(imageDigest)) {
  if (id_.empty()) throw Error(ErrorCode::InvariantViolation, "device id must be nonempty");
}

void Device::transition(Phase to) {
  if (!isLifecycleEdge(phase_, to)) {
    throw Error(ErrorCode::WrongPhase,
                std::string(toString(phase_)) + " -> " + std::string(toString(to)) + " is not a lifecycle edge");
  }
  phase_ = to;
  history_.push_back(to);
}

void Device::requirePhase(std::initializer_list<Phase> allowed, std::string_view op) const {
  if (std::find(allowed.begin(), allowed.end(), phase_) == allowed.end()) {
    throw Error(ErrorCode::WrongPhase, std::string(op) + " in phase " + std::string(toString(phase_)));
  }
}

void Device::provisionFactory(crypto::KeyPair factoryKey, CompactCertificate factoryCert, pki::TrustStore initialStore,
                              Uri caUri, std::optional<Uri> updateUri) {
  requirePhase({Phase::Blank}, "provisionFactory");
  if (factoryCert.subjectPublicKey != factoryKey.publicKey) {
    throw Error(ErrorCode::KeyCertMismatch, "factory certificate does not carry the factory key");
  }
  factoryKey_ = std::move(factoryKey);
  factoryCert_ = std::move(factoryCert);
  trustStore_ = std::move(initialStore);
  endpoints_ = Endpoints{};
  endpoints_.caUri = std::move(caUri);
  endpoints_.updateUri = std::move(updateUri);
  transition(Phase::Provisioned);
}

CertificateSigningRequest Device::beginEnrollment(Rng& rng) {
  requirePhase({Phase::Provisioned, Phase::Enrolled, Phase::ResetDone, Phase::Attested, Phase::Updated,
                Phase::Reenrolled},
               "enrollment");
  pendingKey_ = crypto::generateKeyPair(rng.seed32());
  return crypto::makeCsr(*pendingKey_, factoryCert_.subjectName, CertProfile::Operational);
}

void Device::installOperational(crypto::KeyPair key, const CompactCertificate& cert,
                                std::span<const CompactCertificate> chain, TimeStamp now) {
  requirePhase({Phase::Provisioned, Phase::Enrolled, Phase::ResetDone, Phase::Attested, Phase::Updated,
                Phase::Reenrolled},
               "enrollment");
  if (cert.subjectPublicKey != key.publicKey) throw Error(ErrorCode::KeyCertMismatch, "certificate for another key");
  if (cert.profile != CertProfile::Operational) throw Error(ErrorCode::EnrollRejected, "not an operational certificate");
  if (cert.subjectName != factoryCert_.subjectName) throw Error(ErrorCode::EnrollRejected, "certificate for another subject");
  const auto result = pki::verifyChain(cert, chain, trustStore_, now, pki::RevocationView{});
  if (!result) {
    throw Error(ErrorCode::EnrollRejected, "issued certificate does not verify: " + std::string(pki::toString(result.status)));
  }
  operationalKey_ = std::move(key);
  operationalCert_ = cert;
  operationalChain_.assign(chain.begin(), chain.end());
  pendingKey_.reset();
  switch (phase_) {
    case Phase::Provisioned: transition(Phase::Enrolled); break;
    case Phase::ResetDone:
    case Phase::Attested:
    case Phase::Updated: transition(Phase::Reenrolled); break;
    default: break;  // renewal keeps the phase
  }
}

void Device::completeEnrollment(const CompactCertificate& cert, std::span<const CompactCertificate> chain,
                                TimeStamp now) {
  if (!pendingKey_) throw Error(ErrorCode::WrongPhase, "no enrollment in progress");
  installOperational(*pendingKey_, cert, chain, now);
}

void Device::installServerGeneratedKey(crypto::KeyPair key, const CompactCertificate& cert,
                                       std::span<const CompactCertificate> chain, TimeStamp now) {
  installOperational(std::move(key), cert, chain, now);
}

void Device::addTrustedRoot(const CompactCertificate& root, bool persistAcrossReset) {
  trustStore_.addRoot(root, persistAcrossReset);
}

void Device::applyFirmware(VersionInfo version, Bytes imageDigest) {
  firmware_ = std::move(version);
  imageDigest_ = std::move(imageDigest);
}

void Device::handleTransferMessage(const SignedEnvelope& envelope, TimeStamp now) {
  if (phase_ == Phase::TransferPending && pendingEnvelope_ && *pendingEnvelope_ == envelope) return;
  if (!transferSigner_ || envelope.header.profile != EnvelopeProfile::Cwt ||
      !crypto::verifyEnvelope(*transferSigner_, envelope)) {
    throw Error(ErrorCode::BadSignature, "transfer message not signed by the operator");
  }
  requirePhase({Phase::Enrolled}, "handleTransferMessage");
  auto tm = decode<TransferMessage>(envelope.payload);
  if (!tm.windowContains(now)) {
    throw Error(ErrorCode::OutsideResetWindow, "now=" + std::to_string(now.seconds) + " window=[" +
                                                   std::to_string(tm.resetTimeNotBefore.seconds) + "," +
                                                   std::to_string(tm.resetTimeNotAfter.seconds) + "]");
  }
  pendingTransfer_ = std::move(tm);
  pendingEnvelope_ = envelope;
  transition(Phase::TransferPending);
}

void Device::resetToAgreedState(TimeStamp now) {
  requirePhase({Phase::TransferPending}, "resetToAgreedState");
  const auto& tm = *pendingTransfer_;
  if (!tm.windowContains(now)) {
    throw Error(ErrorCode::OutsideResetWindow, "reset at " + std::to_string(now.seconds));
  }
  endpoints_ = Endpoints{};
  endpoints_.caUri = tm.enrollUri;
  endpoints_.updateUri = tm.updateUri.uri;
  endpoints_.raUri = tm.raUri;
  endpoints_.fallbackUri = tm.fallbackUri;
  endpoints_.contactUpdateBeforeEnroll = tm.updateUri.contactBeforeEnroll;
  operationalKey_.reset();
  operationalCert_.reset();
  operationalChain_.clear();
  pendingKey_.reset();
  transferSigner_.reset();
  trustStore_ = trustStore_.persistentSubset();
  transition(Phase::ResetDone);
}

PostResetStep Device::nextPostResetStep() const {
  switch (phase_) {
    case Phase::ResetDone:
      if (endpoints_.raUri) return PostResetStep::Attest;
      [[fallthrough]];
    case Phase::Attested:
      if (endpoints_.contactUpdateBeforeEnroll) return PostResetStep::Update;
      [[fallthrough]];
    case Phase::Updated: return PostResetStep::Enroll;
    default: return PostResetStep::Done;
  }
}

void Device::markAttested() { transition(Phase::Attested); }

void Device::markUpdated() { transition(Phase::Updated); }

void Device::enterFallback(ErrorCode reason) {
  transition(Phase::Fallback);
  fallbackReason_ = reason;
  pendingKey_.reset();
}

Bytes Device::firmwareStateDigest() const { return crypto::digestBytes(concat(encode(firmware_), imageDigest_)); }

void Device::tamperFirmwareImage() {
  if (imageDigest_.empty()) imageDigest_.push_back(0);
  imageDigest_[0] ^= 0xff;
}

session::Credential Device::factoryCredential() const {
  if (!factoryKey_) throw Error(ErrorCode::WrongPhase, "device not provisioned");
  return session::Credential{*factoryKey_, factoryCert_, {}};
}

std::optional<session::Credential> Device::operationalCredential() const {
  if (!operationalKey_ || !operationalCert_) return std::nullopt;
  return session::Credential{*operationalKey_, *operationalCert_, operationalChain_};
}

std::vector<std::string> Device::auditAgainst(const AgreedState& agreed) const {
  std::vector<std::string> out;
  if (factoryCert_ != agreed.factoryCertificate) out.push_back("factory certificate differs from the agreed one");
  if (firmware_ != agreed.firmware) out.push_back("firmware reference differs from the agreed one");
  if (operationalKey_) out.push_back("operational key retained");
  if (operationalCert_) out.push_back("operational certificate retained");
  if (!operationalChain_.empty()) out.push_back("operational chain retained");
  if (pendingKey_) out.push_back("enrollment key retained");
  if (transferSigner_) out.push_back("operator signer key retained");
  for (const auto& name : trustStore_.rootNames()) {
    if (!agreed.trustStoreRoots.contains(name)) out.push_back("truststore root " + name + " not agreed");
  }
  const auto& tm = agreed.transfer;
  if (endpoints_.caUri != tm.enrollUri) out.push_back("caUri differs from enrollUri");
  if (endpoints_.updateUri != tm.updateUri.uri) out.push_back("updateUri differs from the transfer message");
  if (endpoints_.raUri != tm.raUri) out.push_back("raUri differs from the transfer message");
  if (endpoints_.fallbackUri != tm.fallbackUri) out.push_back("fallbackUri differs from the transfer message");
  if (endpoints_.contactUpdateBeforeEnroll != tm.updateUri.contactBeforeEnroll) out.push_back("update flag differs");
  return out;
}

std::string Device::report() const {
  std::ostringstream os;
  auto uri = [](const std::optional<Uri>& u) { return u ? u->str() : std::string("-"); };
  os << "device=" << name() << " phase=" << toString(phase_) << " firmware.seq=" << firmware_.manifestSequence
     << " factory.serial=" << factoryCert_.serial;
  if (operationalCert_) {
    os << " operational.serial=" << operationalCert_->serial
       << " operational.issuer=" << ttp::toString(operationalCert_->issuerName)
       << " operational.notAfter=" << operationalCert_->notAfter.seconds;
  } else {
    os << " operational=-";
  }
  os << " truststore=";
  bool first = true;
  for (const auto& n : trustStore_.rootNames()) {
    os << (first ? "" : ",") << n;
    first = false;
  }
  os << " caUri=" << uri(endpoints_.caUri) << " updateUri=" << uri(endpoints_.updateUri)
     << " raUri=" << uri(endpoints_.raUri) << " fallbackUri=" << uri(endpoints_.fallbackUri);
  if (phase_ == Phase::Fallback) {
    os << " fallback.reason=" << ttp::toString(fallbackReason_) << " fallback.contacted=" << fallbackContacted_;
  }
  return os.str();
}

}  // namespace ttp::device
