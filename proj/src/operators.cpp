#include "ttp/operators.hpp"

#include <algorithm>

#include "ttp/device.hpp"

namespace ttp::operators {

OperatorState::OperatorState(std::string name, crypto::KeyPair signingKey, Uri updateServerUri)
    : name_(std::move(name)), signingKey_(std::move(signingKey)), updateServerUri_(std::move(updateServerUri)) {}

void OperatorState::agreePeerSigner(const std::string& peer, Bytes publicKey) {
  peerSigners_.insert_or_assign(peer, std::move(publicKey));
}

const Bytes* OperatorState::peerSigner(std::string_view peer) const {
  const auto it = peerSigners_.find(peer);
  return it == peerSigners_.end() ? nullptr : &it->second;
}

void OperatorState::manage(BytesView deviceId, ManagedDevice device) {
  if (!managed_.emplace(Bytes(deviceId.begin(), deviceId.end()), std::move(device)).second) {
    throw Error(ErrorCode::InvariantViolation, "device " + ttp::toString(deviceId) + " already managed");
  }
}

const ManagedDevice& OperatorState::managed(BytesView deviceId) const {
  const auto it = managed_.find(Bytes(deviceId.begin(), deviceId.end()));
  if (it == managed_.end()) throw Error(ErrorCode::UnknownDevice, ttp::toString(deviceId));
  return it->second;
}

void OperatorState::recordVersion(BytesView deviceId, VersionInfo version) {
  const auto it = managed_.find(Bytes(deviceId.begin(), deviceId.end()));
  if (it == managed_.end()) throw Error(ErrorCode::UnknownDevice, ttp::toString(deviceId));
  it->second.version = std::move(version);
}

UpdateInfoList sp1UpdateInfoList(const OperatorState& sp1, std::span<const Bytes> deviceIds) {
  UpdateInfoList list;
  list.entries.reserve(deviceIds.size());
  for (const auto& id : deviceIds) {
    const auto& m = sp1.managed(id);
    list.entries.push_back(DeviceUpdateInfo{m.factoryCertificate, m.windowNotBefore, m.windowNotAfter, m.version});
  }
  return list;
}

SignedEnvelope sp1BuildUpdateInfoList(const OperatorState& sp1, std::span<const Bytes> deviceIds) {
  return crypto::signEnvelope(sp1.signingKey(), EnvelopeProfile::UpdateList, encode(sp1UpdateInfoList(sp1, deviceIds)));
}

UpdateInfoList sp2AcceptUpdateInfoList(const OperatorState& sp2, std::string_view sp1Name, const SignedEnvelope& env) {
  const Bytes* key = sp2.peerSigner(sp1Name);
  if (key == nullptr || env.header.profile != EnvelopeProfile::UpdateList || !crypto::verifyEnvelope(*key, env)) {
    throw Error(ErrorCode::BadSignature, "update list not signed by the agreed key");
  }
  return decode<UpdateInfoList>(env.payload);
}

std::pair<TimeStamp, TimeStamp> windowHull(const UpdateInfoList& list) {
  if (list.entries.empty()) throw Error(ErrorCode::InvariantViolation, "no devices to transfer");
  TimeStamp lo = list.entries.front().updateTimeNotBefore;
  TimeStamp hi = list.entries.front().updateTimeNotAfter;
  for (const auto& e : list.entries) {
    lo = std::min(lo, e.updateTimeNotBefore);
    hi = std::max(hi, e.updateTimeNotAfter);
  }
  return {lo, hi};
}

SignedEnvelope sp2BuildTransferMessage(const OperatorState& sp2, const UpdateInfoList& list, const Uri& enrollUri,
                                       const TransferOptions& options) {
  const auto [lo, hi] = windowHull(list);
  const TransferMessage tm{lo,
                           hi,
                           options.raUri,
                           UpdateEndpoint{sp2.updateServerUri(), options.contactBeforeEnroll},
                           enrollUri,
                           sp2.updateServerUri()};
  return crypto::signEnvelope(sp2.signingKey(), EnvelopeProfile::Cwt, encode(tm));
}

SignedEnvelope sp2PrepareTransfer(const OperatorState& sp2, const UpdateInfoList& list, pki::CertificateAuthority& ca2,
                                  const TransferOptions& options, TimeStamp now) {
  Uri enrollUri = ca2.enrollUri();
  try {
    enrollUri = ca2.registerFactoryCerts(list, now);
  } catch (const pki::UnverifiableFactoryCert& e) {
    throw Error(ErrorCode::RegistrationFailed, e.what());
  }
  return sp2BuildTransferMessage(sp2, list, enrollUri, options);
}

SignedEnvelope sp1RelayTransfer(const OperatorState& sp1, std::string_view sp2Name, const SignedEnvelope& sp2Env,
                                BytesView deviceId) {
  const Bytes* key = sp1.peerSigner(sp2Name);
  if (key == nullptr || sp2Env.header.profile != EnvelopeProfile::Cwt || !crypto::verifyEnvelope(*key, sp2Env)) {
    throw Error(ErrorCode::BadSp2Signature, "transfer message not signed by the agreed key");
  }
  const auto& device = sp1.managed(deviceId);
  TransferMessage tm = decode<TransferMessage>(sp2Env.payload);
  tm.fallbackUri = sp1.updateServerUri();
  tm.resetTimeNotBefore = std::max(tm.resetTimeNotBefore, device.windowNotBefore);
  tm.resetTimeNotAfter = std::min(tm.resetTimeNotAfter, device.windowNotAfter);
  if (tm.resetTimeNotBefore > tm.resetTimeNotAfter) {
    throw Error(ErrorCode::InvariantViolation, "device window outside the agreed transfer window");
  }
  return crypto::signEnvelope(sp1.signingKey(), EnvelopeProfile::Cwt, encode(tm));
}

void RaVerifier::expect(BytesView deviceId, Bytes stateDigest) {
  expected_.insert_or_assign(Bytes(deviceId.begin(), deviceId.end()), std::move(stateDigest));
}

bool RaVerifier::hasExpectation(BytesView deviceId) const {
  return expected_.contains(Bytes(deviceId.begin(), deviceId.end()));
}

Bytes RaVerifier::challenge(BytesView deviceId, Rng& rng) {
  const Bytes id(deviceId.begin(), deviceId.end());
  if (!expected_.contains(id)) throw Error(ErrorCode::NoExpectedMeasurement, ttp::toString(id));
  Bytes nonce = rng.bytes(kNonceLength);
  outstanding_.insert_or_assign(id, nonce);
  return nonce;
}

bool RaVerifier::verify(RaExchange& exchange) {
  const auto key = std::make_pair(exchange.deviceId, exchange.nonce);
  if (const auto it = decided_.find(key); it != decided_.end()) {
    exchange.verdict = it->second.first == exchange.reportedMeasurement && it->second.second;
    return exchange.verdict;
  }
  const auto exp = expected_.find(exchange.deviceId);
  if (exp == expected_.end()) throw Error(ErrorCode::NoExpectedMeasurement, ttp::toString(exchange.deviceId));
  const auto out = outstanding_.find(exchange.deviceId);
  const bool nonceOk = out != outstanding_.end() && out->second == exchange.nonce;
  exchange.verdict = nonceOk && exchange.reportedMeasurement == device::attestationMeasurement(exp->second, exchange.nonce);
  if (nonceOk) {
    outstanding_.erase(out);
    decided_.emplace(key, std::make_pair(exchange.reportedMeasurement, exchange.verdict));
  }
  return exchange.verdict;
}

std::optional<FirmwareRelease> updateServerServe(const OperatorState& op,
                                                 const std::optional<CompactCertificate>& authenticatedPeer,
                                                 const VersionInfo& current) {
  if (!authenticatedPeer) throw Error(ErrorCode::PeerUntrusted, "update request without an authenticated peer");
  op.managed(authenticatedPeer->subjectName);
  const auto& release = op.release();
  if (!release || release->version.manifestSequence <= current.manifestSequence) return std::nullopt;
  return release;
}

}  // namespace ttp::operators
