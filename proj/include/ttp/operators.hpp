#pragma once

// Service-provider logic: the old operator (SP1) builds and signs the device
// update list and relays the new operator's (SP2) transfer message to each
// device; SP2 registers the factory certificates with its CA and prepares
// the transfer message. Also the update server and the attestation verifier.

#include <map>
#include <optional>
#include <span>
#include <string>

#include "ttp/crypto.hpp"
#include "ttp/messages.hpp"
#include "ttp/pki.hpp"
#include "ttp/rng.hpp"

namespace ttp::operators {

struct ManagedDevice {
  CompactCertificate factoryCertificate;
  VersionInfo version;
  TimeStamp windowNotBefore;
  TimeStamp windowNotAfter;
};

struct FirmwareRelease {
  VersionInfo version;
  Bytes imageDigest;

  friend bool operator==(const FirmwareRelease&, const FirmwareRelease&) = default;
};

class OperatorState {
 public:
  OperatorState(std::string name, crypto::KeyPair signingKey, Uri updateServerUri);

  const std::string& name() const { return name_; }
  const crypto::KeyPair& signingKey() const { return signingKey_; }
  const Uri& updateServerUri() const { return updateServerUri_; }

  /// Records the counterpart key agreed for signing protocol data.
  void agreePeerSigner(const std::string& peer, Bytes publicKey);
  const Bytes* peerSigner(std::string_view peer) const;

  /// Throws InvariantViolation for a duplicate id.
  void manage(BytesView deviceId, ManagedDevice device);
  bool manages(BytesView deviceId) const { return managed_.contains(Bytes(deviceId.begin(), deviceId.end())); }
  /// Throws UnknownDevice.
  const ManagedDevice& managed(BytesView deviceId) const;
  const std::map<Bytes, ManagedDevice>& managedDevices() const { return managed_; }
  /// Firmware the device is now known to run. Throws UnknownDevice.
  void recordVersion(BytesView deviceId, VersionInfo version);

  void setRelease(FirmwareRelease release) { release_ = std::move(release); }
  const std::optional<FirmwareRelease>& release() const { return release_; }

 private:
  std::string name_;
  crypto::KeyPair signingKey_;
  Uri updateServerUri_;
  std::map<std::string, Bytes, std::less<>> peerSigners_;
  std::map<Bytes, ManagedDevice> managed_;
  std::optional<FirmwareRelease> release_;
};

/// One entry per device, in the order given. Throws UnknownDevice.
UpdateInfoList sp1UpdateInfoList(const OperatorState& sp1, std::span<const Bytes> deviceIds);
SignedEnvelope sp1BuildUpdateInfoList(const OperatorState& sp1, std::span<const Bytes> deviceIds);

/// Verifies the list under the key agreed with `sp1Name`. Throws BadSignature.
UpdateInfoList sp2AcceptUpdateInfoList(const OperatorState& sp2, std::string_view sp1Name, const SignedEnvelope& env);

struct TransferOptions {
  std::optional<Uri> raUri;
  bool contactBeforeEnroll = false;
};

/// Smallest window covering every per-device window. Throws
/// InvariantViolation for an empty list.
std::pair<TimeStamp, TimeStamp> windowHull(const UpdateInfoList& list);

/// Transfer message for an already registered list, signed by SP2.
SignedEnvelope sp2BuildTransferMessage(const OperatorState& sp2, const UpdateInfoList& list, const Uri& enrollUri,
                                       const TransferOptions& options);
/// Registers the list with CA2, then builds the transfer message. Throws
/// RegistrationFailed.
SignedEnvelope sp2PrepareTransfer(const OperatorState& sp2, const UpdateInfoList& list, pki::CertificateAuthority& ca2,
                                  const TransferOptions& options, TimeStamp now);

/// Per-device copy of SP2's transfer message: fallbackUri rewritten to SP1's
/// update server, window narrowed to the device's own window, signed by SP1.
/// Throws BadSp2Signature or UnknownDevice.
SignedEnvelope sp1RelayTransfer(const OperatorState& sp1, std::string_view sp2Name, const SignedEnvelope& sp2Env,
                                BytesView deviceId);

inline constexpr std::size_t kNonceLength = 16;

struct RaExchange {
  Bytes nonce;
  Bytes deviceId;
  Bytes reportedMeasurement;
  bool verdict = false;
};

class RaVerifier {
 public:
  /// Expected firmware state digest for a device.
  void expect(BytesView deviceId, Bytes stateDigest);
  bool hasExpectation(BytesView deviceId) const;
  /// Fresh nonce; replaces any outstanding one. Throws NoExpectedMeasurement.
  Bytes challenge(BytesView deviceId, Rng& rng);
  /// Sets and returns the verdict. Answers for an already decided nonce are
  /// repeated, so a retransmitted report gets the same answer.
  bool verify(RaExchange& exchange);

 private:
  std::map<Bytes, Bytes> expected_;
  std::map<Bytes, Bytes> outstanding_;
  std::map<std::pair<Bytes, Bytes>, std::pair<Bytes, bool>> decided_;
};

/// Newer release for the device, or nothing when it is up to date. Throws
/// PeerUntrusted when `authenticatedPeer` is absent and UnknownDevice for a
/// device the operator does not manage.
std::optional<FirmwareRelease> updateServerServe(const OperatorState& op,
                                                 const std::optional<CompactCertificate>& authenticatedPeer,
                                                 const VersionInfo& current);

}  // namespace ttp::operators
