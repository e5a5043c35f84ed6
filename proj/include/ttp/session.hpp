#pragma once

// Abstract authenticated channel standing in for a DTLS/EDHOC handshake plus
// record layer.
//
// Handshake: the initiator sends its certificate chain, a fresh 32-byte
// contribution and a signature over both; the responder verifies, answers
// with its own chain, contribution and a signature binding both
// contributions. Each side runs verifyChain on the peer against its own
// truststore. The session "key" exists only as a fingerprint over the
// transcript and is used to tag records; nothing is encrypted.
//
// Records carry a per-direction sequence number; a receiver accepts each
// sequence number once and only in increasing order.

#include <array>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "ttp/crypto.hpp"
#include "ttp/error.hpp"
#include "ttp/pki.hpp"
#include "ttp/rng.hpp"

namespace ttp::session {

inline constexpr std::size_t kSessionIdLength = 8;
inline constexpr std::size_t kContributionLength = 32;
inline constexpr std::size_t kTagLength = 16;

using SessionId = std::array<std::uint8_t, kSessionIdLength>;

std::string toHex(const SessionId& id);

struct Credential {
  crypto::KeyPair key;
  CompactCertificate certificate;
  std::vector<CompactCertificate> intermediates;
};

struct VerificationContext {
  const pki::TrustStore& store;
  TimeStamp now;
  const pki::RevocationView& revocations;
};

enum class Side : std::uint8_t { Initiator, Responder };

std::string_view toString(Side s);

/// Raised by the side (`side`) that could not verify its peer.
class PeerUntrusted : public Error {
 public:
  PeerUntrusted(Side side, pki::ChainStatus reason)
      : Error(ErrorCode::PeerUntrusted, std::string(toString(side)) + " rejected peer: " +
                                            std::string(pki::toString(reason))),
        side_(side),
        reason_(reason) {}

  Side side() const { return side_; }
  pki::ChainStatus reason() const { return reason_; }

 private:
  Side side_;
  pki::ChainStatus reason_;
};

struct HandshakeHello {
  SessionId id{};
  std::vector<CompactCertificate> chain;  // leaf first
  Bytes contribution;
  Bytes signature;

  friend bool operator==(const HandshakeHello&, const HandshakeHello&) = default;
};

struct HandshakeReply {
  SessionId id{};
  std::vector<CompactCertificate> chain;
  Bytes contribution;
  Bytes signature;

  friend bool operator==(const HandshakeReply&, const HandshakeReply&) = default;
};

struct SessionRecord {
  SessionId id{};
  bool fromInitiator = true;
  std::uint64_t seq = 0;
  Bytes payload;
  Bytes tag;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

/// Unauthenticated rejection notice a responder sends when it cannot accept
/// a handshake. Receivers treat it as a hint only.
struct Alert {
  SessionId id{};
  ErrorCode code = ErrorCode::None;
  pki::ChainStatus reason = pki::ChainStatus::Ok;

  friend bool operator==(const Alert&, const Alert&) = default;
};

using Frame = std::variant<HandshakeHello, HandshakeReply, SessionRecord, Alert>;

Bytes encodeFrame(const Frame& frame);
/// Throws MalformedEncoding.
Frame decodeFrame(BytesView bytes);

struct AuthenticatedSession {
  SessionId id{};
  Side localSide = Side::Initiator;
  CompactCertificate localIdentity;
  CompactCertificate peerIdentity;
  std::vector<CompactCertificate> peerChain;
  std::uint64_t sendSeq = 0;
  std::uint64_t recvSeq = 0;
  bool established = false;
  crypto::Digest sessionKeyFingerprint{};
};

struct PendingHandshake {
  HandshakeHello hello;
  CompactCertificate localIdentity;
};

PendingHandshake initiate(const Credential& initiator, Rng& rng);

/// Verifies the initiator and produces the responder's session plus reply.
/// Throws PeerUntrusted(Responder, reason).
std::pair<AuthenticatedSession, HandshakeReply> respond(const HandshakeHello& hello, const Credential& responder,
                                                        const VerificationContext& ctx, Rng& rng);

/// Verifies the responder. Throws PeerUntrusted(Initiator, reason) or
/// WrongSession when the reply belongs to a different handshake.
AuthenticatedSession complete(const PendingHandshake& pending, const HandshakeReply& reply,
                              const VerificationContext& ctx);

/// Runs the whole exchange in-process.
std::pair<AuthenticatedSession, AuthenticatedSession> establish(const Credential& initiator,
                                                                const Credential& responder,
                                                                const VerificationContext& initiatorCtx,
                                                                const VerificationContext& responderCtx, Rng& rng);

/// Throws NotEstablished.
SessionRecord send(AuthenticatedSession& session, BytesView payload);

/// Returns the payload of an authentic, fresh record. Throws NotEstablished,
/// WrongSession (record from another session or reflected back at its
/// sender), IntegrityFailure (tag mismatch) or ReplayDetected
/// (seq <= recvSeq).
Bytes receive(AuthenticatedSession& session, const SessionRecord& record);

}  // namespace ttp::session
