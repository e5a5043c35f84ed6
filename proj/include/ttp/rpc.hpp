#pragma once

// Request/response over the simulated network. Every call opens a fresh
// authenticated session:
//
//   <label>.hello   initiator -> responder
//   <label>.reply   responder -> initiator   (or <label>.alert on rejection)
//   <label>         request record
//   <label>.resp    response record
//
// A call makes up to `attempts` attempts; each attempt that sees no response
// within the timeout, or whose handshake is rejected, is abandoned and the
// next one starts with a new session. Sessions linger for a while after use
// so late replays are recognised (ReplayDetected) rather than dropped as
// unknown (WrongSession).

#include <functional>
#include <map>
#include <optional>
#include <set>

#include "ttp/protocol.hpp"
#include "ttp/session.hpp"
#include "ttp/simnet.hpp"

namespace ttp::sim {

struct CallOptions {
  std::uint32_t attempts = 4;
  SimTime attemptTimeout = 2000;
};

struct CallResult {
  /// Transport outcome: None, Timeout or PeerUntrusted.
  ErrorCode error = ErrorCode::None;
  /// Chain status behind a PeerUntrusted.
  pki::ChainStatus reason = pki::ChainStatus::Ok;
  session::Side rejectedBy = session::Side::Initiator;
  protocol::Response response;
  std::uint32_t attempts = 0;
  /// Certificate the responder authenticated with.
  std::optional<CompactCertificate> peer;

  bool ok() const { return error == ErrorCode::None && response.ok(); }
  ErrorCode failure() const { return error != ErrorCode::None ? error : response.status; }
};

struct Caller {
  ActorId actor;
  const session::AuthenticatedSession& session;
};

using Handler = std::function<protocol::Response(const Caller&, const protocol::Request&)>;

class RpcEndpoint {
 public:
  RpcEndpoint(Network& net, ActorId self, Rng rng);

  const ActorId& id() const { return self_; }

  /// Responder credential; nullopt means incoming handshakes are refused.
  void setCredential(std::function<std::optional<session::Credential>()> provider) {
    credential_ = std::move(provider);
  }
  void setTrust(std::function<const pki::TrustStore&()> store, const pki::RevocationView* revocations);
  void setLinger(SimTime linger) { linger_ = linger; }
  /// Called for every session this endpoint completes, on either side.
  void onEstablished(std::function<void(const session::AuthenticatedSession&, const ActorId& peer)> fn) {
    established_ = std::move(fn);
  }

  void handle(protocol::Op op, Handler h) { handlers_[op] = std::move(h); }

  void call(const ActorId& dst, const session::Credential& credential, const protocol::Request& request,
            CallOptions options, std::function<void(const CallResult&)> done);

  void receive(const Datagram& d);

  std::size_t activeCalls() const { return calls_.size(); }

 private:
  struct ClientCall {
    ActorId dst;
    std::string label;
    session::Credential credential;
    Bytes request;
    CallOptions options;
    std::function<void(const CallResult&)> done;
    std::uint32_t attempt = 0;
    std::optional<session::SessionId> handshake;
    CallResult last;
  };
  struct ClientSession {
    session::AuthenticatedSession s;
    std::uint64_t call = 0;
  };
  struct ServerSession {
    session::AuthenticatedSession s;
    ActorId peer;
    std::string label;
  };

  session::VerificationContext context() const;
  void startAttempt(std::uint64_t callId);
  void failAttempt(std::uint64_t callId, std::uint32_t attempt);
  void finish(std::uint64_t callId, CallResult result);
  void expire(const session::SessionId& id, bool server);

  void onHello(const Datagram& d, const session::HandshakeHello& hello);
  void onReply(const Datagram& d, const session::HandshakeReply& reply);
  void onRecord(const Datagram& d, const session::SessionRecord& record);
  void onAlert(const Datagram& d, const session::Alert& alert);

  Network& net_;
  ActorId self_;
  Rng rng_;
  SimTime linger_ = 600'000;
  std::function<std::optional<session::Credential>()> credential_;
  std::function<const pki::TrustStore&()> store_;
  const pki::RevocationView* revocations_ = nullptr;
  pki::RevocationView noRevocations_;
  std::function<void(const session::AuthenticatedSession&, const ActorId&)> established_;
  std::map<protocol::Op, Handler> handlers_;

  std::uint64_t nextCall_ = 0;
  std::map<std::uint64_t, ClientCall> calls_;
  std::map<session::SessionId, std::pair<std::uint64_t, session::PendingHandshake>> pending_;
  std::map<session::SessionId, ClientSession> clientSessions_;
  std::map<session::SessionId, ServerSession> serverSessions_;
  std::set<session::SessionId> seenHellos_;
};

}  // namespace ttp::sim
