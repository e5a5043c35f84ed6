#include "ttp/rpc.hpp"

namespace ttp::sim {

namespace {

std::string baseLabel(const std::string& label, std::string_view suffix) {
  if (label.size() >= suffix.size() && label.compare(label.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return label.substr(0, label.size() - suffix.size());
  }
  return label;
}

}  // namespace

RpcEndpoint::RpcEndpoint(Network& net, ActorId self, Rng rng) : net_(net), self_(std::move(self)), rng_(rng) {}

void RpcEndpoint::setTrust(std::function<const pki::TrustStore&()> store, const pki::RevocationView* revocations) {
  store_ = std::move(store);
  revocations_ = revocations;
}

session::VerificationContext RpcEndpoint::context() const {
  return session::VerificationContext{store_(), net_.clock(), revocations_ ? *revocations_ : noRevocations_};
}

void RpcEndpoint::call(const ActorId& dst, const session::Credential& credential, const protocol::Request& request,
                       CallOptions options, std::function<void(const CallResult&)> done) {
  const auto id = ++nextCall_;
  ClientCall c;
  c.dst = dst;
  c.label = std::string(protocol::toString(request.op));
  c.credential = credential;
  c.request = protocol::encode(request);
  c.options = options;
  c.done = std::move(done);
  c.last.error = ErrorCode::Timeout;
  calls_.emplace(id, std::move(c));
  startAttempt(id);
}

void RpcEndpoint::startAttempt(std::uint64_t callId) {
  auto& c = calls_.at(callId);
  ++c.attempt;
  auto pending = session::initiate(c.credential, rng_);
  const auto sid = pending.hello.id;
  const Bytes hello = session::encodeFrame(pending.hello);
  pending_.insert_or_assign(sid, std::make_pair(callId, std::move(pending)));
  c.handshake = sid;
  net_.send(self_, c.dst, c.label + ".hello", hello);
  const auto attempt = c.attempt;
  net_.schedule(c.options.attemptTimeout, [this, callId, attempt] {
    CallResult timeout;
    timeout.error = ErrorCode::Timeout;
    const auto it = calls_.find(callId);
    if (it == calls_.end() || it->second.attempt != attempt) return;
    if (it->second.last.error == ErrorCode::PeerUntrusted) timeout = it->second.last;
    it->second.last = timeout;
    failAttempt(callId, attempt);
  });
}

void RpcEndpoint::failAttempt(std::uint64_t callId, std::uint32_t attempt) {
  const auto it = calls_.find(callId);
  if (it == calls_.end() || it->second.attempt != attempt) return;
  auto& c = it->second;
  if (c.handshake) {
    pending_.erase(*c.handshake);
    c.handshake.reset();
  }
  if (c.attempt < c.options.attempts) {
    net_.note("note", "actor=" + self_ + " call=" + c.label + " retry=" + std::to_string(c.attempt + 1) +
                          " after=" + std::string(ttp::toString(c.last.error)));
    startAttempt(callId);
  } else {
    finish(callId, c.last);
  }
}

void RpcEndpoint::finish(std::uint64_t callId, CallResult result) {
  auto it = calls_.find(callId);
  if (it == calls_.end()) return;
  auto done = std::move(it->second.done);
  result.attempts = it->second.attempt;
  if (it->second.handshake) pending_.erase(*it->second.handshake);
  calls_.erase(it);
  done(result);
}

void RpcEndpoint::expire(const session::SessionId& id, bool server) {
  net_.schedule(linger_, [this, id, server] {
    if (server) {
      serverSessions_.erase(id);
    } else {
      clientSessions_.erase(id);
    }
  });
}

void RpcEndpoint::receive(const Datagram& d) {
  session::Frame frame;
  try {
    frame = session::decodeFrame(d.bytes);
  } catch (const Error& e) {
    net_.noteRejected(d, e.code());
    return;
  }
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, session::HandshakeHello>) onHello(d, f);
        if constexpr (std::is_same_v<F, session::HandshakeReply>) onReply(d, f);
        if constexpr (std::is_same_v<F, session::SessionRecord>) onRecord(d, f);
        if constexpr (std::is_same_v<F, session::Alert>) onAlert(d, f);
      },
      frame);
}

void RpcEndpoint::onHello(const Datagram& d, const session::HandshakeHello& hello) {
  if (!seenHellos_.insert(hello.id).second) {
    net_.noteRejected(d, ErrorCode::ReplayDetected, "handshake id seen before");
    return;
  }
  const auto credential = credential_ ? credential_() : std::nullopt;
  if (!credential || !store_) {
    net_.noteRejected(d, ErrorCode::NotEstablished, "no responder credential");
    return;
  }
  const std::string base = baseLabel(d.label, ".hello");
  try {
    auto [s, reply] = session::respond(hello, *credential, context(), rng_);
    net_.noteAccepted(d);
    const auto sid = s.id;
    auto& stored = serverSessions_.insert_or_assign(sid, ServerSession{std::move(s), d.src, base}).first->second;
    if (established_) established_(stored.s, d.src);
    net_.send(self_, d.src, base + ".reply", session::encodeFrame(reply));
    expire(sid, true);
  } catch (const session::PeerUntrusted& e) {
    net_.noteRejected(d, ErrorCode::PeerUntrusted, pki::toString(e.reason()));
    net_.send(self_, d.src, base + ".alert",
              session::encodeFrame(session::Alert{hello.id, ErrorCode::PeerUntrusted, e.reason()}));
  } catch (const Error& e) {
    net_.noteRejected(d, e.code());
  }
}

void RpcEndpoint::onReply(const Datagram& d, const session::HandshakeReply& reply) {
  const auto it = pending_.find(reply.id);
  if (it == pending_.end()) {
    net_.noteRejected(d, clientSessions_.contains(reply.id) ? ErrorCode::ReplayDetected : ErrorCode::WrongSession);
    return;
  }
  const auto callId = it->second.first;
  const auto pending = std::move(it->second.second);
  pending_.erase(it);
  auto call = calls_.find(callId);
  if (call == calls_.end()) {
    net_.noteRejected(d, ErrorCode::WrongSession, "call finished");
    return;
  }
  auto& c = call->second;
  c.handshake.reset();
  try {
    auto s = session::complete(pending, reply, context());
    net_.noteAccepted(d);
    const auto sid = s.id;
    auto& stored = clientSessions_.insert_or_assign(sid, ClientSession{std::move(s), callId}).first->second;
    if (established_) established_(stored.s, d.src);
    const auto record = session::send(stored.s, c.request);
    net_.send(self_, c.dst, c.label, session::encodeFrame(record));
    expire(sid, false);
  } catch (const session::PeerUntrusted& e) {
    net_.noteRejected(d, ErrorCode::PeerUntrusted, pki::toString(e.reason()));
    c.last.error = ErrorCode::PeerUntrusted;
    c.last.reason = e.reason();
    c.last.rejectedBy = session::Side::Initiator;
    failAttempt(callId, c.attempt);
  } catch (const Error& e) {
    net_.noteRejected(d, e.code());
    failAttempt(callId, c.attempt);
  }
}

void RpcEndpoint::onRecord(const Datagram& d, const session::SessionRecord& record) {
  if (record.fromInitiator) {
    const auto it = serverSessions_.find(record.id);
    if (it == serverSessions_.end()) {
      net_.noteRejected(d, ErrorCode::WrongSession);
      return;
    }
    auto& ss = it->second;
    Bytes payload;
    try {
      payload = session::receive(ss.s, record);
    } catch (const Error& e) {
      net_.noteRejected(d, e.code());
      return;
    }
    net_.noteAccepted(d);
    protocol::Response response;
    try {
      const auto request = protocol::decodeRequest(payload);
      const auto h = handlers_.find(request.op);
      if (h == handlers_.end()) {
        response = protocol::Response::error(ErrorCode::InvariantViolation);
      } else {
        response = h->second(Caller{ss.peer, ss.s}, request);
      }
    } catch (const Error& e) {
      response = protocol::Response::error(e.code());
    }
    if (!response.ok()) {
      net_.note("note", "actor=" + self_ + " refused=" + ss.label + " peer=" + ss.peer +
                            " status=" + std::string(ttp::toString(response.status)));
    }
    const auto out = session::send(ss.s, protocol::encode(response));
    net_.send(self_, ss.peer, ss.label + ".resp", session::encodeFrame(out));
    return;
  }

  const auto it = clientSessions_.find(record.id);
  if (it == clientSessions_.end()) {
    net_.noteRejected(d, ErrorCode::WrongSession);
    return;
  }
  Bytes payload;
  try {
    payload = session::receive(it->second.s, record);
  } catch (const Error& e) {
    net_.noteRejected(d, e.code());
    return;
  }
  net_.noteAccepted(d);
  const auto callId = it->second.call;
  if (!calls_.contains(callId)) {
    net_.note("note", "actor=" + self_ + " late_response=" + d.label);
    return;
  }
  CallResult result;
  result.peer = it->second.s.peerIdentity;
  try {
    result.response = protocol::decodeResponse(payload);
  } catch (const Error& e) {
    result.response = protocol::Response::error(e.code());
  }
  finish(callId, std::move(result));
}

void RpcEndpoint::onAlert(const Datagram& d, const session::Alert& alert) {
  const auto it = pending_.find(alert.id);
  if (it == pending_.end()) {
    net_.noteRejected(d, ErrorCode::WrongSession, "alert for no pending handshake");
    return;
  }
  const auto callId = it->second.first;
  auto& c = calls_.at(callId);
  net_.note("note", "actor=" + self_ + " alert=" + c.label + " code=" + std::string(ttp::toString(alert.code)) +
                        " reason=" + std::string(pki::toString(alert.reason)));
  c.last.error = ErrorCode::PeerUntrusted;
  c.last.reason = alert.reason;
  c.last.rejectedBy = session::Side::Responder;
  failAttempt(callId, c.attempt);
}

}  // namespace ttp::sim
