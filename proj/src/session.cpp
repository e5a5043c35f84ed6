#include "ttp/session.hpp"

#include <algorithm>

#include "ttp/cbor.hpp"

namespace ttp::session {

namespace {

enum class FrameType : std::uint8_t { Hello = 0, Reply = 1, Record = 2, Alert = 3 };

Bytes helloSigningInput(const SessionId& id, BytesView contribution, const CompactCertificate& leaf) {
  Bytes in = toBytes("ttp-hello");
  append(in, id);
  append(in, contribution);
  append(in, crypto::digestBytes(encode(leaf)));
  return in;
}

Bytes replySigningInput(const SessionId& id, BytesView initContribution, BytesView respContribution,
                        const CompactCertificate& leaf) {
  Bytes in = toBytes("ttp-reply");
  append(in, id);
  append(in, initContribution);
  append(in, respContribution);
  append(in, crypto::digestBytes(encode(leaf)));
  return in;
}

crypto::Digest fingerprint(const SessionId& id, BytesView initContribution, BytesView respContribution,
                           const CompactCertificate& initiator, const CompactCertificate& responder) {
  Bytes in = toBytes("ttp-session-v1");
  append(in, id);
  append(in, initContribution);
  append(in, respContribution);
  append(in, encode(initiator));
  append(in, encode(responder));
  return crypto::digest(in);
}

Bytes recordTag(const AuthenticatedSession& s, bool fromInitiator, std::uint64_t seq, BytesView payload) {
  Bytes in(s.sessionKeyFingerprint.begin(), s.sessionKeyFingerprint.end());
  in.push_back(fromInitiator ? 1 : 0);
  append(in, s.id);
  for (int shift = 56; shift >= 0; shift -= 8) in.push_back(static_cast<std::uint8_t>(seq >> shift));
  append(in, payload);
  const auto d = crypto::digest(in);
  return Bytes(d.begin(), d.begin() + kTagLength);
}

/// Chain check followed by proof of possession of the leaf key.
void verifyPeer(Side side, const std::vector<CompactCertificate>& chain, BytesView signingInput,
                BytesView signature, const VerificationContext& ctx) {
  if (chain.empty()) throw PeerUntrusted(side, pki::ChainStatus::UnknownIssuer);
  const std::span<const CompactCertificate> intermediates(chain.begin() + 1, chain.end());
  const auto result = pki::verifyChain(chain.front(), intermediates, ctx.store, ctx.now, ctx.revocations);
  if (!result) throw PeerUntrusted(side, result.status);
  if (!crypto::verify(chain.front().subjectPublicKey, signingInput, signature)) {
    throw PeerUntrusted(side, pki::ChainStatus::BadSignature);
  }
}

SessionId sessionIdFrom(BytesView b) {
  if (b.size() != kSessionIdLength) throw Error(ErrorCode::MalformedEncoding, "session id must be 8 bytes");
  SessionId id{};
  std::copy(b.begin(), b.end(), id.begin());
  return id;
}

void writeChain(cbor::Writer& w, const std::vector<CompactCertificate>& chain) {
  w.array(chain.size());
  for (const auto& c : chain) write(w, c);
}

std::vector<CompactCertificate> readChain(cbor::Reader& r) {
  const std::size_t n = r.array();
  std::vector<CompactCertificate> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(read<CompactCertificate>(r));
  return out;
}

}  // namespace

std::string toHex(const SessionId& id) { return ttp::toHex(id); }

std::string_view toString(Side s) { return s == Side::Initiator ? "initiator" : "responder"; }

Bytes encodeFrame(const Frame& frame) {
  cbor::Writer w;
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, HandshakeHello>) {
          w.array(5).uint(static_cast<std::uint64_t>(FrameType::Hello)).bytes(f.id);
          writeChain(w, f.chain);
          w.bytes(f.contribution).bytes(f.signature);
        } else if constexpr (std::is_same_v<T, HandshakeReply>) {
          w.array(5).uint(static_cast<std::uint64_t>(FrameType::Reply)).bytes(f.id);
          writeChain(w, f.chain);
          w.bytes(f.contribution).bytes(f.signature);
        } else if constexpr (std::is_same_v<T, SessionRecord>) {
          w.array(6)
              .uint(static_cast<std::uint64_t>(FrameType::Record))
              .bytes(f.id)
              .boolean(f.fromInitiator)
              .uint(f.seq)
              .bytes(f.payload)
              .bytes(f.tag);
        } else {
          w.array(4)
              .uint(static_cast<std::uint64_t>(FrameType::Alert))
              .bytes(f.id)
              .uint(static_cast<std::uint64_t>(f.code))
              .uint(static_cast<std::uint64_t>(f.reason));
        }
      },
      frame);
  return std::move(w).take();
}

Frame decodeFrame(BytesView bytes) {
  cbor::Reader r(bytes);
  const std::size_t n = r.array();
  if (n == 0) throw Error(ErrorCode::MalformedEncoding, "empty frame");
  const std::uint64_t type = r.uint();
  Frame out;
  switch (static_cast<FrameType>(type)) {
    case FrameType::Hello:
    case FrameType::Reply: {
      if (n != 5) throw Error(ErrorCode::MalformedEncoding, "handshake frame must have 5 elements");
      const SessionId id = sessionIdFrom(r.bytes());
      auto chain = readChain(r);
      auto contribution = r.bytes();
      auto signature = r.bytes();
      if (static_cast<FrameType>(type) == FrameType::Hello) {
        out = HandshakeHello{id, std::move(chain), std::move(contribution), std::move(signature)};
      } else {
        out = HandshakeReply{id, std::move(chain), std::move(contribution), std::move(signature)};
      }
      break;
    }
    case FrameType::Record: {
      if (n != 6) throw Error(ErrorCode::MalformedEncoding, "record frame must have 6 elements");
      SessionRecord rec;
      rec.id = sessionIdFrom(r.bytes());
      rec.fromInitiator = r.boolean();
      rec.seq = r.uint();
      rec.payload = r.bytes();
      rec.tag = r.bytes();
      out = std::move(rec);
      break;
    }
    case FrameType::Alert: {
      if (n != 4) throw Error(ErrorCode::MalformedEncoding, "alert frame must have 4 elements");
      Alert a;
      a.id = sessionIdFrom(r.bytes());
      const auto code = r.uint();
      const auto reason = r.uint();
      if (code > static_cast<std::uint64_t>(ErrorCode::BudgetExceeded) ||
          reason > static_cast<std::uint64_t>(pki::ChainStatus::PathTooLong)) {
        throw Error(ErrorCode::MalformedEncoding, "alert code out of range");
      }
      a.code = static_cast<ErrorCode>(code);
      a.reason = static_cast<pki::ChainStatus>(reason);
      out = a;
      break;
    }
    default: throw Error(ErrorCode::MalformedEncoding, "unknown frame type " + std::to_string(type));
  }
  r.finish();
  return out;
}

PendingHandshake initiate(const Credential& initiator, Rng& rng) {
  PendingHandshake p;
  p.hello.id = sessionIdFrom(rng.bytes(kSessionIdLength));
  p.hello.chain.push_back(initiator.certificate);
  p.hello.chain.insert(p.hello.chain.end(), initiator.intermediates.begin(), initiator.intermediates.end());
  p.hello.contribution = rng.bytes(kContributionLength);
  p.hello.signature =
      crypto::sign(initiator.key, helloSigningInput(p.hello.id, p.hello.contribution, initiator.certificate));
  p.localIdentity = initiator.certificate;
  return p;
}

std::pair<AuthenticatedSession, HandshakeReply> respond(const HandshakeHello& hello, const Credential& responder,
                                                        const VerificationContext& ctx, Rng& rng) {
  if (hello.contribution.size() != kContributionLength) {
    throw PeerUntrusted(Side::Responder, pki::ChainStatus::BadSignature);
  }
  verifyPeer(Side::Responder, hello.chain,
             hello.chain.empty() ? Bytes{} : helloSigningInput(hello.id, hello.contribution, hello.chain.front()),
             hello.signature, ctx);

  HandshakeReply reply;
  reply.id = hello.id;
  reply.chain.push_back(responder.certificate);
  reply.chain.insert(reply.chain.end(), responder.intermediates.begin(), responder.intermediates.end());
  reply.contribution = rng.bytes(kContributionLength);
  reply.signature = crypto::sign(
      responder.key, replySigningInput(hello.id, hello.contribution, reply.contribution, responder.certificate));

  AuthenticatedSession s;
  s.id = hello.id;
  s.localSide = Side::Responder;
  s.localIdentity = responder.certificate;
  s.peerIdentity = hello.chain.front();
  s.peerChain = hello.chain;
  s.established = true;
  s.sessionKeyFingerprint =
      fingerprint(hello.id, hello.contribution, reply.contribution, hello.chain.front(), responder.certificate);
  return {std::move(s), std::move(reply)};
}

AuthenticatedSession complete(const PendingHandshake& pending, const HandshakeReply& reply,
                              const VerificationContext& ctx) {
  if (reply.id != pending.hello.id) throw Error(ErrorCode::WrongSession, "reply for a different handshake");
  if (reply.contribution.size() != kContributionLength) {
    throw PeerUntrusted(Side::Initiator, pki::ChainStatus::BadSignature);
  }
  verifyPeer(Side::Initiator, reply.chain,
             reply.chain.empty()
                 ? Bytes{}
                 : replySigningInput(reply.id, pending.hello.contribution, reply.contribution, reply.chain.front()),
             reply.signature, ctx);

  AuthenticatedSession s;
  s.id = reply.id;
  s.localSide = Side::Initiator;
  s.localIdentity = pending.localIdentity;
  s.peerIdentity = reply.chain.front();
  s.peerChain = reply.chain;
  s.established = true;
  s.sessionKeyFingerprint = fingerprint(reply.id, pending.hello.contribution, reply.contribution,
                                        pending.localIdentity, reply.chain.front());
  return s;
}

std::pair<AuthenticatedSession, AuthenticatedSession> establish(const Credential& initiator,
                                                                const Credential& responder,
                                                                const VerificationContext& initiatorCtx,
                                                                const VerificationContext& responderCtx, Rng& rng) {
  const auto pending = initiate(initiator, rng);
  auto [responderSession, reply] = respond(pending.hello, responder, responderCtx, rng);
  auto initiatorSession = complete(pending, reply, initiatorCtx);
  return {std::move(initiatorSession), std::move(responderSession)};
}

SessionRecord send(AuthenticatedSession& session, BytesView payload) {
  if (!session.established) throw Error(ErrorCode::NotEstablished);
  SessionRecord rec;
  rec.id = session.id;
  rec.fromInitiator = session.localSide == Side::Initiator;
  rec.seq = ++session.sendSeq;
  rec.payload.assign(payload.begin(), payload.end());
  rec.tag = recordTag(session, rec.fromInitiator, rec.seq, rec.payload);
  return rec;
}

Bytes receive(AuthenticatedSession& session, const SessionRecord& record) {
  if (!session.established) throw Error(ErrorCode::NotEstablished);
  if (record.id != session.id) throw Error(ErrorCode::WrongSession, "record for session " + toHex(record.id));
  const bool expectFromInitiator = session.localSide == Side::Responder;
  if (record.fromInitiator != expectFromInitiator) throw Error(ErrorCode::WrongSession, "reflected record");
  if (record.tag != recordTag(session, record.fromInitiator, record.seq, record.payload)) {
    throw Error(ErrorCode::IntegrityFailure, "record tag mismatch");
  }
  if (record.seq <= session.recvSeq) {
    throw Error(ErrorCode::ReplayDetected,
                "seq " + std::to_string(record.seq) + " <= last accepted " + std::to_string(session.recvSeq));
  }
  session.recvSeq = record.seq;
  return record.payload;
}

}  // namespace ttp::session
