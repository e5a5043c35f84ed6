#include "ttp/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ttp/operators.hpp"
#include "ttp/protocol.hpp"
#include "ttp/rpc.hpp"

namespace ttp::scenario {

namespace {

using protocol::Op;
using protocol::Request;
using protocol::Response;
using sim::ActorId;
using sim::CallResult;
using sim::Caller;
using sim::SimTime;

constexpr SimTime kSecond = 1000;

const Uri kSp1Uri{"coaps://update.sp1.example"};
const Uri kSp2Uri{"coaps://update.sp2.example"};
const Uri kRaUri{"coaps://ra.sp2.example"};
const Uri kMalloryUri{"coaps://mallory.example"};

std::string deviceName(std::uint32_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "dev-%03u", i);
  return buf;
}

Response okBody(Bytes body) { return Response{ErrorCode::None, std::move(body)}; }

const CompactCertificate& peerOf(const Caller& c) { return c.session.peerIdentity; }

void requirePeerName(const Caller& c, std::string_view name) {
  if (ttp::toString(peerOf(c).subjectName) != name) {
    throw Error(ErrorCode::PeerUntrusted, "expected " + std::string(name));
  }
}

class World;

class Participant : public sim::Actor {
 public:
  Participant(World& w, ActorId id);
  void receive(const sim::Datagram& d) override { rpc.receive(d); }

  World& world;
  ActorId id;
  sim::RpcEndpoint rpc;
};

class CaActor : public Participant {
 public:
  CaActor(World& w, ActorId id, pki::CertificateAuthority& ca);
  pki::CertificateAuthority& ca;
  session::Credential credential;
  Rng rng;
};

class Sp1Actor : public Participant {
 public:
  Sp1Actor(World& w);
  void prepare();
  void startTransfer();
  void onTransferMessage(const SignedEnvelope& env);
  void relay(const std::string& device);
  void revoke(const std::string& device, std::string_view why);

  operators::OperatorState op;
  session::Credential credential;
  operators::RaVerifier fallbackVerifier;
  std::map<std::uint64_t, Bytes> images;
  std::optional<operators::FirmwareRelease> lastRelease;
  std::optional<SignedEnvelope> sp2Envelope;
  std::map<std::string, SignedEnvelope> relayed;
  std::set<std::string> revoked;
  std::set<std::string> acked;
  std::set<Bytes> seenKeys;
  std::set<crypto::Digest> fingerprints;
  Rng rng;
};

class Sp2Actor : public Participant {
 public:
  Sp2Actor(World& w);
  void prepareTransfer();
  void buildAndSend(const Uri& enrollUri);
  void sendTransfer();
  void injectDirect();

  operators::OperatorState op;
  session::Credential credential;
  std::optional<UpdateInfoList> list;
  std::optional<SignedEnvelope> envelope;
};

class RaActor : public Participant {
 public:
  RaActor(World& w);
  session::Credential credential;
  operators::RaVerifier verifier;
  Rng rng;
};

enum class EnrollPurpose : std::uint8_t { Initial, PostReset, Renewal };

class DeviceActor : public Participant {
 public:
  DeviceActor(World& w, std::uint32_t index, device::Device dev);

  void boot();
  void enroll(EnrollPurpose purpose);
  void onEnrolled(const CallResult& r, EnrollPurpose purpose, bool serverKey);
  void scheduleRenewal();
  void checkin();
  void reset();
  void postReset();
  void attest(const Uri& target, bool fallbackMode);
  void updateQuery();
  void fallback(ErrorCode reason);
  void contactFallback();
  void logPhases();

  Response onTransferNotice(const Caller& c, const Request& req);

  std::uint32_t index;
  device::Device dev;
  Rng rng;
  std::size_t loggedPhases = 1;
  bool resetScheduled = false;
  std::optional<SimTime> updateDoneAt;
  std::optional<SimTime> reenrollStartAt;
  std::vector<crypto::Digest> postReenrollSessions;
};

class MalloryActor : public Participant {
 public:
  MalloryActor(World& w);
  void forge(const ActorId& target);
  void probeNameMismatch();
  void probeOldCredential();

  session::Credential serverCredential;
  session::Credential factoryCredential;
  crypto::KeyPair signingKey;
  Rng rng;
};

class World {
 public:
  explicit World(const ScenarioConfig& config, std::uint64_t seed);

  ScenarioResult run();

  SimTime now() const { return net.now(); }
  TimeStamp clock() const { return net.clock(); }
  sim::CallOptions options() const { return {cfg.timing.attempts, cfg.timing.attemptTimeoutMs}; }
  SimTime round() const { return cfg.timing.retryRound * kSecond; }
  SimTime windowEnd() const { return (cfg.timing.transferStart + cfg.timing.windowLength) * kSecond; }
  SimTime horizon() const { return cfg.timing.horizon * kSecond; }
  /// Schedules `fn` one retry round from now if that is before `deadline`.
  bool retryLater(SimTime deadline, std::string_view what, std::function<void()> fn);
  void note(const std::string& body) { net.note("note", body); }
  void size(const std::string& key, std::size_t bytes) {
    net.note("size", "class=" + key + " bytes=" + std::to_string(bytes));
  }
  void probe(const std::string& name, bool refused, const std::string& detail);

  std::vector<CompactCertificate> rootsFor(const std::set<pki::CaRole>& roles) const;
  session::Credential issueServer(pki::CaRole role, const std::string& name);
  Bytes expectedStateDigest(const std::string& device) const;

  ScenarioConfig cfg;
  Rng rng;
  sim::Trace trace;
  sim::Network net;
  pki::HierarchyConfig h;
  pki::TrustStore serverStore;
  pki::RevocationView revocations;
  std::set<pki::CaRole> preEnroll;
  std::set<pki::CaRole> pushedRoles;
  std::set<std::string> agreedRoots;
  VersionInfo factoryFirmware{1, Uri("coaps://fw.sp1.example/m/1")};
  Bytes factoryImage = crypto::digestBytes(toBytes("firmware-image-1"));

  std::unique_ptr<sim::AdversaryState> adversary;
  std::unique_ptr<CaActor> ca1;
  std::unique_ptr<CaActor> ca2;
  std::unique_ptr<Sp1Actor> sp1;
  std::unique_ptr<Sp2Actor> sp2;
  std::unique_ptr<RaActor> ra;
  std::unique_ptr<MalloryActor> mallory;
  std::vector<std::unique_ptr<DeviceActor>> devices;

  std::optional<session::Credential> capturedOldCredential;
  std::vector<std::string> stateViolations;
  std::map<std::string, ProbeOutcome> probes;
};

// --- participants -------------------------------------------------------------

Participant::Participant(World& w, ActorId actorId) : world(w), id(actorId), rpc(w.net, actorId, w.rng.fork()) {
  w.net.attach(id, *this);
  rpc.setLinger(w.cfg.timing.sessionLingerMs);
}

CaActor::CaActor(World& w, ActorId actorId, pki::CertificateAuthority& authority)
    : Participant(w, actorId), ca(authority), rng(w.rng.fork()) {
  credential = w.issueServer(actorId == "ca1" ? pki::CaRole::Ca1 : pki::CaRole::Ca2, actorId);
  rpc.setCredential([this] { return std::optional(credential); });
  rpc.setTrust([this]() -> const pki::TrustStore& { return world.serverStore; }, &w.revocations);
  w.net.bindUri(ca.enrollUri(), id);

  rpc.handle(Op::Enroll, [this](const Caller& c, const Request& req) {
    const auto csr = decode<CertificateSigningRequest>(req.body);
    const auto cert = ca.enroll(peerOf(c), csr, world.clock());
    world.note("actor=" + id + " issued=" + ttp::toString(cert.subjectName) + " serial=" + std::to_string(cert.serial));
    return okBody(protocol::encode(protocol::EnrollResult{cert, ca.chain(), std::nullopt}));
  });
  rpc.handle(Op::EnrollServerKey, [this](const Caller& c, const Request&) {
    auto [key, cert] = ca.enrollWithServerKey(peerOf(c), rng, world.clock());
    world.note("actor=" + id + " issued=" + ttp::toString(cert.subjectName) + " serial=" + std::to_string(cert.serial) +
               " keygen=server");
    return okBody(protocol::encode(protocol::EnrollResult{cert, ca.chain(), key.privateKey}));
  });
  rpc.handle(Op::RegisterFactoryCerts, [this](const Caller& c, const Request& req) {
    pki::requireProfile(peerOf(c), CertProfile::Server);
    const auto list = decode<UpdateInfoList>(req.body);
    try {
      const Uri uri = ca.registerFactoryCerts(list, world.clock());
      world.note("actor=" + id + " registered=" + std::to_string(list.entries.size()));
      return okBody(toBytes(uri.str()));
    } catch (const pki::UnverifiableFactoryCert& e) {
      throw Error(ErrorCode::RegistrationFailed, e.what());
    }
  });
}

// --- SP1 ------------------------------------------------------------------------

Sp1Actor::Sp1Actor(World& w)
    : Participant(w, "sp1"), op("sp1", crypto::generateKeyPair(w.rng.seed32()), kSp1Uri), rng(w.rng.fork()) {
  credential = w.issueServer(pki::CaRole::Ca1, "sp1");
  rpc.setCredential([this] { return std::optional(credential); });
  rpc.setTrust([this]() -> const pki::TrustStore& { return world.serverStore; }, &w.revocations);
  rpc.onEstablished([this](const session::AuthenticatedSession& s, const ActorId&) {
    fingerprints.insert(s.sessionKeyFingerprint);
    seenKeys.insert(s.peerIdentity.subjectPublicKey);
  });
  w.net.bindUri(kSp1Uri, id);
  images[w.factoryFirmware.manifestSequence] = w.factoryImage;

  rpc.handle(Op::Checkin, [this](const Caller& c, const Request& req) {
    const auto& peer = peerOf(c);
    pki::requireProfile(peer, CertProfile::Operational);
    const auto version = decode<VersionInfo>(req.body);
    op.recordVersion(peer.subjectName, version);
    std::optional<operators::FirmwareRelease> update;
    if (op.release() && op.release()->version.manifestSequence > version.manifestSequence) update = op.release();
    return okBody(protocol::encode(protocol::CheckinResult{op.signingKey().publicKey, update}));
  });
  rpc.handle(Op::FallbackContact, [this](const Caller& c, const Request&) {
    const auto& peer = peerOf(c);
    pki::requireProfile(peer, CertProfile::Factory);
    op.managed(peer.subjectName);
    world.note("actor=sp1 fallback_contact=" + ttp::toString(peer.subjectName));
    return okBody(protocol::encodeBool(world.cfg.options.fallbackRa));
  });
  rpc.handle(Op::RaChallenge, [this](const Caller& c, const Request&) {
    return okBody(fallbackVerifier.challenge(peerOf(c).subjectName, rng));
  });
  rpc.handle(Op::RaEvidence, [this](const Caller& c, const Request& req) {
    const auto ev = protocol::decodeRaEvidence(req.body);
    operators::RaExchange ex{ev.nonce, peerOf(c).subjectName, ev.measurement};
    const bool verdict = fallbackVerifier.verify(ex);
    world.note("actor=sp1 fallback_ra=" + ttp::toString(peerOf(c).subjectName) + " verdict=" + (verdict ? "1" : "0"));
    return okBody(protocol::encodeBool(verdict));
  });
  rpc.handle(Op::DeliverTransferMessage, [this](const Caller& c, const Request& req) {
    requirePeerName(c, "sp2");
    const auto env = decode<SignedEnvelope>(req.body);
    if (sp2Envelope) {
      if (*sp2Envelope == env) return okBody({});
      throw Error(ErrorCode::InvariantViolation, "a different transfer message was already accepted");
    }
    const Bytes* key = op.peerSigner("sp2");
    if (!key || !crypto::verifyEnvelope(*key, env)) throw Error(ErrorCode::BadSp2Signature);
    sp2Envelope = env;
    world.net.schedule(0, [this, env] { onTransferMessage(env); });
    return okBody({});
  });
}

void Sp1Actor::prepare() {
  const auto& cfg = world.cfg;
  if (cfg.options.lastSp1Update) {
    operators::FirmwareRelease rel{VersionInfo{2, Uri("coaps://fw.sp1.example/m/2")},
                                   crypto::digestBytes(toBytes("firmware-image-2"))};
    images[2] = rel.imageDigest;
    op.setRelease(rel);
    lastRelease = rel;
  }
  const auto roots = world.rootsFor(world.pushedRoles);
  const SimTime deadline = cfg.timing.transferStart * kSecond;
  for (const auto& [idBytes, _] : op.managedDevices()) {
    const std::string dev = ttp::toString(idBytes);
    auto pushTrust = std::make_shared<std::function<void()>>();
    *pushTrust = [this, dev, roots, deadline, pushTrust] {
      if (roots.empty()) return;
      const Request req{Op::TrustUpdate, protocol::encode(protocol::TrustUpdate{roots, true})};
      rpc.call(dev, credential, req, world.options(), [this, dev, deadline, pushTrust](const CallResult& r) {
        if (r.ok()) {
          world.note("actor=sp1 trust_update=" + dev);
        } else if (r.error != ErrorCode::None) {
          world.retryLater(deadline, "trust_update " + dev, *pushTrust);
        }
      });
    };
    if (!lastRelease) {
      (*pushTrust)();
      continue;
    }
    auto pushUpdate = std::make_shared<std::function<void()>>();
    *pushUpdate = [this, dev, deadline, pushTrust, pushUpdate] {
      const Request req{Op::UpdatePush, protocol::encodeRelease(lastRelease)};
      rpc.call(dev, credential, req, world.options(), [this, dev, deadline, pushTrust, pushUpdate](const CallResult& r) {
        if (r.ok()) {
          op.recordVersion(toBytes(dev), decode<VersionInfo>(r.response.body));
          world.note("actor=sp1 update_push=" + dev);
          (*pushTrust)();
        } else if (r.error != ErrorCode::None) {
          world.retryLater(deadline, "update_push " + dev, *pushUpdate);
        }
      });
    };
    (*pushUpdate)();
  }
}

void Sp1Actor::startTransfer() {
  std::vector<Bytes> ids;
  for (const auto& [idBytes, _] : op.managedDevices()) ids.push_back(idBytes);

  for (const auto& idBytes : ids) {
    const Bytes expected = world.expectedStateDigest(ttp::toString(idBytes));
    world.ra->verifier.expect(idBytes, expected);
    fallbackVerifier.expect(idBytes, expected);
  }
  world.note("actor=sp1 shared_measurements=" + std::to_string(ids.size()));

  const auto list = operators::sp1UpdateInfoList(op, ids);
  const auto env = operators::sp1BuildUpdateInfoList(op, ids);
  world.size("update_info_list.payload", env.payload.size());
  world.size("update_info_list.signed", encode(env).size());
  world.size("device_update_info", encode(list.entries.front()).size());
  for (const auto n : world.cfg.updateInfoListCounts) {
    const auto sub = operators::sp1BuildUpdateInfoList(op, std::span<const Bytes>(ids.data(), n));
    const std::string key = "update_info_list(" + std::to_string(n) + ")";
    world.size(key + ".payload", sub.payload.size());
    world.size(key + ".signed", encode(sub).size());
  }

  world.net.schedule(world.windowEnd() - world.now(), [this, ids] {
    for (const auto& idBytes : ids) revoke(ttp::toString(idBytes), "window_closed");
  });

  auto send = std::make_shared<std::function<void()>>();
  const Request req{Op::DeliverUpdateInfoList, encode(env)};
  *send = [this, req, send] {
    rpc.call("sp2", credential, req, world.options(), [this, send](const CallResult& r) {
      if (r.ok()) {
        world.note("actor=sp1 update_info_list=delivered");
      } else if (r.error != ErrorCode::None) {
        world.retryLater(world.windowEnd(), "update_info_list", *send);
      } else {
        world.note("actor=sp1 update_info_list=refused status=" + std::string(ttp::toString(r.response.status)));
      }
    });
  };
  (*send)();
}

void Sp1Actor::onTransferMessage(const SignedEnvelope& env) {
  world.note("actor=sp1 transfer_message=accepted");
  for (const auto& [idBytes, _] : op.managedDevices()) {
    const std::string dev = ttp::toString(idBytes);
    try {
      relayed[dev] = operators::sp1RelayTransfer(op, "sp2", env, idBytes);
    } catch (const Error& e) {
      world.note("actor=sp1 relay=" + dev + " error=" + std::string(ttp::toString(e.code())));
      continue;
    }
    world.size("transfer_message.relayed.payload", relayed[dev].payload.size());
    world.size("transfer_message.relayed", encode(relayed[dev]).size());
    relay(dev);
  }
}

void Sp1Actor::relay(const std::string& dev) {
  const Request req{Op::TransferNotice, encode(relayed.at(dev))};
  rpc.call(dev, credential, req, world.options(), [this, dev](const CallResult& r) {
    if (r.ok()) {
      acked.insert(dev);
      revoke(dev, "ack");
    } else if (r.error != ErrorCode::None) {
      world.retryLater(world.windowEnd(), "transfer_notice " + dev, [this, dev] {
        if (!acked.contains(dev)) relay(dev);
      });
    } else {
      world.note("actor=sp1 transfer_notice=" + dev + " refused=" + std::string(ttp::toString(r.response.status)));
    }
  });
}

void Sp1Actor::revoke(const std::string& dev, std::string_view why) {
  if (!revoked.insert(dev).second) return;
  const auto serials = world.h.ca1->revokeSubject(toBytes(dev));
  world.note("actor=ca1 revoke=" + dev + " serials=" + std::to_string(serials.size()) + " cause=" + std::string(why));
}

// --- SP2 ------------------------------------------------------------------------

Sp2Actor::Sp2Actor(World& w) : Participant(w, "sp2"), op("sp2", crypto::generateKeyPair(w.rng.seed32()), kSp2Uri) {
  credential = w.issueServer(pki::CaRole::Ca2, "sp2");
  rpc.setCredential([this] { return std::optional(credential); });
  rpc.setTrust([this]() -> const pki::TrustStore& { return world.serverStore; }, &w.revocations);
  w.net.bindUri(kSp2Uri, id);
  op.setRelease(operators::FirmwareRelease{VersionInfo{7, Uri("coaps://fw.sp2.example/m/7")},
                                           crypto::digestBytes(toBytes("firmware-image-sp2-7"))});

  rpc.handle(Op::DeliverUpdateInfoList, [this](const Caller& c, const Request& req) {
    requirePeerName(c, "sp1");
    const auto env = decode<SignedEnvelope>(req.body);
    auto accepted = operators::sp2AcceptUpdateInfoList(op, "sp1", env);
    if (list) {
      if (*list == accepted) return okBody({});
      throw Error(ErrorCode::InvariantViolation, "a different update list was already accepted");
    }
    for (const auto& e : accepted.entries) {
      op.manage(e.factoryCertificate.subjectName, operators::ManagedDevice{e.factoryCertificate, e.versionInfo,
                                                                           e.updateTimeNotBefore, e.updateTimeNotAfter});
    }
    list = std::move(accepted);
    world.net.schedule(0, [this] { prepareTransfer(); });
    return okBody({});
  });
  rpc.handle(Op::Checkin, [this](const Caller& c, const Request& req) {
    const auto& peer = peerOf(c);
    pki::requireProfile(peer, CertProfile::Operational);
    const auto version = decode<VersionInfo>(req.body);
    return okBody(protocol::encode(
        protocol::CheckinResult{op.signingKey().publicKey, operators::updateServerServe(op, peer, version)}));
  });
  rpc.handle(Op::UpdateQuery, [this](const Caller& c, const Request& req) {
    const auto version = decode<VersionInfo>(req.body);
    return okBody(protocol::encodeRelease(operators::updateServerServe(op, peerOf(c), version)));
  });
}

void Sp2Actor::prepareTransfer() {
  if (world.cfg.faults.skipCa2Registration) {
    world.note("actor=sp2 fault=skip_ca2_registration");
    buildAndSend(world.h.ca2->enrollUri());
    return;
  }
  const Request req{Op::RegisterFactoryCerts, encode(*list)};
  rpc.call("ca2", credential, req, world.options(), [this](const CallResult& r) {
    if (r.ok()) {
      buildAndSend(Uri(ttp::toString(r.response.body)));
    } else if (r.error != ErrorCode::None) {
      world.retryLater(world.windowEnd(), "register_factory_certs", [this] { prepareTransfer(); });
    } else {
      world.note("actor=sp2 registration=failed status=" + std::string(ttp::toString(r.response.status)));
    }
  });
}

void Sp2Actor::buildAndSend(const Uri& enrollUri) {
  operators::TransferOptions opts;
  if (world.cfg.options.useRa) opts.raUri = kRaUri;
  opts.contactBeforeEnroll = world.cfg.options.contactUpdateBeforeEnroll;
  envelope = operators::sp2BuildTransferMessage(op, *list, enrollUri, opts);
  world.size("transfer_message.payload", envelope->payload.size());
  world.size("transfer_message.cwt", encode(*envelope).size());
  sendTransfer();
}

void Sp2Actor::sendTransfer() {
  const Request req{Op::DeliverTransferMessage, encode(*envelope)};
  rpc.call("sp1", credential, req, world.options(), [this](const CallResult& r) {
    if (r.ok()) {
      world.note("actor=sp2 transfer_message=delivered");
    } else if (r.error != ErrorCode::None) {
      world.retryLater(world.windowEnd(), "transfer_message", [this] { sendTransfer(); });
    } else {
      world.note("actor=sp2 transfer_message=refused status=" + std::string(ttp::toString(r.response.status)));
    }
  });
}

void Sp2Actor::injectDirect() {
  if (!envelope) return;
  const Request req{Op::TransferNotice, encode(*envelope)};
  for (const auto& d : world.devices) {
    rpc.call(d->id, credential, req, world.options(), [this](const CallResult& r) {
      world.probe("sp2_direct", !r.ok(), std::string(ttp::toString(r.failure())));
    });
  }
}

// --- RA verifier ----------------------------------------------------------------

RaActor::RaActor(World& w) : Participant(w, "ra"), rng(w.rng.fork()) {
  credential = w.issueServer(pki::CaRole::Ca2, "ra");
  rpc.setCredential([this] { return std::optional(credential); });
  rpc.setTrust([this]() -> const pki::TrustStore& { return world.serverStore; }, &w.revocations);
  w.net.bindUri(kRaUri, id);
  rpc.handle(Op::RaChallenge, [this](const Caller& c, const Request&) {
    pki::requireProfile(peerOf(c), CertProfile::Factory);
    return okBody(verifier.challenge(peerOf(c).subjectName, rng));
  });
  rpc.handle(Op::RaEvidence, [this](const Caller& c, const Request& req) {
    const auto ev = protocol::decodeRaEvidence(req.body);
    operators::RaExchange ex{ev.nonce, peerOf(c).subjectName, ev.measurement};
    const bool verdict = verifier.verify(ex);
    world.note("actor=ra device=" + ttp::toString(peerOf(c).subjectName) + " verdict=" + (verdict ? "1" : "0"));
    return okBody(protocol::encodeBool(verdict));
  });
}

// --- devices --------------------------------------------------------------------

DeviceActor::DeviceActor(World& w, std::uint32_t i, device::Device d)
    : Participant(w, deviceName(i)), index(i), dev(std::move(d)), rng(w.rng.fork()) {
  // After the reset the device only initiates; nothing reaches it through SP1.
  rpc.setCredential([this]() -> std::optional<session::Credential> {
    const auto p = dev.phase();
    if (p != device::Phase::Enrolled && p != device::Phase::TransferPending) return std::nullopt;
    return dev.operationalCredential();
  });
  rpc.setTrust([this]() -> const pki::TrustStore& { return dev.trustStore(); }, nullptr);
  rpc.onEstablished([this](const session::AuthenticatedSession& s, const ActorId&) {
    if (dev.phase() == device::Phase::Reenrolled) postReenrollSessions.push_back(s.sessionKeyFingerprint);
  });

  rpc.handle(Op::TrustUpdate, [this](const Caller& c, const Request& req) {
    requirePeerName(c, "sp1");
    if (dev.phase() != device::Phase::Enrolled) throw Error(ErrorCode::WrongPhase);
    const auto tu = protocol::decodeTrustUpdate(req.body);
    for (const auto& root : tu.roots) dev.addTrustedRoot(root, tu.persistAcrossReset);
    return okBody({});
  });
  rpc.handle(Op::UpdatePush, [this](const Caller& c, const Request& req) {
    requirePeerName(c, "sp1");
    if (const auto rel = protocol::decodeRelease(req.body);
        rel && rel->version.manifestSequence > dev.firmware().manifestSequence) {
      dev.applyFirmware(rel->version, rel->imageDigest);
    }
    return okBody(encode(dev.firmware()));
  });
  rpc.handle(Op::TransferNotice, [this](const Caller& c, const Request& req) { return onTransferNotice(c, req); });
}

void DeviceActor::logPhases() {
  const auto& h = dev.history();
  for (; loggedPhases < h.size(); ++loggedPhases) {
    world.net.note("phase", "device=" + id + " to=" + std::string(device::toString(h[loggedPhases])));
  }
}

void DeviceActor::boot() { enroll(EnrollPurpose::Initial); }

void DeviceActor::enroll(EnrollPurpose purpose) {
  const auto& caUri = dev.endpoints().caUri;
  if (!caUri) return;
  if (purpose == EnrollPurpose::PostReset) reenrollStartAt = world.now();
  const bool serverKey = world.cfg.options.serverSideKeygen;
  Request req{Op::Enroll, {}};
  if (serverKey) {
    req.op = Op::EnrollServerKey;
  } else {
    req.body = encode(dev.beginEnrollment(rng));
  }
  ActorId target;
  try {
    target = world.net.resolve(*caUri);
  } catch (const Error&) {
    if (purpose == EnrollPurpose::PostReset) fallback(ErrorCode::EnrollRejected);
    return;
  }
  rpc.call(target, dev.factoryCredential(), req, world.options(),
           [this, purpose, serverKey](const CallResult& r) { onEnrolled(r, purpose, serverKey); });
}

void DeviceActor::onEnrolled(const CallResult& r, EnrollPurpose purpose, bool serverKey) {
  ErrorCode failure = r.failure();
  if (r.ok()) {
    try {
      const auto er = protocol::decodeEnrollResult(r.response.body);
      if (serverKey) {
        if (!er.serverGeneratedKey || er.serverGeneratedKey->size() < crypto::kSeedLength) {
          throw Error(ErrorCode::EnrollRejected, "no key material");
        }
        const BytesView seed(er.serverGeneratedKey->data(), crypto::kSeedLength);
        dev.installServerGeneratedKey(crypto::generateKeyPair(seed), er.certificate, er.chain, world.clock());
      } else {
        dev.completeEnrollment(er.certificate, er.chain, world.clock());
      }
      failure = ErrorCode::None;
    } catch (const Error& e) {
      failure = e.code();
    }
  }
  logPhases();
  if (failure == ErrorCode::None) {
    world.note("device=" + id + " enrolled issuer=" + ttp::toString(dev.operationalCertificate()->issuerName) +
               " serial=" + std::to_string(dev.operationalCertificate()->serial));
    scheduleRenewal();
    if (purpose != EnrollPurpose::Renewal) checkin();
    return;
  }
  world.note("device=" + id + " enroll_failed=" + std::string(ttp::toString(failure)));
  switch (purpose) {
    case EnrollPurpose::Initial:
      world.retryLater(world.horizon(), "enroll " + id, [this] {
        if (dev.phase() == device::Phase::Provisioned) enroll(EnrollPurpose::Initial);
      });
      break;
    case EnrollPurpose::PostReset:
      fallback(failure == ErrorCode::PeerUntrusted || failure == ErrorCode::Timeout ? failure
                                                                                     : ErrorCode::EnrollRejected);
      break;
    case EnrollPurpose::Renewal: break;
  }
}

void DeviceActor::scheduleRenewal() {
  const auto cert = *dev.operationalCertificate();
  const SimTime lifetime = (cert.notAfter.seconds - cert.notBefore.seconds) * kSecond;
  const SimTime at = world.now() + lifetime * 4 / 5;
  if (at >= world.horizon()) return;
  world.net.schedule(at - world.now(), [this, cert] {
    const auto& current = dev.operationalCertificate();
    const auto phase = dev.phase();
    if (!current || *current != cert) return;
    if (phase != device::Phase::Enrolled && phase != device::Phase::Reenrolled) return;
    world.note("device=" + id + " renewal");
    enroll(EnrollPurpose::Renewal);
  });
}

void DeviceActor::checkin() {
  const auto cred = dev.operationalCredential();
  const auto& uri = dev.endpoints().updateUri;
  if (!cred || !uri) return;
  const Request req{Op::Checkin, encode(dev.firmware())};
  rpc.call(world.net.resolve(*uri), *cred, req, world.options(), [this](const CallResult& r) {
    if (!r.ok()) {
      world.note("device=" + id + " checkin_failed=" + std::string(ttp::toString(r.failure())));
      if (dev.phase() == device::Phase::Enrolled && !dev.transferSigner()) {
        world.retryLater(world.horizon(), "checkin " + id, [this] {
          if (dev.phase() == device::Phase::Enrolled) checkin();
        });
      }
      return;
    }
    const auto result = protocol::decodeCheckinResult(r.response.body);
    dev.configureTransferSigner(result.transferSignerKey);
    if (result.update && result.update->version.manifestSequence > dev.firmware().manifestSequence) {
      dev.applyFirmware(result.update->version, result.update->imageDigest);
      world.note("device=" + id + " updated seq=" + std::to_string(dev.firmware().manifestSequence) + " via=checkin");
    }
    world.note("device=" + id + " checkin=" + ttp::toString(r.peer->subjectName));
  });
}

Response DeviceActor::onTransferNotice(const Caller&, const Request& req) {
  const auto env = decode<SignedEnvelope>(req.body);
  if (dev.pendingEnvelope() && *dev.pendingEnvelope() == env) return okBody({});
  dev.handleTransferMessage(env, world.clock());
  logPhases();
  if (!resetScheduled) {
    resetScheduled = true;
    const SimTime earliest = sim::fromTimeStamp(dev.pendingTransfer()->resetTimeNotBefore);
    const SimTime at = std::max(world.now() + world.cfg.timing.rebootDelay * kSecond, earliest);
    world.net.schedule(at - world.now(), [this] { reset(); });
  }
  return okBody({});
}

void DeviceActor::reset() {
  if (index == 0 && world.cfg.probes.oldCredentialAtSp1) world.capturedOldCredential = dev.operationalCredential();
  try {
    dev.resetToAgreedState(world.clock());
  } catch (const Error& e) {
    world.note("device=" + id + " reset_failed=" + std::string(ttp::toString(e.code())));
    fallback(e.code());
    return;
  }
  logPhases();
  const auto& relayed = world.sp1->relayed;
  if (const auto it = relayed.find(id); it != relayed.end()) {
    device::AgreedState agreed{world.sp1->op.managed(dev.id()).factoryCertificate,
                               world.sp1->op.managed(dev.id()).version, world.agreedRoots,
                               decode<TransferMessage>(it->second.payload)};
    for (const auto& v : dev.auditAgainst(agreed)) world.stateViolations.push_back(id + ": " + v);
  } else {
    world.stateViolations.push_back(id + ": reset without a relayed transfer message");
  }
  postReset();
}

void DeviceActor::postReset() {
  switch (dev.nextPostResetStep()) {
    case device::PostResetStep::Attest: attest(*dev.endpoints().raUri, false); break;
    case device::PostResetStep::Update: updateQuery(); break;
    case device::PostResetStep::Enroll: enroll(EnrollPurpose::PostReset); break;
    case device::PostResetStep::Done: break;
  }
}

void DeviceActor::attest(const Uri& target, bool fallbackMode) {
  const ActorId server = world.net.resolve(target);
  rpc.call(server, dev.factoryCredential(), Request{Op::RaChallenge, {}}, world.options(),
           [this, server, fallbackMode](const CallResult& r) {
             if (!r.ok()) {
               if (!fallbackMode) fallback(r.failure());
               return;
             }
             const Bytes nonce = r.response.body;
             const Request evidence{Op::RaEvidence, protocol::encode(protocol::RaEvidence{nonce, dev.attest(nonce)})};
             rpc.call(server, dev.factoryCredential(), evidence, world.options(),
                      [this, fallbackMode](const CallResult& v) {
                        const bool verdict = v.ok() && protocol::decodeBool(v.response.body);
                        if (fallbackMode) {
                          world.note("device=" + id + " fallback_ra=" + (verdict ? "1" : "0"));
                          return;
                        }
                        if (!v.ok()) {
                          fallback(v.failure());
                        } else if (!verdict) {
                          fallback(ErrorCode::AttestationFailed);
                        } else {
                          dev.markAttested();
                          logPhases();
                          postReset();
                        }
                      });
           });
}

void DeviceActor::updateQuery() {
  const Request req{Op::UpdateQuery, encode(dev.firmware())};
  rpc.call(world.net.resolve(*dev.endpoints().updateUri), dev.factoryCredential(), req, world.options(),
           [this](const CallResult& r) {
             if (!r.ok()) {
               fallback(r.failure());
               return;
             }
             if (const auto rel = protocol::decodeRelease(r.response.body)) {
               dev.applyFirmware(rel->version, rel->imageDigest);
             }
             updateDoneAt = world.now();
             dev.markUpdated();
             logPhases();
             postReset();
           });
}

void DeviceActor::fallback(ErrorCode reason) {
  if (dev.phase() == device::Phase::Fallback) return;
  dev.enterFallback(reason);
  logPhases();
  world.note("device=" + id + " fallback_reason=" + std::string(ttp::toString(reason)));
  contactFallback();
}

void DeviceActor::contactFallback() {
  std::optional<Uri> uri = dev.endpoints().fallbackUri;
  if (!uri && dev.pendingTransfer()) uri = dev.pendingTransfer()->fallbackUri;
  if (!uri) {
    world.note("device=" + id + " fallback_contact=unreachable");
    return;
  }
  sim::CallOptions opts = world.options();
  opts.attempts = world.cfg.timing.fallbackAttempts;
  rpc.call(world.net.resolve(*uri), dev.factoryCredential(), Request{Op::FallbackContact, {}}, opts,
           [this, uri](const CallResult& r) {
             if (!r.ok()) {
               world.retryLater(world.horizon(), "fallback_contact " + id, [this] { contactFallback(); });
               return;
             }
             dev.markFallbackContacted();
             world.note("device=" + id + " fallback_contact=ok");
             if (protocol::decodeBool(r.response.body)) attest(*uri, true);
           });
}

// --- insider adversary ----------------------------------------------------------

MalloryActor::MalloryActor(World& w)
    : Participant(w, "mallory"), signingKey(crypto::generateKeyPair(w.rng.seed32())), rng(w.rng.fork()) {
  serverCredential = w.issueServer(pki::CaRole::Ca1, "mallory");
  const auto factoryKey = crypto::generateKeyPair(w.rng.seed32());
  const auto factoryCert = w.h.permanent->issueDirect(toBytes("mallory-dev"), factoryKey.publicKey,
                                                      CertProfile::Factory, {TimeStamp{0}, TimeStamp{4'000'000'000ULL}});
  factoryCredential = session::Credential{factoryKey, factoryCert, {}};
  rpc.setCredential([this] { return std::optional(serverCredential); });
  rpc.setTrust([this]() -> const pki::TrustStore& { return world.serverStore; }, nullptr);
  w.net.bindUri(kMalloryUri, id);
}

void MalloryActor::forge(const ActorId& target) {
  const auto nb = world.clock();
  const TransferMessage tm{nb, TimeStamp{nb.seconds + world.cfg.timing.windowLength}, std::nullopt,
                           UpdateEndpoint{kMalloryUri, false}, kMalloryUri, kMalloryUri};
  const auto env = crypto::signEnvelope(signingKey, EnvelopeProfile::Cwt, encode(tm));
  rpc.call(target, serverCredential, Request{Op::TransferNotice, encode(env)}, world.options(),
           [this](const CallResult& r) {
             world.probe("forged_cwt", r.failure() == ErrorCode::BadSignature, std::string(ttp::toString(r.failure())));
           });
}

void MalloryActor::probeNameMismatch() {
  const auto key = crypto::generateKeyPair(rng.seed32());
  const auto csr = crypto::makeCsr(key, toBytes(deviceName(0)), CertProfile::Operational);
  rpc.call("ca1", factoryCredential, Request{Op::Enroll, encode(csr)}, world.options(), [this](const CallResult& r) {
    world.probe("name_mismatch", r.failure() == ErrorCode::NameMismatch, std::string(ttp::toString(r.failure())));
  });
}

void MalloryActor::probeOldCredential() {
  if (!world.capturedOldCredential) {
    world.probe("old_credential_at_sp1", false, "no credential captured");
    return;
  }
  const Request req{Op::Checkin, encode(world.factoryFirmware)};
  rpc.call("sp1", *world.capturedOldCredential, req, world.options(), [this](const CallResult& r) {
    const bool refused = r.error == ErrorCode::PeerUntrusted && r.reason == pki::ChainStatus::Revoked;
    world.probe("old_credential_at_sp1", refused,
                std::string(ttp::toString(r.failure())) + "/" + std::string(pki::toString(r.reason)));
  });
}

// --- world ----------------------------------------------------------------------

World::World(const ScenarioConfig& config, std::uint64_t seed)
    : cfg(config), rng(seed), net(trace, rng.fork(), sim::NetworkOptions{config.timing.latencyMs, config.timing.jitterMs,
                                                                       config.maxEvents}) {
  pki::HierarchyOptions hopts;
  hopts.caOptions.operationalLifetime = cfg.timing.opLifetime;
  h = pki::buildHierarchy(cfg.variant, rng, hopts);

  for (const auto role : {pki::CaRole::Permanent, pki::CaRole::Ca1, pki::CaRole::Ca2}) {
    serverStore.addRoot(h.get(h.anchorOf(role)).certificate());
  }
  revocations.track(*h.ca1);
  revocations.track(*h.ca2);
  pki::TrustStore factoryRoots;
  factoryRoots.addRoot(h.permanent->certificate());
  h.ca1->setRegistrationTrust(factoryRoots, pki::RevocationView{});
  h.ca2->setRegistrationTrust(factoryRoots, pki::RevocationView{});

  preEnroll = pki::minimalTruststore(cfg.variant, pki::TrustPhase::PreEnroll);
  auto preTransfer = cfg.preTransferTrust.value_or(pki::minimalTruststore(cfg.variant, pki::TrustPhase::PreTransfer));
  std::set<pki::CaRole> all = preEnroll;
  for (const auto r : preTransfer) {
    if (!preEnroll.contains(r)) pushedRoles.insert(r);
    all.insert(r);
  }
  for (const auto& root : rootsFor(all)) agreedRoots.insert(ttp::toString(root.subjectName));

  adversary = std::make_unique<sim::AdversaryState>(cfg.adversary, rng.fork());
  net.setAdversary(adversary.get());

  ca1 = std::make_unique<CaActor>(*this, "ca1", *h.ca1);
  ca2 = std::make_unique<CaActor>(*this, "ca2", *h.ca2);
  sp1 = std::make_unique<Sp1Actor>(*this);
  sp2 = std::make_unique<Sp2Actor>(*this);
  ra = std::make_unique<RaActor>(*this);
  mallory = std::make_unique<MalloryActor>(*this);
  sp1->op.agreePeerSigner("sp2", sp2->op.signingKey().publicKey);
  sp2->op.agreePeerSigner("sp1", sp1->op.signingKey().publicKey);

  const TimeStamp windowStart{cfg.timing.transferStart};
  const TimeStamp windowStop{cfg.timing.transferStart + cfg.timing.windowLength};
  std::vector<CompactCertificate> factoryCerts;
  for (std::uint32_t i = 0; i < cfg.deviceCount; ++i) {
    const std::string name = deviceName(i);
    auto key = crypto::generateKeyPair(rng.seed32());
    auto cert = h.permanent->issueDirect(toBytes(name), key.publicKey, CertProfile::Factory,
                                         {TimeStamp{0}, TimeStamp{4'000'000'000ULL}});
    pki::TrustStore store;
    for (const auto& root : rootsFor(preEnroll)) store.addRoot(root, true);
    device::Device d(toBytes(name), factoryFirmware, factoryImage);
    d.provisionFactory(key, cert, std::move(store), h.ca1->enrollUri(), kSp1Uri);
    sp1->op.manage(toBytes(name), operators::ManagedDevice{cert, factoryFirmware, windowStart, windowStop});
    factoryCerts.push_back(cert);
    devices.push_back(std::make_unique<DeviceActor>(*this, i, std::move(d)));
    devices.back()->logPhases();
  }
  factoryCerts.push_back(mallory->factoryCredential.certificate);
  h.ca1->registerFactoryCerts(factoryCerts, TimeStamp{0});

  net.setInjector("forged_cwt", [this](const ActorId& target) { mallory->forge(target); });
  net.setInjector("sp2_direct_cwt", [this](const ActorId&) { sp2->injectDirect(); });
}

std::vector<CompactCertificate> World::rootsFor(const std::set<pki::CaRole>& roles) const {
  std::vector<CompactCertificate> out;
  std::set<pki::CaRole> anchors;
  for (const auto r : roles) anchors.insert(h.anchorOf(r));
  for (const auto a : anchors) out.push_back(h.get(a).certificate());
  return out;
}

session::Credential World::issueServer(pki::CaRole role, const std::string& name) {
  auto& ca = h.get(role);
  auto key = crypto::generateKeyPair(rng.seed32());
  auto cert = ca.issueDirect(toBytes(name), key.publicKey, CertProfile::Server,
                             {TimeStamp{0}, TimeStamp{4'000'000'000ULL}});
  return session::Credential{std::move(key), std::move(cert), ca.chain()};
}

Bytes World::expectedStateDigest(const std::string& device) const {
  const auto& version = sp1->op.managed(toBytes(device)).version;
  const auto image = sp1->images.find(version.manifestSequence);
  const Bytes imageDigest = image == sp1->images.end() ? Bytes{} : image->second;
  return crypto::digestBytes(concat(encode(version), imageDigest));
}

bool World::retryLater(SimTime deadline, std::string_view what, std::function<void()> fn) {
  if (now() + round() >= deadline) {
    note("gave_up=" + std::string(what));
    return false;
  }
  net.schedule(round(), std::move(fn));
  return true;
}

void World::probe(const std::string& name, bool refused, const std::string& detail) {
  auto& p = probes[name];
  if (!p.ran) {
    p.name = name;
    p.ran = true;
    p.refused = true;
  }
  p.refused = p.refused && refused;
  p.detail = detail;
  net.note("probe", "name=" + name + " refused=" + (refused ? "1" : "0") + " detail=" + detail);
}

ScenarioResult World::run() {
  ScenarioResult result;
  result.name = cfg.name;

  for (auto& d : devices) {
    const SimTime at = cfg.timing.bootSpreadMs ? rng.below(cfg.timing.bootSpreadMs) : 0;
    net.schedule(at, [dp = d.get()] { dp->boot(); });
  }
  net.schedule(cfg.timing.prepareAt * kSecond, [this] { sp1->prepare(); });
  net.schedule(cfg.timing.transferStart * kSecond - 1, [this] {
    for (const auto i : cfg.faults.raTamper) {
      devices.at(i)->dev.tamperFirmwareImage();
      note("device=" + devices.at(i)->id + " fault=firmware_tampered");
    }
  });
  net.schedule(cfg.timing.transferStart * kSecond, [this] { sp1->startTransfer(); });
  if (cfg.probes.nameMismatchEnroll) {
    net.schedule(cfg.timing.prepareAt * kSecond / 2, [this] { mallory->probeNameMismatch(); });
  }
  if (cfg.probes.oldCredentialAtSp1) {
    net.schedule(windowEnd() + 10 * kSecond, [this] { mallory->probeOldCredential(); });
  }

  try {
    net.run();
    result.quiescent = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BudgetExceeded) throw;
    note(std::string("budget_exceeded=") + e.what());
    result.quiescent = false;
  }
  result.events = net.eventsProcessed();

  for (auto& d : devices) {
    DeviceOutcome o;
    o.id = d->id;
    o.phase = d->dev.phase();
    o.history = d->dev.history();
    o.fallbackReason = d->dev.fallbackReason();
    o.fallbackContacted = d->dev.fallbackContacted();
    if (d->dev.operationalCertificate()) o.operationalIssuer = ttp::toString(d->dev.operationalCertificate()->issuerName);
    o.expected = expectationFor(cfg, d->index);
    const bool reenrolled = o.phase == device::Phase::Reenrolled;
    const bool fellBack = o.phase == device::Phase::Fallback && o.fallbackContacted;
    switch (o.expected) {
      case Expectation::Reenrolled: o.met = reenrolled; break;
      case Expectation::Fallback: o.met = fellBack; break;
      case Expectation::Terminal: o.met = reenrolled || fellBack; break;
    }
    o.report = d->dev.report();

    if (!device::isLifecyclePrefix(o.history)) result.lifecycleHolds = false;
    if (reenrolled) {
      for (const auto& fp : d->postReenrollSessions) {
        if (sp1->fingerprints.contains(fp)) {
          result.forwardSecrecyViolations.push_back(o.id + ": SP1 shares a post-transfer session");
        }
      }
      if (sp1->seenKeys.contains(d->dev.operationalKey()->publicKey)) {
        result.forwardSecrecyViolations.push_back(o.id + ": SP1 has seen the new operational key");
      }
      if (cfg.options.contactUpdateBeforeEnroll &&
          !(d->updateDoneAt && d->reenrollStartAt && *d->updateDoneAt <= *d->reenrollStartAt)) {
        result.updateOrderHolds = false;
      }
    }
    net.note("result", "device=" + o.id + " phase=" + std::string(device::toString(o.phase)) +
                           " expected=" + std::string(toString(o.expected)) + " met=" + (o.met ? "1" : "0"));
    net.note("state", o.report);
    result.devices.push_back(std::move(o));
  }
  result.forwardSecrecyHolds = result.forwardSecrecyViolations.empty();
  result.stateViolations = stateViolations;
  for (auto& [_, p] : probes) result.probes.push_back(p);
  result.stats = net.stats();

  for (const auto& line : trace.lines()) {
    const auto pos = line.find(" size class=");
    if (pos == std::string::npos) continue;
    const auto rest = line.substr(pos + 12);
    const auto sp = rest.find(" bytes=");
    const std::string key = rest.substr(0, sp);
    const std::size_t bytes = std::stoul(rest.substr(sp + 7));
    result.sizes[key] = std::max(result.sizes[key], bytes);
  }

  result.seed = 0;
  result.trace = std::move(trace);
  result.traceDigest = result.trace.digest();
  return result;
}

}  // namespace

bool ScenarioResult::expectationsMet() const {
  return std::all_of(devices.begin(), devices.end(), [](const DeviceOutcome& d) { return d.met; });
}

bool ScenarioResult::securityHolds() const {
  const bool probesRefused =
      std::all_of(probes.begin(), probes.end(), [](const ProbeOutcome& p) { return !p.ran || p.refused; });
  return quiescent && stats.falseAcceptances == 0 && lifecycleHolds && forwardSecrecyHolds &&
         stateViolations.empty() && updateOrderHolds && probesRefused;
}

std::string ScenarioResult::summary() const {
  std::ostringstream os;
  std::map<std::string, int> phases;
  for (const auto& d : devices) ++phases[std::string(device::toString(d.phase))];
  os << "scenario=" << name << " seed=" << seed << " passed=" << passed() << " devices=" << devices.size();
  for (const auto& [p, n] : phases) os << " " << p << "=" << n;
  os << " events=" << events << " false_acceptances=" << stats.falseAcceptances
     << " replays_rejected=" << stats.rejected("ReplayDetected") << " lifecycle=" << lifecycleHolds
     << " forward_secrecy=" << forwardSecrecyHolds << " state_audit=" << stateViolations.empty()
     << " update_order=" << updateOrderHolds;
  for (const auto& p : probes) os << " probe." << p.name << "=" << (p.refused ? "refused" : "ACCEPTED");
  os << " digest=" << toHex(BytesView(traceDigest.data(), traceDigest.size())).substr(0, 16);
  return os.str();
}

ScenarioResult runScenario(const ScenarioConfig& config, std::optional<std::uint64_t> seedOverride) {
  validate(config);
  const std::uint64_t seed = seedOverride.value_or(config.seed);
  World world(config, seed);
  auto result = world.run();
  result.seed = seed;
  return result;
}

}  // namespace ttp::scenario
