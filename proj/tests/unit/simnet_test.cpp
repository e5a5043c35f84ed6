#include <gtest/gtest.h>

#include "ttp/pki.hpp"
#include "ttp/rpc.hpp"
#include "ttp/simnet.hpp"

namespace {

using namespace ttp;
using namespace ttp::sim;

SimEvent deliver(std::string label, Bytes payload, SimTime t = 100) {
  SimEvent e;
  e.time = t;
  e.src = "a";
  e.dst = "b";
  e.label = std::move(label);
  e.payload = std::move(payload);
  e.originUid = 1;
  return e;
}

AdversarySchedule one(Trigger t, Action a) { return AdversarySchedule{"test", {Rule{std::move(t), std::move(a)}}}; }

TEST(Glob, StarMatchesAnyRun) {
  EXPECT_TRUE(globMatch("*", ""));
  EXPECT_TRUE(globMatch("*", "transfer_notice.hello"));
  EXPECT_TRUE(globMatch("transfer_notice*", "transfer_notice.reply"));
  EXPECT_TRUE(globMatch("*.hello", "enroll.hello"));
  EXPECT_TRUE(globMatch("a*b*c", "axxbyyc"));
  EXPECT_FALSE(globMatch("a*b*c", "axxbyy"));
  EXPECT_FALSE(globMatch("enroll", "enroll.hello"));
  EXPECT_FALSE(globMatch("*.reply", "enroll.hello"));
  EXPECT_TRUE(matches(Trigger{"enroll*", "dev-*", "ca2"}, ObservedDatagram{"enroll.hello", "dev-001", "ca2", 10, 0}));
  EXPECT_FALSE(matches(Trigger{"enroll*", "dev-*", "ca2"}, ObservedDatagram{"enroll.hello", "dev-001", "ca1", 10, 0}));
}

TEST(Adversary, ReplayCopiesAreByteIdentical) {
  AdversaryState st(one({"x"}, {ActionKind::Replay, 50}), Rng(1));
  const auto e = deliver("x", toBytes("payload"));
  const auto out = adversaryApply(st, e);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FALSE(out[0].replayed);
  EXPECT_EQ(out[0].payload, e.payload);
  EXPECT_EQ(out[1].time, 150u);
  EXPECT_TRUE(out[1].replayed);
  EXPECT_EQ(out[1].payload, e.payload);
  EXPECT_EQ(out[1].originUid, e.originUid);
}

TEST(AdversaryProperty, ModifyFlipsExactlyOneByte) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng data(seed);
    AdversaryState st(one({}, {ActionKind::Modify}), Rng(seed));
    const auto e = deliver("x", data.bytes(1 + data.below(200)));
    const auto out = adversaryApply(st, e);
    ASSERT_EQ(out.size(), 1u);
    ASSERT_TRUE(out[0].tampered);
    ASSERT_EQ(out[0].payload.size(), e.payload.size());
    std::size_t diff = 0;
    for (std::size_t i = 0; i < e.payload.size(); ++i) diff += out[0].payload[i] != e.payload[i];
    ASSERT_EQ(diff, 1u) << seed;
  }
}

TEST(Adversary, DropAndMaxHitsAndZeroProbability) {
  AdversaryState drop(one({"x", "*", "*", 1.0, 2}, {ActionKind::Drop}), Rng(1));
  const auto e = deliver("x", toBytes("p"));
  for (int i = 0; i < 2; ++i) {
    const auto out = adversaryApply(drop, e);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, EventKind::Drop);
  }
  const auto third = adversaryApply(drop, e);
  ASSERT_EQ(third.size(), 1u);
  EXPECT_EQ(third[0].kind, EventKind::Deliver);
  EXPECT_EQ(drop.hits(0), 2u);

  AdversaryState never(one({"x", "*", "*", 0.0}, {ActionKind::Drop}), Rng(1));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(adversaryApply(never, e)[0].kind, EventKind::Deliver);

  AdversaryState other(one({"y"}, {ActionKind::Drop}), Rng(1));
  EXPECT_EQ(adversaryApply(other, e)[0].kind, EventKind::Deliver);
}

TEST(Adversary, InjectionsAreMarked) {
  AdversaryState junk(one({}, {ActionKind::Inject, 5, "junk"}), Rng(1));
  const auto out = adversaryApply(junk, deliver("x", toBytes("p")));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FALSE(out[0].injected);
  EXPECT_TRUE(out[1].injected);
  EXPECT_TRUE(out[1].tampered);
  EXPECT_EQ(out[1].dst, "b");
  EXPECT_EQ(out[1].kind, EventKind::Deliver);

  AdversaryState named(one({}, {ActionKind::Inject, 0, "forged"}), Rng(1));
  const auto act = adversaryApply(named, deliver("x", toBytes("p")));
  ASSERT_EQ(act.size(), 2u);
  EXPECT_EQ(act[1].kind, EventKind::AdversaryAction);
  EXPECT_EQ(act[1].injectKind, "forged");
}

// The adversary sees only label, endpoints and size: two datagrams that agree
// on those get the same treatment whatever their content.
TEST(AdversaryProperty, DecisionsIgnoreContent) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng r(seed);
    AdversarySchedule s{"mix",
                        {Rule{{"*", "*", "*", 0.5}, {ActionKind::Replay, 10}},
                         Rule{{"*", "*", "*", 0.3}, {ActionKind::Modify}},
                         Rule{{"*", "*", "*", 0.2}, {ActionKind::Drop}}}};
    AdversaryState a(s, Rng(seed));
    AdversaryState b(s, Rng(seed));
    const std::size_t n = 1 + r.below(64);
    for (int i = 0; i < 20; ++i) {
      const auto x = adversaryApply(a, deliver("l", r.bytes(n)));
      const auto y = adversaryApply(b, deliver("l", r.bytes(n)));
      ASSERT_EQ(x.size(), y.size());
      for (std::size_t k = 0; k < x.size(); ++k) {
        ASSERT_EQ(x[k].kind, y[k].kind);
        ASSERT_EQ(x[k].time, y[k].time);
        ASSERT_EQ(x[k].tampered, y[k].tampered);
        ASSERT_EQ(x[k].replayed, y[k].replayed);
      }
    }
  }
}

struct Recorder : Actor {
  Network* net = nullptr;
  std::vector<Datagram> got;
  bool accept = true;
  void receive(const Datagram& d) override {
    got.push_back(d);
    if (accept) net->noteAccepted(d);
  }
};

TEST(Network, TimersRunInTimeThenSchedulingOrder) {
  Trace trace;
  Network net(trace, Rng(1));
  std::vector<int> order;
  net.schedule(10, [&] { order.push_back(2); });
  net.schedule(5, [&] { order.push_back(1); });
  net.schedule(10, [&] { order.push_back(3); });
  net.schedule(10, [&] {
    order.push_back(4);
    net.schedule(0, [&] { order.push_back(5); });
  });
  net.run();
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(net.now(), 10u);
  EXPECT_TRUE(net.idle());
}

TEST(Network, DeliversWithinLatencyBounds) {
  Trace trace;
  Network net(trace, Rng(1), NetworkOptions{20, 10});
  Recorder b;
  b.net = &net;
  net.attach("b", b);
  for (int i = 0; i < 50; ++i) net.send("a", "b", "x", toBytes("m" + std::to_string(i)));
  net.run();
  EXPECT_EQ(b.got.size(), 50u);
  EXPECT_GE(net.now(), 20u);
  EXPECT_LE(net.now(), 30u);
  EXPECT_EQ(net.stats().sent, 50u);
  EXPECT_EQ(net.stats().delivered, 50u);
  EXPECT_EQ(net.stats().falseAcceptances, 0u);
}

TEST(Network, UnboundUriIsInvalid) {
  Trace trace;
  Network net(trace, Rng(1));
  Recorder b;
  net.attach("b", b);
  net.bindUri(Uri("coaps://b.example/x"), "b");
  EXPECT_EQ(net.resolve(Uri("coaps://b.example/other")), "b");
  EXPECT_THROW(net.resolve(Uri("coaps://c.example")), Error);
}

TEST(Network, BudgetExceededThrows) {
  Trace trace;
  Network net(trace, Rng(1), NetworkOptions{20, 10, 100});
  std::function<void()> tick = [&] { net.schedule(1, tick); };
  net.schedule(0, tick);
  try {
    net.run();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(FalseAcceptance, ReplayedOrTamperedAcceptsAreCounted) {
  Trace trace;
  Network net(trace, Rng(1));
  Recorder b;
  b.net = &net;
  net.attach("b", b);
  AdversaryState adv(AdversarySchedule{"t",
                                       {Rule{{"r"}, {ActionKind::Replay, 100}},
                                        Rule{{"m"}, {ActionKind::Modify}}}},
                     Rng(2));
  net.setAdversary(&adv);
  net.send("a", "b", "ok", toBytes("fine"));
  net.send("a", "b", "r", toBytes("again"));
  net.send("a", "b", "m", toBytes("tamper"));
  net.run();
  EXPECT_EQ(b.got.size(), 4u);
  EXPECT_EQ(net.stats().accepted, 4u);
  EXPECT_EQ(net.stats().falseAcceptances, 2u);
  EXPECT_EQ(net.stats().replayed, 1u);
  EXPECT_EQ(net.stats().modified, 1u);
}

TEST(Trace, DigestIsDeterministicAndSensitive) {
  auto runOnce = [](std::uint64_t seed) {
    Trace trace;
    Network net(trace, Rng(seed));
    Recorder b;
    b.net = &net;
    net.attach("b", b);
    AdversaryState adv(one({"*", "*", "*", 0.5}, {ActionKind::Replay, 7}), Rng(seed));
    net.setAdversary(&adv);
    for (int i = 0; i < 20; ++i) net.send("a", "b", "x" + std::to_string(i), toBytes("m"));
    net.run();
    return trace.digest();
  };
  EXPECT_EQ(runOnce(3), runOnce(3));
  EXPECT_NE(runOnce(3), runOnce(4));
  Trace t;
  t.line(5, "note", "a=1");
  EXPECT_EQ(t.lines().at(0), "t=5 note a=1");
}

// Two endpoints with CA1 credentials on one network.
struct RpcPair {
  Rng rng{11};
  pki::HierarchyConfig h = pki::buildHierarchy(pki::HierarchyVariant::A, rng);
  pki::TrustStore store;
  pki::RevocationView revocations;
  Trace trace;
  Network net{trace, Rng(12)};

  struct Node : Actor {
    RpcEndpoint rpc;
    session::Credential cred;
    Node(Network& n, ActorId id, std::uint64_t seed) : rpc(n, std::move(id), Rng(seed)) {}
    void receive(const Datagram& d) override { rpc.receive(d); }
  };
  Node client{net, "client", 1};
  Node server{net, "server", 2};

  session::Credential credential(std::string_view name, CertProfile profile, pki::CertificateAuthority& ca) {
    const auto key = crypto::generateKeyPair(rng.seed32());
    const auto cert = ca.issueDirect(toBytes(name), key.publicKey, profile, {TimeStamp{0}, TimeStamp{1'000'000}});
    return session::Credential{key, cert, ca.chain()};
  }

  RpcPair() {
    store.addRoot(h.ca1->rootCertificate());
    revocations.track(*h.ca1);
    client.cred = credential("client", CertProfile::Operational, *h.ca1);
    server.cred = credential("server", CertProfile::Server, *h.ca1);
    for (Node* n : {&client, &server}) {
      net.attach(n->rpc.id(), *n);
      n->rpc.setTrust([this]() -> const pki::TrustStore& { return store; }, &revocations);
      n->rpc.setCredential([n]() { return std::optional(n->cred); });
    }
    server.rpc.handle(protocol::Op::Checkin, [](const Caller& c, const protocol::Request& r) {
      if (r.body == toBytes("fail")) return protocol::Response::error(ErrorCode::UnknownDevice);
      return protocol::Response{ErrorCode::None, concat(toBytes(ttp::toString(c.session.peerIdentity.subjectName)),
                                                        r.body)};
    });
  }

  CallResult call(Bytes body, CallOptions o = {}) {
    CallResult out;
    bool done = false;
    client.rpc.call("server", client.cred, protocol::Request{protocol::Op::Checkin, std::move(body)}, o,
                    [&](const CallResult& r) {
                      out = r;
                      done = true;
                    });
    net.run();
    EXPECT_TRUE(done);
    return out;
  }
};

TEST(Rpc, CallSucceedsWithAuthenticatedPeers) {
  RpcPair p;
  const auto r = p.call(toBytes("!"));
  ASSERT_TRUE(r.ok()) << toString(r.failure());
  EXPECT_EQ(r.response.body, toBytes("client!"));
  EXPECT_EQ(r.attempts, 1u);
  ASSERT_TRUE(r.peer.has_value());
  EXPECT_EQ(r.peer->subjectName, toBytes("server"));
  EXPECT_EQ(p.net.stats().falseAcceptances, 0u);
  EXPECT_EQ(p.client.rpc.activeCalls(), 0u);
}

TEST(Rpc, HandlerErrorIsReturnedAsStatus) {
  RpcPair p;
  const auto r = p.call(toBytes("fail"));
  EXPECT_EQ(r.error, ErrorCode::None);
  EXPECT_EQ(r.failure(), ErrorCode::UnknownDevice);
}

TEST(Rpc, ReplayedFramesAreRejected) {
  RpcPair p;
  AdversaryState adv(one({"*"}, {ActionKind::Replay, 5}), Rng(3));
  p.net.setAdversary(&adv);
  const auto r = p.call(toBytes("!"));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(p.net.stats().falseAcceptances, 0u);
  EXPECT_EQ(p.net.stats().replayed, 4u);
  EXPECT_GE(p.net.stats().rejected("ReplayDetected"), 3u);
}

TEST(Rpc, LateReplayAfterLingerIsWrongSession) {
  RpcPair p;
  p.client.rpc.setLinger(1000);
  p.server.rpc.setLinger(1000);
  AdversaryState adv(one({"checkin"}, {ActionKind::Replay, 5000}), Rng(3));
  p.net.setAdversary(&adv);
  ASSERT_TRUE(p.call(toBytes("!")).ok());
  EXPECT_EQ(p.net.stats().rejected("WrongSession"), 1u);
  EXPECT_EQ(p.net.stats().falseAcceptances, 0u);
}

TEST(Rpc, DroppedTrafficTimesOutAfterAllAttempts) {
  RpcPair p;
  AdversaryState adv(one({"*"}, {ActionKind::Drop}), Rng(3));
  p.net.setAdversary(&adv);
  const auto r = p.call(toBytes("!"), CallOptions{3, 500});
  EXPECT_EQ(r.error, ErrorCode::Timeout);
  EXPECT_EQ(r.attempts, 3u);
  EXPECT_EQ(p.net.now(), 1500u);
}

TEST(Rpc, TamperedFramesNeverAccepted) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    RpcPair p;
    AdversaryState adv(one({"*", "*", "*", 0.3}, {ActionKind::Modify}), Rng(seed));
    p.net.setAdversary(&adv);
    const auto r = p.call(toBytes("!"), CallOptions{8, 500});
    ASSERT_EQ(p.net.stats().falseAcceptances, 0u) << seed;
    if (r.ok()) ASSERT_EQ(r.response.body, toBytes("client!"));
  }
}

TEST(Rpc, UntrustedServerIsReported) {
  RpcPair p;
  p.server.cred = p.credential("server", CertProfile::Server, *p.h.ca2);
  p.store = pki::TrustStore{};
  p.store.addRoot(p.h.ca1->rootCertificate());
  if (p.h.ca2->rootCertificate() == p.h.ca1->rootCertificate()) GTEST_SKIP();
  const auto r = p.call(toBytes("!"));
  EXPECT_EQ(r.error, ErrorCode::PeerUntrusted);
  EXPECT_EQ(r.reason, pki::ChainStatus::UnknownIssuer);
  EXPECT_EQ(r.attempts, 4u);
}

}  // namespace
