#include <gtest/gtest.h>

#include "ttp/device.hpp"

namespace {

using namespace ttp;
using device::Device;
using device::Phase;
using device::PostResetStep;
using pki::CaRole;

template <class T>
ErrorCode errorOf(T&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::None;
}

const Uri kSp1{"coaps://update.sp1.example"};
const Uri kSp2{"coaps://update.sp2.example"};
const Uri kRa{"coaps://ra.sp2.example"};

struct Fixture {
  Rng rng;
  pki::HierarchyConfig h;
  crypto::KeyPair factoryKey;
  CompactCertificate factoryCert;
  crypto::KeyPair sp1Key;
  crypto::KeyPair sp2Key;
  VersionInfo firmware{1, Uri("coaps://fw.example/1")};
  Bytes image = crypto::digestBytes(toBytes("image"));

  explicit Fixture(std::uint64_t seed = 5, pki::HierarchyVariant v = pki::HierarchyVariant::B)
      : rng(seed), h(pki::buildHierarchy(v, rng)) {
    factoryKey = crypto::generateKeyPair(rng.seed32());
    factoryCert = h.permanent->issueDirect(toBytes("dev-0"), factoryKey.publicKey, CertProfile::Factory,
                                           {TimeStamp{0}, TimeStamp{1'000'000}});
    sp1Key = crypto::generateKeyPair(rng.seed32());
    sp2Key = crypto::generateKeyPair(rng.seed32());
    pki::TrustStore reg;
    reg.addRoot(h.permanent->certificate());
    h.ca1->setRegistrationTrust(reg, {});
    h.ca2->setRegistrationTrust(reg, {});
    h.ca1->registerFactoryCerts(std::vector{factoryCert}, TimeStamp{0});
    h.ca2->registerFactoryCerts(std::vector{factoryCert}, TimeStamp{0});
  }

  pki::TrustStore store(std::initializer_list<CaRole> roles, bool persist = true) {
    pki::TrustStore s;
    for (auto r : roles) s.addRoot(h.get(h.anchorOf(r)).certificate(), persist);
    return s;
  }

  Device provisioned() {
    Device d(toBytes("dev-0"), firmware, image);
    d.provisionFactory(factoryKey, factoryCert, store({CaRole::Permanent}), h.ca1->enrollUri(), kSp1);
    return d;
  }

  void enrollAt(Device& d, pki::CertificateAuthority& ca, TimeStamp now) {
    const auto csr = d.beginEnrollment(rng);
    const auto cert = ca.enroll(factoryCert, csr, now);
    d.completeEnrollment(cert, ca.chain(), now);
  }

  Device enrolled() {
    auto d = provisioned();
    enrollAt(d, *h.ca1, TimeStamp{10});
    d.configureTransferSigner(sp1Key.publicKey);
    d.addTrustedRoot(h.ca2->certificate(), true);
    return d;
  }

  TransferMessage transfer(TimeStamp nb = TimeStamp{100}, TimeStamp na = TimeStamp{200}, bool ra = false,
                           bool updateFirst = false) {
    return TransferMessage{nb, na, ra ? std::optional(kRa) : std::nullopt, UpdateEndpoint{kSp2, updateFirst},
                           h.ca2->enrollUri(), kSp1};
  }

  SignedEnvelope signedBy(const crypto::KeyPair& key, const TransferMessage& tm) {
    return crypto::signEnvelope(key, EnvelopeProfile::Cwt, encode(tm));
  }
};

TEST(Lifecycle, EdgesAndTerminals) {
  EXPECT_TRUE(device::isLifecycleEdge(Phase::Blank, Phase::Provisioned));
  EXPECT_TRUE(device::isLifecycleEdge(Phase::ResetDone, Phase::Reenrolled));
  EXPECT_TRUE(device::isLifecycleEdge(Phase::Attested, Phase::Updated));
  EXPECT_FALSE(device::isLifecycleEdge(Phase::Enrolled, Phase::Fallback));
  EXPECT_FALSE(device::isLifecycleEdge(Phase::Updated, Phase::Attested));
  for (int to = 0; to <= static_cast<int>(Phase::Fallback); ++to) {
    EXPECT_FALSE(device::isLifecycleEdge(Phase::Reenrolled, static_cast<Phase>(to)));
    EXPECT_FALSE(device::isLifecycleEdge(Phase::Fallback, static_cast<Phase>(to)));
  }
  const std::vector<Phase> good{Phase::Blank, Phase::Provisioned, Phase::Enrolled, Phase::TransferPending,
                                Phase::ResetDone, Phase::Reenrolled};
  EXPECT_TRUE(device::isLifecyclePrefix(good));
  EXPECT_FALSE(device::isLifecyclePrefix(std::vector<Phase>{Phase::Provisioned}));
  EXPECT_FALSE(device::isLifecyclePrefix(std::vector<Phase>{}));
}

TEST(Lifecycle, HappyPathToReenrolled) {
  Fixture f;
  auto d = f.enrolled();
  const auto tm = f.transfer();
  d.handleTransferMessage(f.signedBy(f.sp1Key, tm), TimeStamp{150});
  EXPECT_EQ(d.phase(), Phase::TransferPending);
  d.resetToAgreedState(TimeStamp{155});
  EXPECT_EQ(d.nextPostResetStep(), PostResetStep::Enroll);
  f.enrollAt(d, *f.h.ca2, TimeStamp{156});
  EXPECT_EQ(d.phase(), Phase::Reenrolled);
  EXPECT_EQ(d.nextPostResetStep(), PostResetStep::Done);
  EXPECT_EQ(toString(d.operationalCertificate()->issuerName), "CA2");
  const std::vector<Phase> expected{Phase::Blank,           Phase::Provisioned, Phase::Enrolled,
                                    Phase::TransferPending, Phase::ResetDone,   Phase::Reenrolled};
  EXPECT_EQ(d.history(), expected);
}

TEST(Lifecycle, RenewalKeepsPhase) {
  Fixture f;
  auto d = f.enrolled();
  const auto first = *d.operationalCertificate();
  f.enrollAt(d, *f.h.ca1, TimeStamp{20});
  EXPECT_EQ(d.phase(), Phase::Enrolled);
  EXPECT_NE(*d.operationalCertificate(), first);
  EXPECT_EQ(d.history().size(), 3u);
}

// Random operation sequences: whatever is accepted or rejected, the recorded
// phases always form a lifecycle prefix and rejected operations leave the
// phase unchanged.
TEST(LifecycleProperty, RandomOperationSequencesStayOnLifecycle) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Fixture f(seed);
    Rng ops(seed * 7 + 1);
    Device d(toBytes("dev-0"), f.firmware, f.image);
    for (int step = 0; step < 25; ++step) {
      const Phase before = d.phase();
      const auto now = TimeStamp{ops.below(300)};
      const ErrorCode err = errorOf([&] {
        switch (ops.below(10)) {
          case 0: d.provisionFactory(f.factoryKey, f.factoryCert, f.store({CaRole::Permanent}), f.h.ca1->enrollUri()); break;
          case 1: f.enrollAt(d, *f.h.ca1, now); break;
          case 2: f.enrollAt(d, *f.h.ca2, now); break;
          case 3: d.configureTransferSigner(f.sp1Key.publicKey); break;
          case 4: d.handleTransferMessage(f.signedBy(ops.chance(0.5) ? f.sp1Key : f.sp2Key, f.transfer()), now); break;
          case 5: d.resetToAgreedState(now); break;
          case 6: d.markAttested(); break;
          case 7: d.markUpdated(); break;
          case 8: d.enterFallback(ErrorCode::Timeout); break;
          default: d.addTrustedRoot(f.h.ca2->certificate(), true); break;
        }
      });
      ASSERT_TRUE(device::isLifecyclePrefix(d.history())) << "seed " << seed;
      ASSERT_EQ(d.history().back(), d.phase());
      if (err != ErrorCode::None && err != ErrorCode::NotRegistered && err != ErrorCode::EnrollRejected) {
        ASSERT_EQ(d.phase(), before) << "seed " << seed << " " << toString(err);
      }
    }
  }
}

TEST(Provisioning, RejectsMismatchedKeyAndSecondProvision) {
  Fixture f;
  Device d(toBytes("dev-0"), f.firmware, f.image);
  const auto other = crypto::generateKeyPair(f.rng.seed32());
  EXPECT_EQ(errorOf([&] { d.provisionFactory(other, f.factoryCert, {}, f.h.ca1->enrollUri()); }),
            ErrorCode::KeyCertMismatch);
  EXPECT_EQ(d.phase(), Phase::Blank);
  d.provisionFactory(f.factoryKey, f.factoryCert, f.store({CaRole::Permanent}), f.h.ca1->enrollUri());
  EXPECT_EQ(errorOf([&] { d.provisionFactory(f.factoryKey, f.factoryCert, {}, f.h.ca1->enrollUri()); }),
            ErrorCode::WrongPhase);
}

TEST(Enrollment, CertificateForAnotherKeyRejected) {
  Fixture f;
  auto d = f.provisioned();
  d.beginEnrollment(f.rng);
  const auto stranger = crypto::generateKeyPair(f.rng.seed32());
  const auto csr = crypto::makeCsr(stranger, toBytes("dev-0"), CertProfile::Operational);
  const auto cert = f.h.ca1->enroll(f.factoryCert, csr, TimeStamp{10});
  EXPECT_EQ(errorOf([&] { d.completeEnrollment(cert, f.h.ca1->chain(), TimeStamp{10}); }), ErrorCode::KeyCertMismatch);
  EXPECT_EQ(d.phase(), Phase::Provisioned);
}

TEST(Enrollment, CertificateOutsideTruststoreRejected) {
  Fixture f(5, pki::HierarchyVariant::A);
  Device d(toBytes("dev-0"), f.firmware, f.image);
  d.provisionFactory(f.factoryKey, f.factoryCert, f.store({CaRole::Ca1}), f.h.ca1->enrollUri());
  const auto csr = d.beginEnrollment(f.rng);
  const auto cert = f.h.ca2->enroll(f.factoryCert, csr, TimeStamp{10});
  EXPECT_EQ(errorOf([&] { d.completeEnrollment(cert, f.h.ca2->chain(), TimeStamp{10}); }), ErrorCode::EnrollRejected);
}

TEST(TransferMessage, SignatureCheckedBeforePhase) {
  Fixture f;
  auto d = f.provisioned();
  d.configureTransferSigner(f.sp1Key.publicKey);
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(f.signedBy(f.sp2Key, f.transfer()), TimeStamp{150}); }),
            ErrorCode::BadSignature);
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(f.signedBy(f.sp1Key, f.transfer()), TimeStamp{150}); }),
            ErrorCode::WrongPhase);
}

TEST(TransferMessage, RejectsForgedTamperedAndUnconfigured) {
  Fixture f;
  auto d = f.enrolled();
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(f.signedBy(f.sp2Key, f.transfer()), TimeStamp{150}); }),
            ErrorCode::BadSignature);
  auto env = f.signedBy(f.sp1Key, f.transfer());
  for (std::size_t i = 0; i < env.payload.size(); ++i) {
    auto bad = env;
    bad.payload[i] ^= 0x01;
    ASSERT_EQ(errorOf([&] { d.handleTransferMessage(bad, TimeStamp{150}); }), ErrorCode::BadSignature) << i;
  }
  auto wrongProfile = crypto::signEnvelope(f.sp1Key, EnvelopeProfile::UpdateList, encode(f.transfer()));
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(wrongProfile, TimeStamp{150}); }), ErrorCode::BadSignature);
  EXPECT_EQ(d.phase(), Phase::Enrolled);

  auto fresh = f.provisioned();
  f.enrollAt(fresh, *f.h.ca1, TimeStamp{10});
  EXPECT_EQ(errorOf([&] { fresh.handleTransferMessage(env, TimeStamp{150}); }), ErrorCode::BadSignature);
}

TEST(TransferMessage, OutsideWindowRejectedAtReceiptAndReset) {
  Fixture f;
  auto d = f.enrolled();
  const auto env = f.signedBy(f.sp1Key, f.transfer(TimeStamp{100}, TimeStamp{200}));
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(env, TimeStamp{99}); }), ErrorCode::OutsideResetWindow);
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(env, TimeStamp{201}); }), ErrorCode::OutsideResetWindow);
  d.handleTransferMessage(env, TimeStamp{100});
  EXPECT_EQ(errorOf([&] { d.resetToAgreedState(TimeStamp{201}); }), ErrorCode::OutsideResetWindow);
  EXPECT_EQ(d.phase(), Phase::TransferPending);
  d.enterFallback(ErrorCode::OutsideResetWindow);
  EXPECT_EQ(d.phase(), Phase::Fallback);
  EXPECT_EQ(d.fallbackReason(), ErrorCode::OutsideResetWindow);
}

TEST(TransferMessage, IdenticalRedeliveryIsIdempotentOtherwiseWrongPhase) {
  Fixture f;
  auto d = f.enrolled();
  const auto env = f.signedBy(f.sp1Key, f.transfer());
  d.handleTransferMessage(env, TimeStamp{150});
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(env, TimeStamp{151}); }), ErrorCode::None);
  EXPECT_EQ(d.history().size(), 4u);
  const auto other = f.signedBy(f.sp1Key, f.transfer(TimeStamp{100}, TimeStamp{250}));
  EXPECT_EQ(errorOf([&] { d.handleTransferMessage(other, TimeStamp{152}); }), ErrorCode::WrongPhase);
  EXPECT_EQ(*d.pendingEnvelope(), env);
}

TEST(Reset, KeepsOnlyAgreedState) {
  Fixture f;
  auto d = f.enrolled();
  d.addTrustedRoot(f.h.ca2->certificate(), true);
  const auto stray = crypto::generateKeyPair(f.rng.seed32());
  const auto strayRoot = pki::selfSignedRoot("Stray", stray, {TimeStamp{0}, TimeStamp{1'000'000}});
  d.addTrustedRoot(strayRoot, false);
  const auto tm = f.transfer(TimeStamp{100}, TimeStamp{200}, true, true);
  d.handleTransferMessage(f.signedBy(f.sp1Key, tm), TimeStamp{150});
  d.resetToAgreedState(TimeStamp{160});

  EXPECT_FALSE(d.operationalKey());
  EXPECT_FALSE(d.operationalCertificate());
  EXPECT_TRUE(d.operationalChain().empty());
  EXPECT_FALSE(d.transferSigner());
  EXPECT_FALSE(d.trustStore().containsRoot(toBytes("Stray")));
  EXPECT_EQ(d.endpoints().caUri, tm.enrollUri);
  EXPECT_EQ(d.endpoints().updateUri, tm.updateUri.uri);
  EXPECT_EQ(d.endpoints().raUri, tm.raUri);
  EXPECT_EQ(d.endpoints().fallbackUri, tm.fallbackUri);

  const device::AgreedState agreed{f.factoryCert, f.firmware, {"PermanentCA", "CA2"}, tm};
  EXPECT_TRUE(d.auditAgainst(agreed).empty());
}

TEST(Reset, AuditFlagsEveryDeviation) {
  Fixture f;
  auto d = f.enrolled();
  const auto tm = f.transfer();
  d.handleTransferMessage(f.signedBy(f.sp1Key, tm), TimeStamp{150});
  d.resetToAgreedState(TimeStamp{160});
  device::AgreedState agreed{f.factoryCert, f.firmware, {"PermanentCA", "CA2"}, tm};
  ASSERT_TRUE(d.auditAgainst(agreed).empty());

  auto narrower = agreed;
  narrower.trustStoreRoots = {"PermanentCA"};
  EXPECT_EQ(d.auditAgainst(narrower).size(), 1u);
  auto otherFirmware = agreed;
  otherFirmware.firmware.manifestSequence = 9;
  EXPECT_EQ(d.auditAgainst(otherFirmware).size(), 1u);
  auto otherTransfer = agreed;
  otherTransfer.transfer.fallbackUri = kSp2;
  EXPECT_EQ(d.auditAgainst(otherTransfer).size(), 1u);

  f.enrollAt(d, *f.h.ca2, TimeStamp{170});
  EXPECT_FALSE(d.auditAgainst(agreed).empty());
}

TEST(PostReset, StepOrderFollowsTransferMessage) {
  struct Case {
    bool ra, updateFirst;
    std::vector<PostResetStep> steps;
  };
  const std::vector<Case> cases{
      {false, false, {PostResetStep::Enroll}},
      {true, false, {PostResetStep::Attest, PostResetStep::Enroll}},
      {false, true, {PostResetStep::Update, PostResetStep::Enroll}},
      {true, true, {PostResetStep::Attest, PostResetStep::Update, PostResetStep::Enroll}},
  };
  for (const auto& c : cases) {
    Fixture f;
    auto d = f.enrolled();
    d.handleTransferMessage(f.signedBy(f.sp1Key, f.transfer(TimeStamp{100}, TimeStamp{200}, c.ra, c.updateFirst)),
                            TimeStamp{150});
    d.resetToAgreedState(TimeStamp{150});
    std::vector<PostResetStep> seen;
    for (auto step = d.nextPostResetStep(); step != PostResetStep::Done; step = d.nextPostResetStep()) {
      seen.push_back(step);
      switch (step) {
        case PostResetStep::Attest: d.markAttested(); break;
        case PostResetStep::Update: d.markUpdated(); break;
        case PostResetStep::Enroll: f.enrollAt(d, *f.h.ca2, TimeStamp{160}); break;
        case PostResetStep::Done: break;
      }
    }
    EXPECT_EQ(seen, c.steps);
    EXPECT_EQ(d.phase(), Phase::Reenrolled);
  }
}

TEST(Attestation, MeasurementBindsNonceAndImage) {
  Fixture f;
  auto d = f.provisioned();
  const Bytes n1 = f.rng.bytes(16);
  const Bytes n2 = f.rng.bytes(16);
  EXPECT_EQ(d.attest(n1), device::attestationMeasurement(d.firmwareStateDigest(), n1));
  EXPECT_NE(d.attest(n1), d.attest(n2));
  const auto before = d.attest(n1);
  d.tamperFirmwareImage();
  EXPECT_NE(d.attest(n1), before);
}

TEST(Report, MentionsPhaseAndEndpoints) {
  Fixture f;
  const auto d = f.enrolled();
  const auto r = d.report();
  EXPECT_NE(r.find("phase=enrolled"), std::string::npos);
  EXPECT_NE(r.find("operational.issuer=CA1"), std::string::npos);
  EXPECT_NE(r.find("caUri=coaps://ca1.example/est"), std::string::npos);
}

}  // namespace
