#include <gtest/gtest.h>

#include "ttp/pki.hpp"

namespace {

using namespace ttp;
using namespace ttp::pki;

constexpr TimeStamp kNow{1000};

template <class T>
ErrorCode errorOf(T&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::None;
}

TrustStore storeOf(const HierarchyConfig& h, std::initializer_list<CaRole> roles) {
  TrustStore s;
  for (auto r : roles) s.addRoot(h.get(r).certificate());
  return s;
}

const std::vector<HierarchyVariant> kVariants{HierarchyVariant::A, HierarchyVariant::B, HierarchyVariant::C,
                                              HierarchyVariant::D};

struct Fixture {
  Rng rng{1};
  HierarchyConfig h;
  RevocationView none;

  explicit Fixture(HierarchyVariant v) : h(buildHierarchy(v, rng)) {}

  /// Operational leaf issued by `role` plus its intermediate chain.
  std::pair<CompactCertificate, std::vector<CompactCertificate>> leaf(CaRole role, std::string_view name = "dev") {
    auto& ca = h.get(role);
    const auto key = crypto::generateKeyPair(rng.seed32());
    auto cert = ca.issueDirect(toBytes(name), key.publicKey, CertProfile::Operational,
                               Validity{TimeStamp{0}, TimeStamp{5000}});
    return {cert, ca.chain()};
  }
};

TEST(Hierarchy, VariantShapes) {
  for (auto v : kVariants) {
    Fixture f(v);
    const auto& ca1 = f.h.ca1->certificate();
    const auto& ca2 = f.h.ca2->certificate();
    switch (v) {
      case HierarchyVariant::A:
        EXPECT_EQ(ca1.profile, CertProfile::RootCa);
        EXPECT_EQ(ca2.profile, CertProfile::RootCa);
        break;
      case HierarchyVariant::B:
        EXPECT_EQ(ca1.issuerName, toBytes("PermanentCA"));
        EXPECT_EQ(ca2.profile, CertProfile::RootCa);
        break;
      case HierarchyVariant::C:
        EXPECT_EQ(ca1.issuerName, toBytes("PermanentCA"));
        EXPECT_EQ(ca2.issuerName, toBytes("PermanentCA"));
        break;
      case HierarchyVariant::D:
        EXPECT_EQ(ca1.issuerName, toBytes("PermanentCA"));
        EXPECT_EQ(ca2.issuerName, toBytes("CA1"));
        break;
    }
  }
}

TEST(Hierarchy, EveryCaVerifiesAgainstItsAnchor) {
  for (auto v : kVariants) {
    Fixture f(v);
    for (auto role : {CaRole::Permanent, CaRole::Ca1, CaRole::Ca2}) {
      const auto& ca = f.h.get(role);
      const auto store = storeOf(f.h, {f.h.anchorOf(role)});
      std::vector<CompactCertificate> rest(ca.chain().begin() + (ca.chain().empty() ? 0 : 1), ca.chain().end());
      EXPECT_TRUE(verifyChain(ca.certificate(), rest, store, kNow, f.none)) << toString(v) << toString(role);
    }
  }
}

TEST(Hierarchy, CaTwoOfVariantsCAndDVerifyWithPermanentRootAlone) {
  for (auto v : {HierarchyVariant::C, HierarchyVariant::D}) {
    Fixture f(v);
    const auto [cert, chain] = f.leaf(CaRole::Ca2);
    EXPECT_TRUE(verifyChain(cert, chain, storeOf(f.h, {CaRole::Permanent}), kNow, f.none)) << toString(v);
  }
}

TEST(MinimalTruststore, MatchesTopology) {
  using R = CaRole;
  EXPECT_EQ(minimalTruststore(HierarchyVariant::A, TrustPhase::PreTransfer), (std::set<R>{R::Ca1, R::Ca2}));
  EXPECT_EQ(minimalTruststore(HierarchyVariant::B, TrustPhase::PreTransfer), (std::set<R>{R::Permanent, R::Ca2}));
  EXPECT_EQ(minimalTruststore(HierarchyVariant::C, TrustPhase::PreTransfer), (std::set<R>{R::Permanent}));
  EXPECT_EQ(minimalTruststore(HierarchyVariant::D, TrustPhase::PreTransfer), (std::set<R>{R::Permanent}));
}

// The oracle is consistent with the construction: the minimal set reaches the
// CAs needed in that phase, and dropping any single entry breaks reachability.
TEST(MinimalTruststore, IsSufficientAndEveryRootNecessary) {
  for (auto v : kVariants) {
    for (auto phase : {TrustPhase::PreEnroll, TrustPhase::PreTransfer}) {
      Fixture f(v);
      std::vector<CaRole> needed{CaRole::Ca1};
      if (phase == TrustPhase::PreTransfer) needed.push_back(CaRole::Ca2);
      std::vector<std::pair<CompactCertificate, std::vector<CompactCertificate>>> leaves;
      for (auto r : needed) leaves.push_back(f.leaf(r));

      const auto minimal = minimalTruststore(v, phase);
      auto reachesAll = [&](const std::set<CaRole>& roles) {
        TrustStore s;
        for (auto r : roles) s.addRoot(f.h.get(r).certificate());
        for (const auto& [c, chain] : leaves) {
          if (!verifyChain(c, chain, s, kNow, f.none)) return false;
        }
        return true;
      };
      EXPECT_TRUE(reachesAll(minimal)) << toString(v);
      for (auto r : minimal) {
        auto reduced = minimal;
        reduced.erase(r);
        EXPECT_FALSE(reachesAll(reduced)) << toString(v) << " without " << toString(r);
      }
    }
  }
}

TEST(TrustStore, OnlySelfVerifyingRoots) {
  Fixture f(HierarchyVariant::B);
  TrustStore s;
  EXPECT_EQ(errorOf([&] { s.addRoot(f.h.ca1->certificate()); }), ErrorCode::InvariantViolation);
  auto forged = f.h.ca2->certificate();
  forged.subjectPublicKey = f.h.permanent->keyPair().publicKey;
  EXPECT_EQ(errorOf([&] { s.addRoot(forged); }), ErrorCode::InvariantViolation);
  s.addRoot(f.h.ca2->certificate());
  s.addRoot(f.h.ca2->certificate(), true);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_TRUE(s.entries()[0].persistAcrossReset);
  s.addRoot(f.h.permanent->certificate());
  EXPECT_EQ(s.persistentSubset().rootNames(), (std::set<std::string>{"CA2"}));
  EXPECT_TRUE(s.removeRoot(toBytes("CA2")));
  EXPECT_FALSE(s.containsRoot(toBytes("CA2")));
}

TEST(TrustStore, PinnedCertificateTerminatesPath) {
  Fixture f(HierarchyVariant::A);
  const auto [cert, chain] = f.leaf(CaRole::Ca2);
  TrustStore s;
  EXPECT_EQ(verifyChain(cert, chain, s, kNow, f.none).status, ChainStatus::UnknownIssuer);
  s.pin(crypto::digest(encode(cert)));
  EXPECT_TRUE(verifyChain(cert, chain, s, kNow, f.none));
}

TEST(VerifyChain, ExpiredRevokedAndUnknown) {
  Fixture f(HierarchyVariant::C);
  const auto [cert, chain] = f.leaf(CaRole::Ca1);
  const auto store = storeOf(f.h, {CaRole::Permanent});
  EXPECT_TRUE(verifyChain(cert, chain, store, kNow, f.none));

  EXPECT_EQ(verifyChain(cert, chain, store, TimeStamp{6000}, f.none).status, ChainStatus::Expired);

  RevocationView revoked;
  revoked.track(*f.h.ca1);
  f.h.ca1->revoke(cert.serial);
  const auto r = verifyChain(cert, chain, store, kNow, revoked);
  EXPECT_EQ(r.status, ChainStatus::Revoked);
  EXPECT_EQ(r.failingSerial, cert.serial);

  EXPECT_EQ(verifyChain(cert, {}, store, kNow, f.none).status, ChainStatus::UnknownIssuer);
  EXPECT_EQ(verifyChain(cert, chain, TrustStore{}, kNow, f.none).status, ChainStatus::UnknownIssuer);
}

TEST(VerifyChain, ExpiredIntermediate) {
  Rng rng(3);
  HierarchyOptions o;
  auto h = buildHierarchy(HierarchyVariant::C, rng, o);
  auto& permanent = *h.permanent;
  auto shortLived = CertificateAuthority::createSubordinate("Short", crypto::generateKeyPair(rng.seed32()), permanent,
                                                            Validity{TimeStamp{0}, TimeStamp{500}},
                                                            Uri("coaps://short.example"), {});
  const auto key = crypto::generateKeyPair(rng.seed32());
  const auto leaf = shortLived->issueDirect(toBytes("d"), key.publicKey, CertProfile::Operational,
                                            Validity{TimeStamp{0}, TimeStamp{5000}});
  TrustStore s;
  s.addRoot(permanent.certificate());
  const auto r = verifyChain(leaf, shortLived->chain(), s, kNow, RevocationView{});
  EXPECT_EQ(r.status, ChainStatus::Expired);
  EXPECT_EQ(r.failingSerial, shortLived->certificate().serial);
}

TEST(VerifyChain, NonCaIntermediateRejected) {
  Fixture f(HierarchyVariant::A);
  const auto midKey = crypto::generateKeyPair(f.rng.seed32());
  const auto mid = f.h.ca1->issueDirect(toBytes("Mid"), midKey.publicKey, CertProfile::Operational,
                                        Validity{TimeStamp{0}, TimeStamp{5000}});
  CompactCertificate leaf;
  leaf.serial = 99;
  leaf.subjectName = toBytes("x");
  leaf.subjectPublicKey = crypto::generateKeyPair(f.rng.seed32()).publicKey;
  leaf.issuerName = toBytes("Mid");
  leaf.notAfter = TimeStamp{5000};
  leaf.profile = CertProfile::Operational;
  leaf.signature = crypto::sign(midKey, leaf.toBeSigned());
  EXPECT_EQ(verifyChain(leaf, std::vector{mid}, storeOf(f.h, {CaRole::Ca1}), kNow, f.none).status,
            ChainStatus::NotCa);
}

TEST(VerifyChainProperty, MutatingAnyLinkBreaksTheChain) {
  for (auto v : {HierarchyVariant::C, HierarchyVariant::D}) {
    Fixture f(v);
    const auto [cert, chain] = f.leaf(CaRole::Ca2);
    const auto store = storeOf(f.h, {CaRole::Permanent});
    ASSERT_TRUE(verifyChain(cert, chain, store, kNow, f.none));

    for (std::size_t link = 0; link <= chain.size(); ++link) {
      for (int field = 0; field < 3; ++field) {
        auto c = cert;
        auto ch = chain;
        CompactCertificate& target = link == 0 ? c : ch[link - 1];
        switch (field) {
          case 0: target.signature[0] ^= 1; break;
          case 1: target.subjectPublicKey[5] ^= 1; break;
          case 2: target.serial += 1; break;
        }
        EXPECT_FALSE(verifyChain(c, ch, store, kNow, f.none)) << toString(v) << " link " << link << " field " << field;
      }
    }
  }
}

TEST(Issuance, SerialsIncreaseAndChainVerifies) {
  Fixture f(HierarchyVariant::B);
  const auto key = crypto::generateKeyPair(f.rng.seed32());
  const auto csr = crypto::makeCsr(key, toBytes("dev-9"), CertProfile::Operational);
  const auto c1 = f.h.ca1->issueCertificate(csr, CertProfile::Operational, Validity{TimeStamp{0}, TimeStamp{10}});
  const auto c2 = f.h.ca1->issueCertificate(csr, CertProfile::Operational, Validity{TimeStamp{0}, TimeStamp{10}});
  EXPECT_EQ(c2.serial, c1.serial + 1);
  EXPECT_EQ(c1.issuerName, toBytes("CA1"));
  EXPECT_TRUE(verifyChain(c1, f.h.ca1->chain(), storeOf(f.h, {CaRole::Permanent}), TimeStamp{5}, f.none));

  auto bad = csr;
  bad.proofOfPossession[0] ^= 1;
  EXPECT_EQ(errorOf([&] { f.h.ca1->issueCertificate(bad, CertProfile::Operational, {TimeStamp{0}, TimeStamp{1}}); }),
            ErrorCode::BadProofOfPossession);
  EXPECT_EQ(errorOf([&] { f.h.ca1->issueCertificate(csr, CertProfile::Operational, {TimeStamp{2}, TimeStamp{1}}); }),
            ErrorCode::InvalidValidityWindow);
}

struct EnrollFixture : Fixture {
  std::vector<crypto::KeyPair> keys;
  std::vector<CompactCertificate> factory;

  explicit EnrollFixture(HierarchyVariant v, int n = 3) : Fixture(v) {
    for (int i = 0; i < n; ++i) {
      keys.push_back(crypto::generateKeyPair(rng.seed32()));
      factory.push_back(h.permanent->issueDirect(toBytes("dev-" + std::to_string(i)), keys.back().publicKey,
                                                 CertProfile::Factory, Validity{TimeStamp{0}, TimeStamp{100000}}));
    }
    TrustStore s;
    s.addRoot(h.permanent->certificate());
    h.ca2->setRegistrationTrust(s, RevocationView{});
  }
};

TEST(Registration, AllValidCertsRegistered) {
  EnrollFixture f(HierarchyVariant::A);
  EXPECT_EQ(f.h.ca2->registerFactoryCerts(std::span<const CompactCertificate>{}, kNow), f.h.ca2->enrollUri());
  EXPECT_EQ(f.h.ca2->registeredCount(), 0u);
  EXPECT_EQ(f.h.ca2->registerFactoryCerts(f.factory, kNow), f.h.ca2->enrollUri());
  EXPECT_EQ(f.h.ca2->registeredCount(), 3u);
}

TEST(Registration, RogueCertRejectsWholeList) {
  EnrollFixture f(HierarchyVariant::A);
  const auto rogueKey = crypto::generateKeyPair(f.rng.seed32());
  auto rogue = selfSignedRoot("dev-rogue", rogueKey, Validity{TimeStamp{0}, TimeStamp{100000}});
  rogue.profile = CertProfile::Factory;
  rogue.serial = 4242;
  rogue.signature = crypto::sign(rogueKey, rogue.toBeSigned());
  auto list = f.factory;
  list.insert(list.begin() + 1, rogue);
  try {
    f.h.ca2->registerFactoryCerts(list, kNow);
    FAIL();
  } catch (const UnverifiableFactoryCert& e) {
    EXPECT_EQ(e.serial(), 4242u);
  }
  EXPECT_EQ(f.h.ca2->registeredCount(), 0u);
}

TEST(Enrollment, IssuesOperationalCertUnderRegisteredIdentity) {
  EnrollFixture f(HierarchyVariant::C);
  f.h.ca2->registerFactoryCerts(f.factory, kNow);
  const auto opKey = crypto::generateKeyPair(f.rng.seed32());
  const auto cert = f.h.ca2->enroll(f.factory[0], crypto::makeCsr(opKey, toBytes("dev-0"), CertProfile::Operational),
                                    kNow);
  EXPECT_EQ(cert.profile, CertProfile::Operational);
  EXPECT_EQ(cert.subjectName, toBytes("dev-0"));
  EXPECT_EQ(cert.subjectPublicKey, opKey.publicKey);
  EXPECT_EQ(cert.notAfter.seconds, kNow.seconds + 7200);
  EXPECT_TRUE(verifyChain(cert, f.h.ca2->chain(), storeOf(f.h, {CaRole::Permanent}), kNow, f.none));
}

TEST(Enrollment, Rejections) {
  EnrollFixture f(HierarchyVariant::A);
  const auto opKey = crypto::generateKeyPair(f.rng.seed32());
  const auto csr0 = crypto::makeCsr(opKey, toBytes("dev-0"), CertProfile::Operational);
  EXPECT_EQ(errorOf([&] { f.h.ca2->enroll(f.factory[0], csr0, kNow); }), ErrorCode::NotRegistered);

  f.h.ca2->registerFactoryCerts(f.factory, kNow);
  const auto csr1 = crypto::makeCsr(opKey, toBytes("dev-1"), CertProfile::Operational);
  EXPECT_EQ(errorOf([&] { f.h.ca2->enroll(f.factory[0], csr1, kNow); }), ErrorCode::NameMismatch);

  auto badPop = csr0;
  badPop.proofOfPossession[3] ^= 1;
  EXPECT_EQ(errorOf([&] { f.h.ca2->enroll(f.factory[0], badPop, kNow); }), ErrorCode::BadProofOfPossession);

  const auto opCert = f.h.ca2->enroll(f.factory[0], csr0, kNow);
  EXPECT_EQ(errorOf([&] { f.h.ca2->enroll(opCert, csr0, kNow); }), ErrorCode::ProfileNotAllowed);

  const auto factoryCsr = crypto::makeCsr(opKey, toBytes("dev-0"), CertProfile::Factory);
  EXPECT_EQ(errorOf([&] { f.h.ca2->enroll(f.factory[0], factoryCsr, kNow); }), ErrorCode::ProfileNotAllowed);

  RevocationView factoryRevoked;
  factoryRevoked.add(toBytes("PermanentCA"), f.factory[1].serial);
  TrustStore s;
  s.addRoot(f.h.permanent->certificate());
  f.h.ca2->setRegistrationTrust(s, factoryRevoked);
  const auto csrDev1 = crypto::makeCsr(opKey, toBytes("dev-1"), CertProfile::Operational);
  EXPECT_EQ(errorOf([&] { f.h.ca2->enroll(f.factory[1], csrDev1, kNow); }), ErrorCode::RevokedFactoryCert);
}

TEST(Enrollment, ServerGeneratedKey) {
  EnrollFixture f(HierarchyVariant::D);
  f.h.ca2->registerFactoryCerts(f.factory, kNow);
  const auto [key, cert] = f.h.ca2->enrollWithServerKey(f.factory[2], f.rng, kNow);
  EXPECT_EQ(cert.subjectPublicKey, key.publicKey);
  EXPECT_EQ(cert.subjectName, toBytes("dev-2"));
}

TEST(Revocation, RevokeAndLookup) {
  Fixture f(HierarchyVariant::A);
  const auto [cert, chain] = f.leaf(CaRole::Ca1);
  EXPECT_FALSE(f.h.ca1->isRevoked(cert.serial));
  f.h.ca1->revoke(cert.serial);
  EXPECT_TRUE(f.h.ca1->isRevoked(cert.serial));
  EXPECT_EQ(errorOf([&] { f.h.ca1->isRevoked(9999); }), ErrorCode::UnknownSerial);
  EXPECT_EQ(errorOf([&] { f.h.ca1->revoke(9999); }), ErrorCode::UnknownSerial);

  const auto second = f.leaf(CaRole::Ca1, "dev").first;
  f.leaf(CaRole::Ca1, "other");
  EXPECT_EQ(f.h.ca1->revokeSubject(toBytes("dev")), std::vector<std::uint64_t>{second.serial});
}

TEST(Profiles, FactoryNeverAcceptedAsOperational) {
  EnrollFixture f(HierarchyVariant::A, 1);
  EXPECT_EQ(errorOf([&] { requireProfile(f.factory[0], CertProfile::Operational); }), ErrorCode::ProfileNotAllowed);
  EXPECT_EQ(errorOf([&] { requireProfile(f.factory[0], CertProfile::Factory); }), ErrorCode::None);
}

}  // namespace
