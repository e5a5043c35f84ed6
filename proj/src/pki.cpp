#include "ttp/pki.hpp"

#include <algorithm>

namespace ttp::pki {

std::string_view toString(ChainStatus s) {
  switch (s) {
    case ChainStatus::Ok: return "Ok";
    case ChainStatus::UnknownIssuer: return "UnknownIssuer";
    case ChainStatus::BadSignature: return "BadSignature";
    case ChainStatus::Expired: return "Expired";
    case ChainStatus::Revoked: return "Revoked";
    case ChainStatus::NotCa: return "NotCa";
    case ChainStatus::PathTooLong: return "PathTooLong";
  }
  return "Unknown";
}

// --- revocation -------------------------------------------------------------

void RevocationView::add(BytesView issuerName, std::uint64_t serial) {
  entries_.emplace(Bytes(issuerName.begin(), issuerName.end()), serial);
}

void RevocationView::track(const CertificateAuthority& ca) { live_.push_back(&ca); }

bool RevocationView::contains(const CompactCertificate& cert) const {
  if (entries_.contains({cert.issuerName, cert.serial})) return true;
  for (const auto* ca : live_) {
    if (ca->name() == cert.issuerName && ca->revokedSerials().contains(cert.serial)) return true;
  }
  return false;
}

// --- truststore -------------------------------------------------------------

namespace {

bool selfVerifies(const CompactCertificate& c) {
  return c.issuerName == c.subjectName && crypto::verify(c.subjectPublicKey, c.toBeSigned(), c.signature);
}

}  // namespace

void TrustStore::addRoot(const CompactCertificate& root, bool persistAcrossReset) {
  if (root.profile != CertProfile::RootCa) {
    throw Error(ErrorCode::InvariantViolation, "truststore roots must carry the rootCa profile");
  }
  if (!selfVerifies(root)) throw Error(ErrorCode::InvariantViolation, "root certificate does not verify under its own key");
  for (auto& e : entries_) {
    if (e.root.subjectName == root.subjectName) {
      e.root = root;
      e.persistAcrossReset = e.persistAcrossReset || persistAcrossReset;
      return;
    }
  }
  entries_.push_back(TrustEntry{root, persistAcrossReset});
}

void TrustStore::pin(const crypto::Digest& certificateHash) { pinned_.insert(certificateHash); }

bool TrustStore::removeRoot(BytesView name) {
  const auto before = entries_.size();
  std::erase_if(entries_, [&](const TrustEntry& e) { return std::ranges::equal(e.root.subjectName, name); });
  return entries_.size() != before;
}

const CompactCertificate* TrustStore::findRoot(BytesView subjectName) const {
  for (const auto& e : entries_) {
    if (std::ranges::equal(e.root.subjectName, subjectName)) return &e.root;
  }
  return nullptr;
}

bool TrustStore::isPinned(const CompactCertificate& cert) const {
  return !pinned_.empty() && pinned_.contains(crypto::digest(encode(cert)));
}

std::set<std::string> TrustStore::rootNames() const {
  std::set<std::string> out;
  for (const auto& e : entries_) out.insert(ttp::toString(e.root.subjectName));
  return out;
}

TrustStore TrustStore::persistentSubset() const {
  TrustStore out;
  for (const auto& e : entries_) {
    if (e.persistAcrossReset) out.entries_.push_back(e);
  }
  return out;
}

// --- chain verification -----------------------------------------------------

ChainResult verifyChain(const CompactCertificate& cert, std::span<const CompactCertificate> intermediates,
                        const TrustStore& store, TimeStamp now, const RevocationView& revoked) {
  const CompactCertificate* current = &cert;
  // Each step consumes one intermediate at most; one extra step reaches the root.
  for (std::size_t depth = 0; depth <= intermediates.size(); ++depth) {
    if (!current->validAt(now)) return {ChainStatus::Expired, current->serial};
    if (store.isPinned(*current)) return {};
    if (const auto* anchor = store.findRoot(current->subjectName); anchor && *anchor == *current) return {};
    if (revoked.contains(*current)) return {ChainStatus::Revoked, current->serial};

    if (const auto* root = store.findRoot(current->issuerName)) {
      if (!crypto::verify(root->subjectPublicKey, current->toBeSigned(), current->signature)) {
        return {ChainStatus::BadSignature, current->serial};
      }
      if (!root->validAt(now)) return {ChainStatus::Expired, root->serial};
      return {};
    }
    if (current->issuerName == current->subjectName) {
      // Self-signed but not one of our anchors.
      return {ChainStatus::UnknownIssuer, current->serial};
    }

    const CompactCertificate* issuer = nullptr;
    for (const auto& candidate : intermediates) {
      if (candidate.subjectName == current->issuerName) {
        issuer = &candidate;
        break;
      }
    }
    if (issuer == nullptr) return {ChainStatus::UnknownIssuer, current->serial};
    if (!issuer->isCa()) return {ChainStatus::NotCa, issuer->serial};
    if (!crypto::verify(issuer->subjectPublicKey, current->toBeSigned(), current->signature)) {
      return {ChainStatus::BadSignature, current->serial};
    }
    current = issuer;
  }
  return {ChainStatus::PathTooLong, current->serial};
}

void requireProfile(const CompactCertificate& cert, CertProfile required) {
  if (cert.profile != required) {
    throw Error(ErrorCode::ProfileNotAllowed, std::string(toString(cert.profile)) + " certificate where " +
                                                  std::string(toString(required)) + " is required");
  }
}

CompactCertificate selfSignedRoot(std::string_view name, const KeyPair& key, Validity validity) {
  CompactCertificate c;
  c.serial = 1;
  c.subjectName = toBytes(name);
  c.subjectPublicKey = key.publicKey;
  c.issuerName = c.subjectName;
  c.notBefore = validity.notBefore;
  c.notAfter = validity.notAfter;
  c.profile = CertProfile::RootCa;
  c.signature = crypto::sign(key, c.toBeSigned());
  return c;
}

// --- certificate authority --------------------------------------------------

CertificateAuthority::CertificateAuthority(std::string name, KeyPair key, Uri enrollUri, Options options)
    : name_(toBytes(name)), key_(std::move(key)), enrollUri_(std::move(enrollUri)), options_(options) {}

std::unique_ptr<CertificateAuthority> CertificateAuthority::createRoot(std::string name, KeyPair key,
                                                                       Validity validity, Uri enrollUri,
                                                                       Options options) {
  if (validity.notBefore > validity.notAfter) throw Error(ErrorCode::InvalidValidityWindow);
  std::unique_ptr<CertificateAuthority> ca(new CertificateAuthority(name, std::move(key), std::move(enrollUri), options));
  ca->cert_ = selfSignedRoot(name, ca->key_, validity);
  ca->root_ = ca->cert_;
  // Serial 1 is the self-signed certificate itself.
  ca->issued_.emplace(ca->cert_.serial, ca->cert_);
  ca->nextSerial_ = 2;
  return ca;
}

std::unique_ptr<CertificateAuthority> CertificateAuthority::createSubordinate(std::string name, KeyPair key,
                                                                              CertificateAuthority& parent,
                                                                              Validity validity, Uri enrollUri,
                                                                              Options options) {
  std::unique_ptr<CertificateAuthority> ca(new CertificateAuthority(name, std::move(key), std::move(enrollUri), options));
  ca->cert_ = parent.issueDirect(ca->name_, ca->key_.publicKey, CertProfile::SubCa, validity);
  ca->root_ = parent.root_;
  ca->chain_.push_back(ca->cert_);
  ca->chain_.insert(ca->chain_.end(), parent.chain_.begin(), parent.chain_.end());
  return ca;
}

CompactCertificate CertificateAuthority::sign(CompactCertificate body) {
  body.serial = nextSerial_++;
  body.issuerName = name_;
  validate(body);
  body.signature = crypto::sign(key_, body.toBeSigned());
  issued_.emplace(body.serial, body);
  return body;
}

CompactCertificate CertificateAuthority::issueCertificate(const CertificateSigningRequest& csr, CertProfile profile,
                                                          Validity validity) {
  if (!crypto::verifyCsr(csr)) throw Error(ErrorCode::BadProofOfPossession, "CSR signature does not verify");
  return issueDirect(csr.subjectName, csr.subjectPublicKey, profile, validity);
}

CompactCertificate CertificateAuthority::issueDirect(BytesView subjectName, BytesView publicKey, CertProfile profile,
                                                     Validity validity) {
  if (validity.notBefore > validity.notAfter) throw Error(ErrorCode::InvalidValidityWindow);
  if (profile == CertProfile::RootCa) throw Error(ErrorCode::ProfileNotAllowed, "roots are self-signed only");
  CompactCertificate c;
  c.subjectName.assign(subjectName.begin(), subjectName.end());
  c.subjectPublicKey.assign(publicKey.begin(), publicKey.end());
  c.notBefore = validity.notBefore;
  c.notAfter = validity.notAfter;
  c.profile = profile;
  return sign(std::move(c));
}

void CertificateAuthority::setRegistrationTrust(TrustStore store, RevocationView factoryRevocations) {
  registrationTrust_ = std::move(store);
  factoryRevocations_ = std::move(factoryRevocations);
}

Uri CertificateAuthority::registerFactoryCerts(std::span<const CompactCertificate> certs, TimeStamp now) {
  for (const auto& c : certs) {
    if (c.profile != CertProfile::Factory) throw UnverifiableFactoryCert(c.serial, ChainStatus::NotCa);
    const auto result = verifyChain(c, {}, registrationTrust_, now, factoryRevocations_);
    if (!result) throw UnverifiableFactoryCert(c.serial, result.status);
  }
  for (const auto& c : certs) registered_.insert_or_assign(c.serial, c);
  return enrollUri_;
}

Uri CertificateAuthority::registerFactoryCerts(const UpdateInfoList& list, TimeStamp now) {
  std::vector<CompactCertificate> certs;
  certs.reserve(list.entries.size());
  for (const auto& e : list.entries) certs.push_back(e.factoryCertificate);
  return registerFactoryCerts(certs, now);
}

void CertificateAuthority::checkFactoryPeer(const CompactCertificate& peer) const {
  requireProfile(peer, CertProfile::Factory);
  const auto it = registered_.find(peer.serial);
  if (it == registered_.end() || it->second != peer) {
    throw Error(ErrorCode::NotRegistered, "factory certificate " + std::to_string(peer.serial) + " not registered");
  }
  if (factoryRevocations_.contains(peer)) {
    throw Error(ErrorCode::RevokedFactoryCert, "factory certificate " + std::to_string(peer.serial));
  }
}

CompactCertificate CertificateAuthority::enroll(const CompactCertificate& authenticatedPeer,
                                                const CertificateSigningRequest& csr, TimeStamp now) {
  checkFactoryPeer(authenticatedPeer);
  if (!crypto::verifyCsr(csr)) throw Error(ErrorCode::BadProofOfPossession, "CSR signature does not verify");
  if (csr.subjectName != authenticatedPeer.subjectName) {
    throw Error(ErrorCode::NameMismatch, "CSR subject '" + ttp::toString(csr.subjectName) + "' but session identity '" +
                                             ttp::toString(authenticatedPeer.subjectName) + "'");
  }
  if (csr.requestedProfile != CertProfile::Operational) {
    throw Error(ErrorCode::ProfileNotAllowed, "enrollment issues operational certificates only");
  }
  return issueDirect(csr.subjectName, csr.subjectPublicKey, CertProfile::Operational,
                     Validity{now, TimeStamp{now.seconds + options_.operationalLifetime}});
}

std::pair<KeyPair, CompactCertificate> CertificateAuthority::enrollWithServerKey(
    const CompactCertificate& authenticatedPeer, Rng& rng, TimeStamp now) {
  checkFactoryPeer(authenticatedPeer);
  KeyPair key = crypto::generateKeyPair(rng.seed32());
  auto cert = issueDirect(authenticatedPeer.subjectName, key.publicKey, CertProfile::Operational,
                          Validity{now, TimeStamp{now.seconds + options_.operationalLifetime}});
  return {std::move(key), std::move(cert)};
}

void CertificateAuthority::revoke(std::uint64_t serial) {
  if (!issued_.contains(serial)) throw Error(ErrorCode::UnknownSerial, std::to_string(serial));
  revoked_.insert(serial);
}

bool CertificateAuthority::isRevoked(std::uint64_t serial) const {
  if (!issued_.contains(serial)) throw Error(ErrorCode::UnknownSerial, std::to_string(serial));
  return revoked_.contains(serial);
}

std::vector<std::uint64_t> CertificateAuthority::revokeSubject(BytesView subjectName) {
  std::vector<std::uint64_t> out;
  for (const auto& [serial, cert] : issued_) {
    if (std::ranges::equal(cert.subjectName, subjectName) && !revoked_.contains(serial)) {
      revoked_.insert(serial);
      out.push_back(serial);
    }
  }
  return out;
}

// --- hierarchies ------------------------------------------------------------

std::string_view toString(HierarchyVariant v) {
  switch (v) {
    case HierarchyVariant::A: return "a";
    case HierarchyVariant::B: return "b";
    case HierarchyVariant::C: return "c";
    case HierarchyVariant::D: return "d";
  }
  return "?";
}

std::string_view toString(CaRole r) {
  switch (r) {
    case CaRole::Permanent: return "permanent";
    case CaRole::Ca1: return "ca1";
    case CaRole::Ca2: return "ca2";
  }
  return "?";
}

HierarchyVariant parseVariant(std::string_view s) {
  if (s == "a" || s == "A") return HierarchyVariant::A;
  if (s == "b" || s == "B") return HierarchyVariant::B;
  if (s == "c" || s == "C") return HierarchyVariant::C;
  if (s == "d" || s == "D") return HierarchyVariant::D;
  throw Error(ErrorCode::InvariantViolation, "unknown hierarchy variant '" + std::string(s) + "'");
}

CertificateAuthority& HierarchyConfig::get(CaRole role) {
  return const_cast<CertificateAuthority&>(std::as_const(*this).get(role));
}

const CertificateAuthority& HierarchyConfig::get(CaRole role) const {
  switch (role) {
    case CaRole::Permanent: return *permanent;
    case CaRole::Ca1: return *ca1;
    case CaRole::Ca2: return *ca2;
  }
  throw Error(ErrorCode::InvariantViolation, "unknown CA role");
}

CaRole HierarchyConfig::anchorOf(CaRole role) const {
  const auto& rootName = get(role).rootCertificate().subjectName;
  for (const auto r : {CaRole::Permanent, CaRole::Ca1, CaRole::Ca2}) {
    if (get(r).certificate().subjectName == rootName && get(r).certificate().profile == CertProfile::RootCa) return r;
  }
  throw Error(ErrorCode::InvariantViolation, "hierarchy anchor not found");
}

HierarchyConfig buildHierarchy(HierarchyVariant variant, Rng& rng, const HierarchyOptions& options) {
  HierarchyConfig h;
  h.variant = variant;
  const auto opts = options.caOptions;
  h.permanent = CertificateAuthority::createRoot("PermanentCA", crypto::generateKeyPair(rng.seed32()),
                                                 options.caValidity, options.permanentUri, opts);
  auto ca1Key = crypto::generateKeyPair(rng.seed32());
  auto ca2Key = crypto::generateKeyPair(rng.seed32());
  switch (variant) {
    case HierarchyVariant::A:
      h.ca1 = CertificateAuthority::createRoot("CA1", std::move(ca1Key), options.caValidity, options.ca1Uri, opts);
      h.ca2 = CertificateAuthority::createRoot("CA2", std::move(ca2Key), options.caValidity, options.ca2Uri, opts);
      break;
    case HierarchyVariant::B:
      h.ca1 = CertificateAuthority::createSubordinate("CA1", std::move(ca1Key), *h.permanent, options.caValidity,
                                                      options.ca1Uri, opts);
      h.ca2 = CertificateAuthority::createRoot("CA2", std::move(ca2Key), options.caValidity, options.ca2Uri, opts);
      break;
    case HierarchyVariant::C:
      h.ca1 = CertificateAuthority::createSubordinate("CA1", std::move(ca1Key), *h.permanent, options.caValidity,
                                                      options.ca1Uri, opts);
      h.ca2 = CertificateAuthority::createSubordinate("CA2", std::move(ca2Key), *h.permanent, options.caValidity,
                                                      options.ca2Uri, opts);
      break;
    case HierarchyVariant::D:
      h.ca1 = CertificateAuthority::createSubordinate("CA1", std::move(ca1Key), *h.permanent, options.caValidity,
                                                      options.ca1Uri, opts);
      h.ca2 = CertificateAuthority::createSubordinate("CA2", std::move(ca2Key), *h.ca1, options.caValidity,
                                                      options.ca2Uri, opts);
      break;
  }
  return h;
}

std::set<CaRole> minimalTruststore(HierarchyVariant variant, TrustPhase phase) {
  switch (variant) {
    case HierarchyVariant::A:
      if (phase == TrustPhase::PreEnroll) return {CaRole::Ca1};
      return {CaRole::Ca1, CaRole::Ca2};
    case HierarchyVariant::B:
      if (phase == TrustPhase::PreEnroll) return {CaRole::Permanent};
      return {CaRole::Permanent, CaRole::Ca2};
    case HierarchyVariant::C:
    case HierarchyVariant::D:
      return {CaRole::Permanent};
  }
  return {};
}

}  // namespace ttp::pki
