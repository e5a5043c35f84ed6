#pragma once

// Certificate authorities, chain verification against a truststore, the
// in-memory revocation registry, and the four CA hierarchy layouts devices
// and operators can find themselves in.

#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttp/crypto.hpp"
#include "ttp/error.hpp"
#include "ttp/messages.hpp"
#include "ttp/rng.hpp"

namespace ttp::pki {

using crypto::KeyPair;

struct Validity {
  TimeStamp notBefore;
  TimeStamp notAfter;
};

enum class ChainStatus : std::uint8_t {
  Ok,
  UnknownIssuer,
  BadSignature,
  Expired,
  Revoked,
  NotCa,
  PathTooLong,
};

std::string_view toString(ChainStatus s);

struct ChainResult {
  ChainStatus status = ChainStatus::Ok;
  /// Serial of the link that failed (0 on success).
  std::uint64_t failingSerial = 0;

  bool ok() const { return status == ChainStatus::Ok; }
  explicit operator bool() const { return ok(); }
};

class CertificateAuthority;

/// Set of revoked (issuer, serial) pairs, optionally backed by live CA
/// registries so servers always see the current state.
class RevocationView {
 public:
  RevocationView() = default;

  void add(BytesView issuerName, std::uint64_t serial);
  /// The authority must outlive the view.
  void track(const CertificateAuthority& ca);
  bool contains(const CompactCertificate& cert) const;

 private:
  std::set<std::pair<Bytes, std::uint64_t>> entries_;
  std::vector<const CertificateAuthority*> live_;
};

struct TrustEntry {
  CompactCertificate root;
  /// Survives the transfer reset (a truststore update the old operator pushed
  /// for the new one, or the factory-provisioned anchors).
  bool persistAcrossReset = false;
};

class TrustStore {
 public:
  /// Throws InvariantViolation unless `root` is a rootCa certificate that
  /// verifies under its own key. Re-adding a root keeps one entry and ORs
  /// the persistence flag.
  void addRoot(const CompactCertificate& root, bool persistAcrossReset = false);
  void pin(const crypto::Digest& certificateHash);
  bool removeRoot(BytesView name);

  const CompactCertificate* findRoot(BytesView subjectName) const;
  bool isPinned(const CompactCertificate& cert) const;
  bool containsRoot(BytesView name) const { return findRoot(name) != nullptr; }
  std::set<std::string> rootNames() const;
  /// Entries flagged persistAcrossReset (pins are dropped).
  TrustStore persistentSubset() const;

  const std::vector<TrustEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<TrustEntry> entries_;
  std::set<crypto::Digest> pinned_;
};

/// True iff a signature path exists from `cert` through `intermediates` to a
/// root in `store`, every link is valid at `now`, and no non-root link is in
/// `revoked`. A certificate whose hash is pinned in the store terminates the
/// path as trusted.
ChainResult verifyChain(const CompactCertificate& cert, std::span<const CompactCertificate> intermediates,
                        const TrustStore& store, TimeStamp now, const RevocationView& revoked);

/// Rejects with ProfileNotAllowed unless the certificate carries `required`.
void requireProfile(const CompactCertificate& cert, CertProfile required);

CompactCertificate selfSignedRoot(std::string_view name, const KeyPair& key, Validity validity);

class UnverifiableFactoryCert : public Error {
 public:
  UnverifiableFactoryCert(std::uint64_t serial, ChainStatus reason)
      : Error(ErrorCode::UnverifiableFactoryCert,
              "serial " + std::to_string(serial) + " (" + std::string(toString(reason)) + ")"),
        serial_(serial),
        reason_(reason) {}

  std::uint64_t serial() const { return serial_; }
  ChainStatus reason() const { return reason_; }

 private:
  std::uint64_t serial_;
  ChainStatus reason_;
};

class CertificateAuthority {
 public:
  struct Options {
    std::uint64_t operationalLifetime = 7200;
  };

  static std::unique_ptr<CertificateAuthority> createRoot(std::string name, KeyPair key, Validity validity,
                                                          Uri enrollUri, Options options);
  static std::unique_ptr<CertificateAuthority> createSubordinate(std::string name, KeyPair key,
                                                                 CertificateAuthority& parent, Validity validity,
                                                                 Uri enrollUri, Options options);

  const Bytes& name() const { return name_; }
  std::string nameString() const { return ttp::toString(name_); }
  const KeyPair& keyPair() const { return key_; }
  const CompactCertificate& certificate() const { return cert_; }
  /// CA certificates from this one up to, but excluding, the root.
  const std::vector<CompactCertificate>& chain() const { return chain_; }
  /// Self-signed certificate at the top of this CA's hierarchy.
  const CompactCertificate& rootCertificate() const { return root_; }
  const Uri& enrollUri() const { return enrollUri_; }
  const Options& options() const { return options_; }

  /// Issues a certificate for a CSR. Throws BadProofOfPossession or
  /// InvalidValidityWindow.
  CompactCertificate issueCertificate(const CertificateSigningRequest& csr, CertProfile profile, Validity validity);
  /// Administrative issuance without a CSR (server and sub-CA credentials).
  CompactCertificate issueDirect(BytesView subjectName, BytesView publicKey, CertProfile profile, Validity validity);

  /// Roots (and revocation view) used to check factory certificates presented
  /// for registration and enrollment.
  void setRegistrationTrust(TrustStore store, RevocationView factoryRevocations);

  /// Records each factory certificate as allowed to enroll. All-or-nothing:
  /// throws UnverifiableFactoryCert naming the first offending serial.
  Uri registerFactoryCerts(std::span<const CompactCertificate> certs, TimeStamp now);
  Uri registerFactoryCerts(const UpdateInfoList& list, TimeStamp now);
  bool isRegistered(std::uint64_t factorySerial) const { return registered_.contains(factorySerial); }
  std::size_t registeredCount() const { return registered_.size(); }

  /// Issues an operational certificate to a peer authenticated with a
  /// registered factory certificate. Throws ProfileNotAllowed,
  /// NotRegistered, RevokedFactoryCert, BadProofOfPossession or NameMismatch.
  CompactCertificate enroll(const CompactCertificate& authenticatedPeer, const CertificateSigningRequest& csr,
                            TimeStamp now);
  /// Enrollment variant where the CA generates the key pair for the device.
  std::pair<KeyPair, CompactCertificate> enrollWithServerKey(const CompactCertificate& authenticatedPeer,
                                                             Rng& rng, TimeStamp now);

  /// Throws UnknownSerial for serials this CA never issued.
  void revoke(std::uint64_t serial);
  bool isRevoked(std::uint64_t serial) const;
  /// Revokes every still-valid certificate issued to `subjectName`; returns
  /// the serials newly revoked.
  std::vector<std::uint64_t> revokeSubject(BytesView subjectName);
  const std::set<std::uint64_t>& revokedSerials() const { return revoked_; }

  const std::map<std::uint64_t, CompactCertificate>& issued() const { return issued_; }

 private:
  CertificateAuthority(std::string name, KeyPair key, Uri enrollUri, Options options);

  void checkFactoryPeer(const CompactCertificate& peer) const;
  CompactCertificate sign(CompactCertificate body);

  Bytes name_;
  KeyPair key_;
  CompactCertificate cert_;
  CompactCertificate root_;
  std::vector<CompactCertificate> chain_;
  Uri enrollUri_;
  Options options_;

  std::uint64_t nextSerial_ = 1;
  std::map<std::uint64_t, CompactCertificate> issued_;
  std::set<std::uint64_t> revoked_;
  std::map<std::uint64_t, CompactCertificate> registered_;
  TrustStore registrationTrust_;
  RevocationView factoryRevocations_;
};

enum class HierarchyVariant : std::uint8_t { A, B, C, D };
enum class CaRole : std::uint8_t { Permanent, Ca1, Ca2 };
enum class TrustPhase : std::uint8_t { PreEnroll, PreTransfer };

std::string_view toString(HierarchyVariant v);
std::string_view toString(CaRole r);
HierarchyVariant parseVariant(std::string_view s);

struct HierarchyOptions {
  Validity caValidity{TimeStamp{0}, TimeStamp{4'000'000'000ULL}};
  Uri permanentUri{"coaps://ca.permanent.example/est"};
  Uri ca1Uri{"coaps://ca1.example/est"};
  Uri ca2Uri{"coaps://ca2.example/est"};
  CertificateAuthority::Options caOptions{};
};

/// The permanent CA always issues factory certificates. CA1 and CA2 are the
/// operational CAs of the old and new operator:
///   A: CA1 and CA2 are independent self-signed roots
///   B: CA1 is a sub-CA of the permanent CA; CA2 is an independent root
///   C: CA1 and CA2 are both sub-CAs of the permanent CA
///   D: CA1 is a sub-CA of the permanent CA and CA2 a sub-CA of CA1
struct HierarchyConfig {
  HierarchyVariant variant = HierarchyVariant::A;
  std::unique_ptr<CertificateAuthority> permanent;
  std::unique_ptr<CertificateAuthority> ca1;
  std::unique_ptr<CertificateAuthority> ca2;

  CertificateAuthority& get(CaRole role);
  const CertificateAuthority& get(CaRole role) const;
  /// Role whose self-signed certificate anchors `role`'s chain.
  CaRole anchorOf(CaRole role) const;
};

HierarchyConfig buildHierarchy(HierarchyVariant variant, Rng& rng, const HierarchyOptions& options = {});

/// Roots a device must hold in the given phase: before its first enrollment,
/// and before the operator transfer (to reach both the old and new CA).
std::set<CaRole> minimalTruststore(HierarchyVariant variant, TrustPhase phase);

}  // namespace ttp::pki
