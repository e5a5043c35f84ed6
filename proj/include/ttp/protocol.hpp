#pragma once

// Application requests and responses exchanged inside session records.
//
//   Request   [op, bstr body]
//   Response  [status, bstr body]
//
// Bodies are op-specific CBOR built by the helpers below.

#include <optional>
#include <string_view>
#include <vector>

#include "ttp/error.hpp"
#include "ttp/messages.hpp"
#include "ttp/operators.hpp"

namespace ttp::protocol {

enum class Op : std::uint8_t {
  Enroll = 1,
  EnrollServerKey,
  RegisterFactoryCerts,
  Checkin,
  UpdateQuery,
  TrustUpdate,
  UpdatePush,
  TransferNotice,
  DeliverUpdateInfoList,
  DeliverTransferMessage,
  RaChallenge,
  RaEvidence,
  FallbackContact,
};

/// Message class name, also used as the datagram label.
std::string_view toString(Op op);

struct Request {
  Op op = Op::Checkin;
  Bytes body;
};

struct Response {
  ErrorCode status = ErrorCode::None;
  Bytes body;

  bool ok() const { return status == ErrorCode::None; }
  static Response error(ErrorCode code) { return Response{code, {}}; }
};

Bytes encode(const Request& r);
Request decodeRequest(BytesView bytes);
Bytes encode(const Response& r);
Response decodeResponse(BytesView bytes);

struct EnrollResult {
  CompactCertificate certificate;
  std::vector<CompactCertificate> chain;
  /// Secret key bytes when the CA generated the key pair.
  std::optional<Bytes> serverGeneratedKey;
};

Bytes encode(const EnrollResult& r);
EnrollResult decodeEnrollResult(BytesView bytes);

struct CheckinResult {
  Bytes transferSignerKey;
  std::optional<operators::FirmwareRelease> update;
};

Bytes encode(const CheckinResult& r);
CheckinResult decodeCheckinResult(BytesView bytes);

Bytes encodeRelease(const std::optional<operators::FirmwareRelease>& r);
std::optional<operators::FirmwareRelease> decodeRelease(BytesView bytes);

struct TrustUpdate {
  std::vector<CompactCertificate> roots;
  bool persistAcrossReset = false;
};

Bytes encode(const TrustUpdate& t);
TrustUpdate decodeTrustUpdate(BytesView bytes);

struct RaEvidence {
  Bytes nonce;
  Bytes measurement;
};

Bytes encode(const RaEvidence& e);
RaEvidence decodeRaEvidence(BytesView bytes);

Bytes encodeBool(bool v);
bool decodeBool(BytesView bytes);

}  // namespace ttp::protocol
