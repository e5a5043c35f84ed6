#include "ttp/protocol.hpp"

namespace ttp::protocol {

std::string_view toString(Op op) {
  switch (op) {
    case Op::Enroll: return "enroll";
    case Op::EnrollServerKey: return "enroll_server_key";
    case Op::RegisterFactoryCerts: return "register_factory_certs";
    case Op::Checkin: return "checkin";
    case Op::UpdateQuery: return "update_query";
    case Op::TrustUpdate: return "trust_update";
    case Op::UpdatePush: return "update_push";
    case Op::TransferNotice: return "transfer_notice";
    case Op::DeliverUpdateInfoList: return "update_info_list";
    case Op::DeliverTransferMessage: return "transfer_message";
    case Op::RaChallenge: return "ra_challenge";
    case Op::RaEvidence: return "ra_evidence";
    case Op::FallbackContact: return "fallback_contact";
  }
  return "?";
}

namespace {

template <class F>
Bytes build(F&& f) {
  cbor::Writer w;
  f(w);
  return std::move(w).take();
}

template <class T, class F>
T parse(BytesView bytes, F&& f) {
  cbor::Reader r(bytes);
  T value = f(r);
  r.finish();
  return value;
}

void writeCerts(cbor::Writer& w, const std::vector<CompactCertificate>& certs) {
  w.array(certs.size());
  for (const auto& c : certs) write(w, c);
}

std::vector<CompactCertificate> readCerts(cbor::Reader& r) {
  const std::size_t n = r.array();
  std::vector<CompactCertificate> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(read<CompactCertificate>(r));
  return out;
}

void writeRelease(cbor::Writer& w, const std::optional<operators::FirmwareRelease>& rel) {
  if (!rel) {
    w.null();
    return;
  }
  w.array(2);
  write(w, rel->version);
  w.bytes(rel->imageDigest);
}

std::optional<operators::FirmwareRelease> readRelease(cbor::Reader& r) {
  if (r.null()) return std::nullopt;
  r.array(2, "firmware release");
  auto version = read<VersionInfo>(r);
  return operators::FirmwareRelease{std::move(version), r.bytes()};
}

}  // namespace

Bytes encode(const Request& req) {
  return build([&](cbor::Writer& w) { w.array(2).uint(static_cast<std::uint64_t>(req.op)).bytes(req.body); });
}

Request decodeRequest(BytesView bytes) {
  return parse<Request>(bytes, [](cbor::Reader& r) {
    r.array(2, "request");
    const auto op = r.uint();
    if (op < 1 || op > static_cast<std::uint64_t>(Op::FallbackContact)) {
      throw Error(ErrorCode::MalformedEncoding, "unknown op " + std::to_string(op));
    }
    return Request{static_cast<Op>(op), r.bytes()};
  });
}

Bytes encode(const Response& resp) {
  return build([&](cbor::Writer& w) { w.array(2).uint(static_cast<std::uint64_t>(resp.status)).bytes(resp.body); });
}

Response decodeResponse(BytesView bytes) {
  return parse<Response>(bytes, [](cbor::Reader& r) {
    r.array(2, "response");
    const auto status = r.uint();
    if (status > static_cast<std::uint64_t>(ErrorCode::BudgetExceeded)) {
      throw Error(ErrorCode::MalformedEncoding, "unknown status " + std::to_string(status));
    }
    return Response{static_cast<ErrorCode>(status), r.bytes()};
  });
}

Bytes encode(const EnrollResult& e) {
  return build([&](cbor::Writer& w) {
    w.array(3);
    write(w, e.certificate);
    writeCerts(w, e.chain);
    if (e.serverGeneratedKey) {
      w.bytes(*e.serverGeneratedKey);
    } else {
      w.null();
    }
  });
}

EnrollResult decodeEnrollResult(BytesView bytes) {
  return parse<EnrollResult>(bytes, [](cbor::Reader& r) {
    r.array(3, "enroll result");
    EnrollResult e{read<CompactCertificate>(r), readCerts(r), std::nullopt};
    if (!r.null()) e.serverGeneratedKey = r.bytes();
    return e;
  });
}

Bytes encode(const CheckinResult& c) {
  return build([&](cbor::Writer& w) {
    w.array(2).bytes(c.transferSignerKey);
    writeRelease(w, c.update);
  });
}

CheckinResult decodeCheckinResult(BytesView bytes) {
  return parse<CheckinResult>(bytes, [](cbor::Reader& r) {
    r.array(2, "checkin result");
    Bytes key = r.bytes();
    return CheckinResult{std::move(key), readRelease(r)};
  });
}

Bytes encodeRelease(const std::optional<operators::FirmwareRelease>& rel) {
  return build([&](cbor::Writer& w) { writeRelease(w, rel); });
}

std::optional<operators::FirmwareRelease> decodeRelease(BytesView bytes) {
  return parse<std::optional<operators::FirmwareRelease>>(bytes, [](cbor::Reader& r) { return readRelease(r); });
}

Bytes encode(const TrustUpdate& t) {
  return build([&](cbor::Writer& w) {
    w.array(2);
    writeCerts(w, t.roots);
    w.boolean(t.persistAcrossReset);
  });
}

TrustUpdate decodeTrustUpdate(BytesView bytes) {
  return parse<TrustUpdate>(bytes, [](cbor::Reader& r) {
    r.array(2, "trust update");
    auto roots = readCerts(r);
    return TrustUpdate{std::move(roots), r.boolean()};
  });
}

Bytes encode(const RaEvidence& e) {
  return build([&](cbor::Writer& w) { w.array(2).bytes(e.nonce).bytes(e.measurement); });
}

RaEvidence decodeRaEvidence(BytesView bytes) {
  return parse<RaEvidence>(bytes, [](cbor::Reader& r) {
    r.array(2, "attestation evidence");
    Bytes nonce = r.bytes();
    return RaEvidence{std::move(nonce), r.bytes()};
  });
}

Bytes encodeBool(bool v) {
  return build([&](cbor::Writer& w) { w.boolean(v); });
}

bool decodeBool(BytesView bytes) {
  return parse<bool>(bytes, [](cbor::Reader& r) { return r.boolean(); });
}

}  // namespace ttp::protocol
