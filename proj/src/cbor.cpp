#include "ttp/cbor.hpp"

#include <limits>

#include "ttp/error.hpp"

namespace ttp::cbor {

namespace {

constexpr int kMaxDepth = 16;

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedEncoding, what); }

}  // namespace

void Writer::head(MajorType type, std::uint64_t arg) {
  const auto mt = static_cast<std::uint8_t>(static_cast<std::uint8_t>(type) << 5);
  if (arg < 24) {
    out_.push_back(mt | static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xff) {
    out_.push_back(mt | 24);
    out_.push_back(static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xffff) {
    out_.push_back(mt | 25);
    for (int s = 8; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(arg >> s));
  } else if (arg <= 0xffffffffULL) {
    out_.push_back(mt | 26);
    for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(arg >> s));
  } else {
    out_.push_back(mt | 27);
    for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(arg >> s));
  }
}

Writer& Writer::uint(std::uint64_t v) {
  head(MajorType::Unsigned, v);
  return *this;
}

Writer& Writer::integer(std::int64_t v) {
  if (v >= 0) {
    head(MajorType::Unsigned, static_cast<std::uint64_t>(v));
  } else {
    head(MajorType::Negative, static_cast<std::uint64_t>(-(v + 1)));
  }
  return *this;
}

Writer& Writer::bytes(BytesView b) {
  head(MajorType::ByteString, b.size());
  append(out_, b);
  return *this;
}

Writer& Writer::text(std::string_view s) {
  head(MajorType::TextString, s.size());
  out_.insert(out_.end(), s.begin(), s.end());
  return *this;
}

Writer& Writer::array(std::size_t n) {
  head(MajorType::Array, n);
  return *this;
}

Writer& Writer::map(std::size_t n) {
  head(MajorType::Map, n);
  return *this;
}

Writer& Writer::boolean(bool v) {
  out_.push_back(v ? 0xf5 : 0xf4);
  return *this;
}

Writer& Writer::null() {
  out_.push_back(0xf6);
  return *this;
}

Writer& Writer::raw(BytesView encoded) {
  append(out_, encoded);
  return *this;
}

std::uint8_t Reader::next() {
  if (pos_ >= in_.size()) malformed("unexpected end of input");
  return in_[pos_++];
}

std::uint64_t Reader::argument(std::uint8_t info) {
  if (info < 24) return info;
  int len = 0;
  switch (info) {
    case 24: len = 1; break;
    case 25: len = 2; break;
    case 26: len = 4; break;
    case 27: len = 8; break;
    default: malformed("indefinite or reserved length");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < len; ++i) v = (v << 8) | next();
  // Deterministic encoding requires the shortest form.
  const bool minimal = (len == 1 && v >= 24) || (len == 2 && v > 0xff) || (len == 4 && v > 0xffff) ||
                       (len == 8 && v > 0xffffffffULL);
  if (!minimal) malformed("non-minimal length argument");
  return v;
}

std::uint64_t Reader::head(MajorType expected) {
  if (pos_ >= in_.size()) malformed("unexpected end of input");
  const std::uint8_t ib = in_[pos_];
  const auto type = static_cast<MajorType>(ib >> 5);
  if (type != expected) {
    malformed("expected major type " + std::to_string(static_cast<int>(expected)) + ", got " +
              std::to_string(static_cast<int>(type)));
  }
  ++pos_;
  return argument(ib & 0x1f);
}

std::optional<MajorType> Reader::peek() const {
  if (pos_ >= in_.size()) return std::nullopt;
  return static_cast<MajorType>(in_[pos_] >> 5);
}

std::uint64_t Reader::uint() { return head(MajorType::Unsigned); }

std::int64_t Reader::integer() {
  const auto t = peek();
  if (t == MajorType::Negative) {
    const std::uint64_t arg = head(MajorType::Negative);
    if (arg > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) malformed("integer out of range");
    return -1 - static_cast<std::int64_t>(arg);
  }
  const std::uint64_t v = head(MajorType::Unsigned);
  if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) malformed("integer out of range");
  return static_cast<std::int64_t>(v);
}

Bytes Reader::bytes() {
  const std::uint64_t n = head(MajorType::ByteString);
  if (n > in_.size() - pos_) malformed("byte string exceeds input");
  Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::string Reader::text() {
  const std::uint64_t n = head(MajorType::TextString);
  if (n > in_.size() - pos_) malformed("text string exceeds input");
  std::string out(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::size_t Reader::array() {
  const std::uint64_t n = head(MajorType::Array);
  // Every element takes at least one byte.
  if (n > in_.size() - pos_) malformed("array length exceeds input");
  return static_cast<std::size_t>(n);
}

void Reader::array(std::size_t n, std::string_view what) {
  const std::size_t got = array();
  if (got != n) {
    malformed(std::string(what) + ": expected " + std::to_string(n) + " elements, got " + std::to_string(got));
  }
}

std::size_t Reader::map() {
  const std::uint64_t n = head(MajorType::Map);
  if (n > (in_.size() - pos_) / 2) malformed("map length exceeds input");
  return static_cast<std::size_t>(n);
}

bool Reader::boolean() {
  const std::uint8_t b = next();
  if (b == 0xf4) return false;
  if (b == 0xf5) return true;
  --pos_;
  malformed("expected boolean");
}

bool Reader::null() {
  if (pos_ < in_.size() && in_[pos_] == 0xf6) {
    ++pos_;
    return true;
  }
  return false;
}

void Reader::skip(int depth) {
  if (depth > kMaxDepth) malformed("nesting too deep");
  const auto t = peek();
  if (!t) malformed("unexpected end of input");
  switch (*t) {
    case MajorType::Unsigned: uint(); break;
    case MajorType::Negative: integer(); break;
    case MajorType::ByteString: bytes(); break;
    case MajorType::TextString: text(); break;
    case MajorType::Array: {
      const std::size_t n = array();
      for (std::size_t i = 0; i < n; ++i) skip(depth + 1);
      break;
    }
    case MajorType::Map: {
      const std::size_t n = map();
      for (std::size_t i = 0; i < 2 * n; ++i) skip(depth + 1);
      break;
    }
    case MajorType::Simple: {
      const std::uint8_t b = in_[pos_];
      if (b != 0xf4 && b != 0xf5 && b != 0xf6) malformed("unsupported simple value");
      ++pos_;
      break;
    }
    case MajorType::Tag: malformed("tags are not supported");
  }
}

BytesView Reader::item() {
  const std::size_t start = pos_;
  skip(0);
  return in_.subspan(start, pos_ - start);
}

void Reader::finish() const {
  if (pos_ != in_.size()) malformed(std::to_string(in_.size() - pos_) + " trailing bytes");
}

}  // namespace ttp::cbor
