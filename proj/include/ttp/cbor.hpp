#pragma once

// Minimal deterministic CBOR (RFC 8949 core deterministic encoding) covering
// the subset the protocol messages use: unsigned/negative integers, byte and
// text strings, definite-length arrays and maps, false/true/null.
//
// The reader is strict: non-minimal length arguments, indefinite lengths,
// tags, floats and unknown simple values are all MalformedEncoding.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ttp/bytes.hpp"

namespace ttp::cbor {

enum class MajorType : std::uint8_t {
  Unsigned = 0,
  Negative = 1,
  ByteString = 2,
  TextString = 3,
  Array = 4,
  Map = 5,
  Tag = 6,
  Simple = 7,
};

class Writer {
 public:
  Writer& uint(std::uint64_t v);
  Writer& integer(std::int64_t v);
  Writer& bytes(BytesView b);
  Writer& text(std::string_view s);
  Writer& array(std::size_t n);
  Writer& map(std::size_t n);
  Writer& boolean(bool v);
  Writer& null();
  /// Appends an already-encoded data item verbatim.
  Writer& raw(BytesView encoded);

  const Bytes& data() const& { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  void head(MajorType type, std::uint64_t arg);
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(BytesView in) : in_(in) {}

  std::uint64_t uint();
  std::int64_t integer();
  Bytes bytes();
  std::string text();
  std::size_t array();
  /// Reads an array header and checks it has exactly `n` elements.
  void array(std::size_t n, std::string_view what);
  std::size_t map();
  bool boolean();
  /// Consumes a null if one is next.
  bool null();
  /// Returns the raw encoding of the next complete data item and skips it.
  BytesView item();

  std::optional<MajorType> peek() const;
  bool atEnd() const { return pos_ == in_.size(); }
  /// Throws MalformedEncoding on trailing bytes.
  void finish() const;
  std::size_t position() const { return pos_; }

 private:
  std::uint64_t head(MajorType expected);
  std::uint64_t argument(std::uint8_t info);
  std::uint8_t next();
  void skip(int depth);

  BytesView in_;
  std::size_t pos_ = 0;
};

}  // namespace ttp::cbor
