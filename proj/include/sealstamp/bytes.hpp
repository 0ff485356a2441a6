#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sealstamp {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Lowercase hex, no prefix.
std::string to_hex(ByteView bytes);

/// Accepts upper or lower case. Throws Error{validation} on odd length or
/// non-hex characters.
Bytes from_hex(std::string_view hex);

/// Cryptographically secure random bytes. Throws Error{entropy} when the
/// generator cannot be seeded; the output is never left zero-filled.
void random_fill(std::span<std::uint8_t> out);

/// Zeroes memory in a way the optimizer will not elide.
void secure_wipe(std::span<std::uint8_t> bytes) noexcept;

/// Constant-time equality for equal-length buffers.
bool constant_time_equal(ByteView a, ByteView b) noexcept;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Pull-style byte producer. read() fills up to out.size() bytes and returns
/// the count; 0 signals end of stream.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::size_t read(std::span<std::uint8_t> out) = 0;
};

class SpanSource final : public ByteSource {
 public:
  explicit SpanSource(ByteView data) : data_(data) {}
  std::size_t read(std::span<std::uint8_t> out) override;

 private:
  ByteView data_;
  std::size_t offset_ = 0;
};

class IStreamSource final : public ByteSource {
 public:
  explicit IStreamSource(std::istream& in) : in_(in) {}
  std::size_t read(std::span<std::uint8_t> out) override;

 private:
  std::istream& in_;
};

}  // namespace sealstamp
