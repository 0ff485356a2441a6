#pragma once

// Hashing, password-based key derivation, envelope AEAD and two-party XOR
// key splitting. Algorithm suite for envelope version 0x01:
//   hash  SHA-512 (64-byte digests)
//   KDF   PBKDF2-HMAC-SHA512, 32-byte output, iterations recorded per file
//   AEAD  AES-256-GCM, 96-bit random nonce, 128-bit tag
//
// Envelope layout (bit-exact):
//   offset 0   "GVR1"      magic
//   offset 4   0x01        version
//   offset 5   nonce[12]
//   offset 17  body[n]     ciphertext, n = plaintext length
//   offset 17+n tag[16]
// The 5 magic/version bytes are bound into the tag as associated data.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "sealstamp/bytes.hpp"

namespace sealstamp {

inline constexpr std::size_t kDigestSize = 64;
inline constexpr std::size_t kSaltSize = 16;
inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::array<std::uint8_t, 4> kEnvelopeMagic = {'G', 'V', 'R', '1'};
inline constexpr std::uint8_t kEnvelopeVersion = 0x01;
inline constexpr std::size_t kEnvelopeHeaderSize = 4 + 1 + kNonceSize;
inline constexpr std::size_t kEnvelopeOverhead = kEnvelopeHeaderSize + kTagSize;
inline constexpr std::uint32_t kDefaultKdfIterations = 120000;
inline constexpr std::size_t kDefaultChunkSize = 1 << 20;

struct Digest {
  std::array<std::uint8_t, kDigestSize> bytes{};

  std::string hex() const { return to_hex(bytes); }
  static Digest from_hex(std::string_view hex);
  static Digest from_bytes(ByteView raw);

  friend bool operator==(const Digest&, const Digest&) = default;
  friend auto operator<=>(const Digest&, const Digest&) = default;
};

struct Salt {
  std::array<std::uint8_t, kSaltSize> bytes{};

  static Salt random();
  std::string hex() const { return to_hex(bytes); }
  static Salt from_hex(std::string_view hex);

  friend bool operator==(const Salt&, const Salt&) = default;
};

/// 32-byte symmetric key. Wiped on destruction; never serialized outside the
/// escrow share path.
class KeyMaterial {
 public:
  KeyMaterial() = default;
  explicit KeyMaterial(ByteView raw);
  KeyMaterial(const KeyMaterial&) = default;
  KeyMaterial& operator=(const KeyMaterial&) = default;
  ~KeyMaterial() { secure_wipe(bytes_); }

  ByteView view() const { return bytes_; }
  std::span<std::uint8_t> mutable_view() { return bytes_; }

  friend bool operator==(const KeyMaterial& a, const KeyMaterial& b) {
    return constant_time_equal(a.bytes_, b.bytes_);
  }

 private:
  std::array<std::uint8_t, kKeySize> bytes_{};
};

/// UTF-8 password text. Wiped on destruction; has no serialization surface.
class Password {
 public:
  explicit Password(std::string text) : text_(std::move(text)) {}
  Password(const Password&) = default;
  Password& operator=(const Password&) = default;
  ~Password();

  std::string_view text() const { return text_; }
  bool empty() const { return text_.empty(); }

 private:
  std::string text_;
};

struct KdfParams {
  std::uint32_t iterations = kDefaultKdfIterations;
  std::size_t key_length = kKeySize;
  Salt salt;

  /// Throws Error{validation} unless iterations >= 1 and key_length == 32.
  void validate() const;
};

struct SharePair {
  std::array<std::uint8_t, kKeySize> q{};
  std::array<std::uint8_t, kKeySize> r{};
};

/// Incremental SHA-512.
class Sha512 {
 public:
  Sha512();
  ~Sha512();
  Sha512(Sha512&&) noexcept;
  Sha512& operator=(Sha512&&) noexcept;

  void update(ByteView data);
  Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Digest hash_bytes(ByteView data);

/// Digest of everything the source yields, read chunk_size bytes at a time.
/// I/O errors propagate; no partial digest is returned.
Digest hash_stream(ByteSource& input, std::size_t chunk_size = kDefaultChunkSize);

KeyMaterial derive_key(const Password& password, const KdfParams& params);

/// Streaming envelope writer. The header (with a fresh nonce) is available
/// right after construction; body bytes come from update(); finish() yields
/// the tag.
class EnvelopeEncryptor {
 public:
  explicit EnvelopeEncryptor(const KeyMaterial& key);
  ~EnvelopeEncryptor();
  EnvelopeEncryptor(EnvelopeEncryptor&&) noexcept;
  EnvelopeEncryptor& operator=(EnvelopeEncryptor&&) noexcept;

  const std::array<std::uint8_t, kEnvelopeHeaderSize>& header() const { return header_; }
  ByteView nonce() const { return ByteView(header_).subspan(5, kNonceSize); }
  /// out.size() must be >= in.size().
  void update(ByteView in, std::span<std::uint8_t> out);
  std::array<std::uint8_t, kTagSize> finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::array<std::uint8_t, kEnvelopeHeaderSize> header_{};
};

/// Streaming envelope reader. Plaintext handed to the sink is UNVERIFIED
/// until finish() returns; callers must stage it and discard on any error.
class EnvelopeDecryptor {
 public:
  using Sink = std::function<void(ByteView)>;

  EnvelopeDecryptor(const KeyMaterial& key, Sink sink);
  ~EnvelopeDecryptor();
  EnvelopeDecryptor(EnvelopeDecryptor&&) noexcept;
  EnvelopeDecryptor& operator=(EnvelopeDecryptor&&) noexcept;

  /// Throws Error{format} on a bad magic/version.
  void feed(ByteView chunk);
  /// Throws Error{format} when the envelope is truncated and
  /// Error{authentication} when the tag does not verify.
  void finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Bytes encrypt(ByteView plaintext, const KeyMaterial& key);

/// Returns the plaintext only after the tag verifies.
Bytes decrypt(ByteView envelope, const KeyMaterial& key);

SharePair split_key(const KeyMaterial& key);
KeyMaterial combine_shares(ByteView q, ByteView r);

}  // namespace sealstamp
