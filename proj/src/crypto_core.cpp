#include "sealstamp/crypto_core.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <climits>
#include <cstring>

#include "sealstamp/error.hpp"

namespace sealstamp {

namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

[[noreturn]] void openssl_failure(const char* what) {
  fail(ErrorCode::io, std::string("openssl: ") + what + " failed");
}

CipherCtx new_gcm_ctx(const KeyMaterial& key, ByteView nonce, bool encrypting) {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  const int enc = encrypting ? 1 : 0;
  if (EVP_CipherInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr, enc) != 1)
    openssl_failure("cipher init");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()),
                          nullptr) != 1)
    openssl_failure("set iv length");
  if (EVP_CipherInit_ex(ctx.get(), nullptr, nullptr, key.view().data(), nonce.data(), enc) != 1)
    openssl_failure("cipher key init");
  int unused = 0;
  const std::array<std::uint8_t, 5> aad = {kEnvelopeMagic[0], kEnvelopeMagic[1],
                                           kEnvelopeMagic[2], kEnvelopeMagic[3],
                                           kEnvelopeVersion};
  if (EVP_CipherUpdate(ctx.get(), nullptr, &unused, aad.data(), static_cast<int>(aad.size())) != 1)
    openssl_failure("aad");
  return ctx;
}

// EVP lengths are int; feed large spans in slices.
void cipher_update(EVP_CIPHER_CTX* ctx, ByteView in, std::uint8_t* out) {
  constexpr std::size_t kSlice = std::size_t{1} << 30;
  std::size_t done = 0;
  while (done < in.size()) {
    const std::size_t n = std::min(kSlice, in.size() - done);
    int written = 0;
    if (EVP_CipherUpdate(ctx, out + done, &written, in.data() + done, static_cast<int>(n)) != 1)
      openssl_failure("cipher update");
    done += static_cast<std::size_t>(written);
  }
}

}  // namespace

// ---- value types ---------------------------------------------------------

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kDigestSize) fail(ErrorCode::validation, "digest hex must be 128 chars");
  return from_bytes(sealstamp::from_hex(hex));
}

Digest Digest::from_bytes(ByteView raw) {
  if (raw.size() != kDigestSize) fail(ErrorCode::validation, "digest must be 64 bytes");
  Digest d;
  std::copy(raw.begin(), raw.end(), d.bytes.begin());
  return d;
}

Salt Salt::random() {
  Salt s;
  random_fill(s.bytes);
  return s;
}

Salt Salt::from_hex(std::string_view hex) {
  const Bytes raw = sealstamp::from_hex(hex);
  if (raw.size() != kSaltSize) fail(ErrorCode::validation, "salt must be 16 bytes");
  Salt s;
  std::copy(raw.begin(), raw.end(), s.bytes.begin());
  return s;
}

KeyMaterial::KeyMaterial(ByteView raw) {
  if (raw.size() != kKeySize) fail(ErrorCode::validation, "key must be 32 bytes");
  std::copy(raw.begin(), raw.end(), bytes_.begin());
}

Password::~Password() {
  secure_wipe({reinterpret_cast<std::uint8_t*>(text_.data()), text_.size()});
}

void KdfParams::validate() const {
  if (iterations < 1) fail(ErrorCode::validation, "kdf iterations must be >= 1");
  if (key_length != kKeySize) fail(ErrorCode::validation, "kdf key length must be 32");
}

// ---- hashing ---------------------------------------------------------------

struct Sha512::Impl {
  MdCtx ctx{EVP_MD_CTX_new()};
};

Sha512::Sha512() : impl_(std::make_unique<Impl>()) {
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx.get(), EVP_sha512(), nullptr) != 1)
    openssl_failure("digest init");
}

Sha512::~Sha512() = default;
Sha512::Sha512(Sha512&&) noexcept = default;
Sha512& Sha512::operator=(Sha512&&) noexcept = default;

void Sha512::update(ByteView data) {
  if (data.empty()) return;
  if (EVP_DigestUpdate(impl_->ctx.get(), data.data(), data.size()) != 1)
    openssl_failure("digest update");
}

Digest Sha512::finish() {
  Digest d;
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx.get(), d.bytes.data(), &len) != 1 || len != kDigestSize)
    openssl_failure("digest final");
  return d;
}

Digest hash_bytes(ByteView data) {
  Sha512 h;
  h.update(data);
  return h.finish();
}

Digest hash_stream(ByteSource& input, std::size_t chunk_size) {
  if (chunk_size < 1) fail(ErrorCode::validation, "chunk size must be >= 1");
  Sha512 h;
  Bytes buf(chunk_size);
  while (const std::size_t n = input.read(buf)) h.update(ByteView(buf).first(n));
  return h.finish();
}

// ---- key derivation ----------------------------------------------------------

KeyMaterial derive_key(const Password& password, const KdfParams& params) {
  if (password.empty()) fail(ErrorCode::validation, "password must not be empty");
  params.validate();
  if (password.text().size() > INT_MAX) fail(ErrorCode::validation, "password too long");
  KeyMaterial key;
  auto out = key.mutable_view();
  if (PKCS5_PBKDF2_HMAC(password.text().data(), static_cast<int>(password.text().size()),
                        params.salt.bytes.data(), static_cast<int>(params.salt.bytes.size()),
                        static_cast<int>(std::min<std::uint32_t>(params.iterations, INT_MAX)),
                        EVP_sha512(), static_cast<int>(out.size()), out.data()) != 1)
    openssl_failure("PBKDF2");
  return key;
}

// ---- envelope encryption -------------------------------------------------------

struct EnvelopeEncryptor::Impl {
  CipherCtx ctx;
  bool finished = false;
};

EnvelopeEncryptor::EnvelopeEncryptor(const KeyMaterial& key) : impl_(std::make_unique<Impl>()) {
  std::copy(kEnvelopeMagic.begin(), kEnvelopeMagic.end(), header_.begin());
  header_[4] = kEnvelopeVersion;
  random_fill(std::span(header_).subspan(5, kNonceSize));
  impl_->ctx = new_gcm_ctx(key, nonce(), true);
}

EnvelopeEncryptor::~EnvelopeEncryptor() = default;
EnvelopeEncryptor::EnvelopeEncryptor(EnvelopeEncryptor&&) noexcept = default;
EnvelopeEncryptor& EnvelopeEncryptor::operator=(EnvelopeEncryptor&&) noexcept = default;

void EnvelopeEncryptor::update(ByteView in, std::span<std::uint8_t> out) {
  if (impl_->finished) fail(ErrorCode::validation, "encryptor already finished");
  if (out.size() < in.size()) fail(ErrorCode::validation, "output buffer too small");
  cipher_update(impl_->ctx.get(), in, out.data());
}

std::array<std::uint8_t, kTagSize> EnvelopeEncryptor::finish() {
  if (impl_->finished) fail(ErrorCode::validation, "encryptor already finished");
  impl_->finished = true;
  int written = 0;
  std::array<std::uint8_t, 16> scratch{};
  if (EVP_EncryptFinal_ex(impl_->ctx.get(), scratch.data(), &written) != 1)
    openssl_failure("encrypt final");
  std::array<std::uint8_t, kTagSize> tag{};
  if (EVP_CIPHER_CTX_ctrl(impl_->ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, tag.data()) != 1)
    openssl_failure("get tag");
  return tag;
}

struct EnvelopeDecryptor::Impl {
  KeyMaterial key;
  Sink sink;
  CipherCtx ctx;
  std::array<std::uint8_t, kEnvelopeHeaderSize> header{};
  std::size_t header_len = 0;
  // The last kTagSize bytes seen so far; they may turn out to be the tag.
  Bytes holdback;
  Bytes scratch;
  Bytes out;
  bool finished = false;

  void process_body(ByteView body) {
    if (body.empty()) return;
    out.resize(body.size());
    cipher_update(ctx.get(), body, out.data());
    sink(ByteView(out).first(body.size()));
  }
};

EnvelopeDecryptor::EnvelopeDecryptor(const KeyMaterial& key, Sink sink)
    : impl_(std::make_unique<Impl>()) {
  impl_->key = key;
  impl_->sink = std::move(sink);
}

EnvelopeDecryptor::~EnvelopeDecryptor() {
  if (impl_) {
    secure_wipe(impl_->out);
    secure_wipe(impl_->scratch);
  }
}
EnvelopeDecryptor::EnvelopeDecryptor(EnvelopeDecryptor&&) noexcept = default;
EnvelopeDecryptor& EnvelopeDecryptor::operator=(EnvelopeDecryptor&&) noexcept = default;

void EnvelopeDecryptor::feed(ByteView chunk) {
  Impl& s = *impl_;
  if (s.finished) fail(ErrorCode::validation, "decryptor already finished");
  if (s.header_len < kEnvelopeHeaderSize) {
    const std::size_t take = std::min(chunk.size(), kEnvelopeHeaderSize - s.header_len);
    std::copy_n(chunk.begin(), take, s.header.begin() + static_cast<std::ptrdiff_t>(s.header_len));
    s.header_len += take;
    chunk = chunk.subspan(take);
    if (s.header_len < kEnvelopeHeaderSize) return;
    if (!std::equal(kEnvelopeMagic.begin(), kEnvelopeMagic.end(), s.header.begin()))
      fail(ErrorCode::format, "envelope magic mismatch");
    if (s.header[4] != kEnvelopeVersion) fail(ErrorCode::format, "unsupported envelope version");
    s.ctx = new_gcm_ctx(s.key, ByteView(s.header).subspan(5, kNonceSize), false);
  }
  if (chunk.empty()) return;
  if (chunk.size() <= kTagSize) {
    s.holdback.insert(s.holdback.end(), chunk.begin(), chunk.end());
    if (s.holdback.size() > kTagSize) {
      const std::size_t release = s.holdback.size() - kTagSize;
      s.scratch.assign(s.holdback.begin(), s.holdback.begin() + static_cast<std::ptrdiff_t>(release));
      s.holdback.erase(s.holdback.begin(), s.holdback.begin() + static_cast<std::ptrdiff_t>(release));
      s.process_body(s.scratch);
    }
    return;
  }
  // chunk alone covers a full tag's worth: everything held back is body.
  s.process_body(s.holdback);
  s.process_body(chunk.first(chunk.size() - kTagSize));
  auto tail = chunk.last(kTagSize);
  s.holdback.assign(tail.begin(), tail.end());
}

void EnvelopeDecryptor::finish() {
  Impl& s = *impl_;
  if (s.finished) fail(ErrorCode::validation, "decryptor already finished");
  s.finished = true;
  if (s.header_len < kEnvelopeHeaderSize || s.holdback.size() != kTagSize)
    fail(ErrorCode::format, "envelope truncated");
  if (EVP_CIPHER_CTX_ctrl(s.ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, s.holdback.data()) != 1)
    openssl_failure("set tag");
  std::array<std::uint8_t, 16> scratch{};
  int written = 0;
  if (EVP_DecryptFinal_ex(s.ctx.get(), scratch.data(), &written) != 1)
    fail(ErrorCode::authentication, "authentication failed: wrong key or tampered envelope");
}

Bytes encrypt(ByteView plaintext, const KeyMaterial& key) {
  EnvelopeEncryptor enc(key);
  Bytes out(plaintext.size() + kEnvelopeOverhead);
  std::copy(enc.header().begin(), enc.header().end(), out.begin());
  enc.update(plaintext, std::span(out).subspan(kEnvelopeHeaderSize, plaintext.size()));
  const auto tag = enc.finish();
  std::copy(tag.begin(), tag.end(), out.end() - static_cast<std::ptrdiff_t>(kTagSize));
  return out;
}

Bytes decrypt(ByteView envelope, const KeyMaterial& key) {
  if (envelope.size() < kEnvelopeOverhead) fail(ErrorCode::format, "envelope truncated");
  Bytes plain;
  plain.reserve(envelope.size() - kEnvelopeOverhead);
  EnvelopeDecryptor dec(key, [&](ByteView part) { plain.insert(plain.end(), part.begin(), part.end()); });
  try {
    dec.feed(envelope);
    dec.finish();
  } catch (...) {
    secure_wipe(plain);
    throw;
  }
  return plain;
}

// ---- escrow shares -------------------------------------------------------

SharePair split_key(const KeyMaterial& key) {
  SharePair pair;
  random_fill(pair.q);
  const ByteView k = key.view();
  for (std::size_t i = 0; i < kKeySize; ++i) pair.r[i] = pair.q[i] ^ k[i];
  return pair;
}

KeyMaterial combine_shares(ByteView q, ByteView r) {
  if (q.size() != kKeySize || r.size() != kKeySize)
    fail(ErrorCode::validation, "shares must be exactly 32 bytes each");
  KeyMaterial key;
  auto out = key.mutable_view();
  for (std::size_t i = 0; i < kKeySize; ++i) out[i] = q[i] ^ r[i];
  return key;
}

}  // namespace sealstamp
