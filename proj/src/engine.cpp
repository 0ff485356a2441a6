#include "sealstamp/engine.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "sealstamp/error.hpp"
#include "sealstamp/provenance.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Accumulates elapsed milliseconds into a slot, or does nothing when disabled.
class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled) {
    if (enabled_) start_ = Clock::now();
  }
  void add_to(double& slot) {
    if (!enabled_) return;
    const auto now = Clock::now();
    slot += std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
  }

 private:
  bool enabled_;
  Clock::time_point start_{};
};

/// Pulls plaintext, yields envelope bytes, hashes both sides on the way.
class EncryptingSource final : public ByteSource {
 public:
  EncryptingSource(std::istream& plain, const KeyMaterial& key, std::size_t chunk_size,
                   UploadTimings& timings, bool timed, std::function<void()> on_second_chunk)
      : timed_(timed),
        plain_(plain),
        encryptor_(key),
        plain_buf_(chunk_size),
        staged_(std::max(chunk_size, kEnvelopeHeaderSize + kTagSize)),
        timings_(timings),
        on_second_chunk_(std::move(on_second_chunk)) {}

  ~EncryptingSource() override { secure_wipe(plain_buf_); }

  std::size_t read(std::span<std::uint8_t> out) override {
    std::size_t written = 0;
    while (written < out.size()) {
      if (offset_ == staged_len_) {
        if (stage_ == Stage::done) break;
        refill();
        continue;
      }
      const std::size_t n = std::min(out.size() - written, staged_len_ - offset_);
      std::copy_n(staged_.begin() + static_cast<std::ptrdiff_t>(offset_), n, out.begin() + static_cast<std::ptrdiff_t>(written));
      offset_ += n;
      written += n;
    }
    return written;
  }

  Digest plaintext_digest() { return plain_hash_.finish(); }
  Digest ciphertext_digest() { return cipher_hash_.finish(); }
  /// Time spent producing bytes (read, hash, encrypt) while the consumer waited.
  double inner_ms() const { return inner_ms_; }
  std::uint64_t plaintext_bytes() const { return plaintext_bytes_; }

 private:
  enum class Stage { header, body, done };

  void stage_cipher_bytes(ByteView bytes) {
    Stopwatch sw(timed_);
    cipher_hash_.update(bytes);
    sw.add_to(timings_.ciphertext_hash);
  }

  void stage(ByteView bytes) {
    std::copy(bytes.begin(), bytes.end(), staged_.begin());
    staged_len_ = bytes.size();
  }

  void refill() {
    Stopwatch whole(timed_);
    staged_len_ = 0;
    offset_ = 0;
    if (stage_ == Stage::header) {
      stage(encryptor_.header());
      stage_cipher_bytes(ByteView(staged_).first(staged_len_));
      stage_ = Stage::body;
      whole.add_to(inner_ms_);
      return;
    }
    if (++body_chunks_ == 2 && on_second_chunk_) on_second_chunk_();
    plain_.read(reinterpret_cast<char*>(plain_buf_.data()), static_cast<std::streamsize>(plain_buf_.size()));
    if (plain_.bad()) fail(ErrorCode::io, "read failure on plaintext input");
    const auto n = static_cast<std::size_t>(plain_.gcount());
    Stopwatch sw(timed_);
    if (n > 0) {
      const ByteView chunk = ByteView(plain_buf_).first(n);
      plaintext_bytes_ += n;
      plain_hash_.update(chunk);
      sw.add_to(timings_.plaintext_hash);
      encryptor_.update(chunk, std::span(staged_).first(n));
      staged_len_ = n;
      sw.add_to(timings_.encrypt);
      stage_cipher_bytes(ByteView(staged_).first(n));
    } else {
      const auto tag = encryptor_.finish();
      sw.add_to(timings_.encrypt);
      stage(tag);
      stage_cipher_bytes(ByteView(staged_).first(staged_len_));
      stage_ = Stage::done;
    }
    whole.add_to(inner_ms_);
  }

  bool timed_;
  std::istream& plain_;
  EnvelopeEncryptor encryptor_;
  Bytes plain_buf_;
  Bytes staged_;
  std::size_t staged_len_ = 0;
  std::size_t offset_ = 0;
  Stage stage_ = Stage::header;
  Sha512 plain_hash_;
  Sha512 cipher_hash_;
  UploadTimings& timings_;
  std::function<void()> on_second_chunk_;
  int body_chunks_ = 0;
  double inner_ms_ = 0;
  std::uint64_t plaintext_bytes_ = 0;
};

}  // namespace

// Holds unverified plaintext until the download checks pass.
class Engine::Staging {
 public:
  virtual ~Staging() = default;
  virtual void write(ByteView chunk) = 0;
  virtual void commit() = 0;
  virtual void discard() noexcept = 0;
};

namespace {

class MemoryStaging final : public Engine::Staging {
 public:
  void write(ByteView chunk) override { data_.insert(data_.end(), chunk.begin(), chunk.end()); }
  void commit() override {}
  void discard() noexcept override {
    secure_wipe(data_);
    data_.clear();
  }
  Bytes take() { return std::move(data_); }

 private:
  Bytes data_;
};

class FileStaging final : public Engine::Staging {
 public:
  explicit FileStaging(fs::path out) : out_(std::move(out)) {
    tmp_ = out_;
    tmp_ += ".partial-" + random_hex_id(4);
    stream_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!stream_) fail(ErrorCode::io, "cannot write " + tmp_.string());
  }
  ~FileStaging() override {
    if (!committed_) discard();
  }
  void write(ByteView chunk) override {
    stream_.write(reinterpret_cast<const char*>(chunk.data()), static_cast<std::streamsize>(chunk.size()));
    if (!stream_) fail(ErrorCode::io, "write failure on " + tmp_.string());
  }
  void commit() override {
    stream_.close();
    if (!stream_) fail(ErrorCode::io, "close failure on " + tmp_.string());
    fs::rename(tmp_, out_);
    committed_ = true;
  }
  void discard() noexcept override {
    stream_.close();
    std::error_code ec;
    fs::remove(tmp_, ec);
  }

 private:
  fs::path out_;
  fs::path tmp_;
  std::ofstream stream_;
  bool committed_ = false;
};

}  // namespace

// ---- small types -----------------------------------------------------------

UploadInput UploadInput::from_file(const fs::path& path) {
  return {path.filename().string(), [path]() -> std::unique_ptr<std::istream> {
            auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
            if (!*in) fail(ErrorCode::io, "cannot read " + path.string());
            return in;
          }};
}

UploadInput UploadInput::from_bytes(std::string label, Bytes content) {
  auto shared = std::make_shared<const std::string>(content.begin(), content.end());
  return {std::move(label), [shared]() -> std::unique_ptr<std::istream> {
            return std::make_unique<std::istringstream>(*shared);
          }};
}

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::pending: return "pending";
    case CheckStatus::unverifiable: return "unverifiable-without-plaintext";
  }
  return "fail";
}

bool VerifyReport::any_failure() const {
  return ciphertext_check == CheckStatus::fail || combined_hash_check == CheckStatus::fail ||
         anchor_check == CheckStatus::fail || plaintext_check == CheckStatus::fail;
}

// ---- engine ------------------------------------------------------------------

Engine::Engine(Repository& repository, RecordStore& records, Anchorer& anchorer, EngineOptions options)
    : repository_(repository), records_(records), anchorer_(anchorer), options_(std::move(options)) {
  if (options_.chunk_size < 1) fail(ErrorCode::validation, "chunk size must be >= 1");
  if (options_.kdf_iterations < 1) fail(ErrorCode::validation, "kdf iterations must be >= 1");
  if (options_.upload_concurrency < 1) options_.upload_concurrency = 1;
  // A crash between record put and enqueue leaves a pending record that no
  // queue entry will ever anchor; put it back in line.
  for (const FileRecord& r : records_.all()) {
    if (r.pending() && !anchorer_.is_queued(r.file_id)) anchorer_.enqueue({r.file_id, r.digests()});
  }
}

void Engine::fault(FaultPoint point) const {
  if (options_.fault_hook) options_.fault_hook(point);
}

UploadedFile Engine::upload_one(const DatasetRef& dataset, const UploadInput& input,
                                const Password& password, bool escrow) {
  const auto start = Clock::now();
  UploadedFile out;
  UploadTimings& t = out.timings;

  auto in = input.open();
  if (!in || !*in) fail(ErrorCode::io, "cannot read " + input.label);

  KdfParams kdf;
  kdf.iterations = options_.kdf_iterations;
  kdf.salt = Salt::random();
  auto phase = Clock::now();
  const KeyMaterial key = derive_key(password, kdf);
  t.key_gen = ms_since(phase);
  fault(FaultPoint::after_key_derivation);

  EncryptingSource source(*in, key, options_.chunk_size, t, options_.collect_timings,
                          [this] { fault(FaultPoint::mid_store); });
  phase = Clock::now();
  out.ref = repository_.store(dataset, input.label, source);
  t.store = std::max(0.0, ms_since(phase) - source.inner_ms());

  FileRecord& record = out.record;
  bool record_written = false;
  try {
    fault(FaultPoint::after_store);
    record.file_id = out.ref.file_id;
    record.label = input.label;
    record.created_utc = utc_now();
    record.kdf = kdf;
    record.plaintext_digest = source.plaintext_digest();
    record.ciphertext_digest = source.ciphertext_digest();

    std::lock_guard lock(commit_mu_);
    record.receipt = anchorer_.try_anchor(record.digests());
    phase = Clock::now();
    records_.put(record);
    t.record_put = ms_since(phase);
    record_written = true;
    if (record.pending()) anchorer_.enqueue({record.file_id, record.digests()});
  } catch (...) {
    if (!record_written) {
      try {
        repository_.remove(out.ref.file_id);
      } catch (...) {
      }
    }
    throw;
  }
  fault(FaultPoint::after_record_put);

  if (escrow) out.shares = split_key(key);
  t.total = ms_since(start);
  t.other = std::max(0.0, t.total - (t.key_gen + t.encrypt + t.plaintext_hash + t.ciphertext_hash +
                                     t.store + t.record_put));
  return out;
}

UploadResult Engine::upload(const DatasetRef& dataset, const std::vector<UploadInput>& files,
                            const Password& password, bool escrow) {
  if (password.empty()) fail(ErrorCode::validation, "password must not be empty");
  if (files.empty()) fail(ErrorCode::validation, "no files to upload");
  validate_dataset_id(dataset.dataset_id);

  std::vector<std::optional<UploadedFile>> done(files.size());
  std::vector<std::optional<UploadFailure>> failed(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        done[i] = upload_one(dataset, files[i], password, escrow);
      } catch (const Error& e) {
        failed[i] = UploadFailure{files[i].label, e.code(), e.what()};
      } catch (const std::exception& e) {
        failed[i] = UploadFailure{files[i].label, ErrorCode::io, e.what()};
      }
    }
  };
  const std::size_t width = std::min(options_.upload_concurrency, files.size());
  std::vector<std::thread> helpers;
  for (std::size_t i = 1; i < width; ++i) helpers.emplace_back(worker);
  worker();
  for (auto& th : helpers) th.join();

  UploadResult result;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (done[i]) {
      if (done[i]->record.pending()) result.receipt_state = ReceiptState::pending;
      result.files.push_back(std::move(*done[i]));
    }
    if (failed[i]) result.failures.push_back(std::move(*failed[i]));
  }
  return result;
}

void Engine::download_into(std::string_view file_id, const KeyMaterial& key, Staging& staging) {
  const FileRecord record = records_.get(file_id);
  Sha512 cipher_hash;
  Sha512 plain_hash;
  try {
    EnvelopeDecryptor decryptor(key, [&](ByteView plain) {
      plain_hash.update(plain);
      staging.write(plain);
    });
    try {
      repository_.fetch(file_id, [&](ByteView chunk) {
        cipher_hash.update(chunk);
        decryptor.feed(chunk);
      });
      decryptor.finish();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::format) throw;
      fail(ErrorCode::authentication, "stored envelope for " + std::string(file_id) + " is malformed: " + e.what());
    }
    if (cipher_hash.finish() != record.ciphertext_digest)
      fail(ErrorCode::integrity, "ciphertext digest does not match the record for " + std::string(file_id));
    if (plain_hash.finish() != record.plaintext_digest)
      fail(ErrorCode::integrity, "plaintext digest does not match the record for " + std::string(file_id));
    staging.commit();
  } catch (...) {
    staging.discard();
    throw;
  }
}

Bytes Engine::download_with_password(std::string_view file_id, const Password& password) {
  const FileRecord record = records_.get(file_id);
  MemoryStaging staging;
  download_into(file_id, derive_key(password, record.kdf), staging);
  return staging.take();
}

void Engine::download_with_password(std::string_view file_id, const Password& password,
                                    const fs::path& out) {
  const FileRecord record = records_.get(file_id);
  const KeyMaterial key = derive_key(password, record.kdf);
  FileStaging staging(out);
  download_into(file_id, key, staging);
}

Bytes Engine::download_with_shares(std::string_view file_id, ByteView q, ByteView r) {
  const KeyMaterial key = combine_shares(q, r);
  MemoryStaging staging;
  download_into(file_id, key, staging);
  return staging.take();
}

void Engine::download_with_shares(std::string_view file_id, ByteView q, ByteView r,
                                  const fs::path& out) {
  const KeyMaterial key = combine_shares(q, r);
  records_.get(file_id);
  FileStaging staging(out);
  download_into(file_id, key, staging);
}

VerifyReport Engine::verify(std::string_view file_id, std::istream* plaintext) {
  const FileRecord record = records_.get(file_id);
  VerifyReport report;
  report.file_id = record.file_id;
  report.receipt = record.receipt;

  Sha512 cipher_hash;
  repository_.fetch(file_id, [&](ByteView chunk) { cipher_hash.update(chunk); });
  report.recomputed_ciphertext_digest = cipher_hash.finish();
  report.ciphertext_check = report.recomputed_ciphertext_digest == record.ciphertext_digest
                                ? CheckStatus::pass
                                : CheckStatus::fail;

  if (plaintext) {
    IStreamSource src(*plaintext);
    report.recomputed_plaintext_digest = hash_stream(src, options_.chunk_size);
    report.plaintext_check = *report.recomputed_plaintext_digest == record.plaintext_digest
                                 ? CheckStatus::pass
                                 : CheckStatus::fail;
  }

  report.file_combined_hash =
      combined_hash({{record.plaintext_digest, report.recomputed_ciphertext_digest}}).value;

  if (record.pending()) {
    report.anchor_check = CheckStatus::pending;
    report.combined_hash_check = CheckStatus::unverifiable;
    report.anchor_diagnostic = "anchoring pending";
    return report;
  }

  const AnchorProvider& provider = anchorer_.provider();
  report.anchor_check = verify_receipt(provider, *record.receipt, report.file_combined_hash,
                                       &report.anchor_diagnostic)
                            ? CheckStatus::pass
                            : CheckStatus::fail;
  if (report.recomputed_plaintext_digest) {
    const Digest full = combined_hash({{*report.recomputed_plaintext_digest,
                                        report.recomputed_ciphertext_digest}}).value;
    std::string why;
    report.combined_hash_check =
        verify_receipt(provider, *record.receipt, full, &why) ? CheckStatus::pass : CheckStatus::fail;
  } else {
    report.combined_hash_check = CheckStatus::unverifiable;
  }
  return report;
}

FlushOutcome Engine::flush_anchors() {
  std::lock_guard lock(commit_mu_);
  return anchorer_.flush_batch(
      [this](const std::string& file_id, const AnchorReceipt& receipt) {
        try {
          records_.attach_receipt(file_id, receipt);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::conflict && e.code() != ErrorCode::not_found) throw;
        }
      },
      [this](const std::string& file_id) {
        if (!records_.contains(file_id)) return false;
        return records_.get(file_id).pending();
      });
}

}  // namespace sealstamp
