#pragma once

// Upload, password download, share download and verification over the
// repository, record store and anchorer.
//
// Upload, per file:
//   s <- random salt; K = PBKDF2(p, s); envelope = AES-GCM(K, m)
//   H(m), encryption and H(envelope) run chunk by chunk in one read pass
//   envelope -> repository; (file_id, s, H(m), H(c), receipt|pending) -> record store
//   (H(m), H(c)) anchored immediately or queued for the next batch
// Downloads release plaintext only after the AEAD tag verifies and both
// recomputed digests match the record.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sealstamp/anchors.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/crypto_core.hpp"
#include "sealstamp/record_store.hpp"
#include "sealstamp/repository.hpp"

namespace sealstamp {

/// Points in the upload path where a test can inject a crash.
enum class FaultPoint {
  after_key_derivation,
  mid_store,          // after the first envelope chunk has been handed to the repository
  after_store,
  mid_record_write,   // forwarded to RecordStore::set_mid_write_hook by the caller
  after_record_put,
};

struct EngineOptions {
  std::size_t chunk_size = kDefaultChunkSize;
  std::uint32_t kdf_iterations = kDefaultKdfIterations;
  /// Files of one upload call processed concurrently.
  std::size_t upload_concurrency = 1;
  /// Off: no clock reads in the pipeline; output bytes are unaffected either way.
  bool collect_timings = true;
  std::function<void(FaultPoint)> fault_hook;
};

/// Per-file breakdown, milliseconds on the steady clock. Parts overlap with
/// `store` under the single-pass pipeline, so they need not sum to total.
struct UploadTimings {
  double key_gen = 0;
  double encrypt = 0;
  double plaintext_hash = 0;
  double ciphertext_hash = 0;
  double store = 0;
  double record_put = 0;
  double other = 0;
  double total = 0;
};

struct UploadInput {
  std::string label;
  std::function<std::unique_ptr<std::istream>()> open;

  static UploadInput from_file(const std::filesystem::path& path);
  static UploadInput from_bytes(std::string label, Bytes content);
};

enum class ReceiptState { anchored, pending };

struct UploadedFile {
  StoredFileRef ref;
  FileRecord record;
  std::optional<SharePair> shares;
  UploadTimings timings;
};

struct UploadFailure {
  std::string label;
  ErrorCode code;
  std::string message;
};

struct UploadResult {
  std::vector<UploadedFile> files;    // in input order, successes only
  std::vector<UploadFailure> failures;
  ReceiptState receipt_state = ReceiptState::anchored;

  bool ok() const { return failures.empty(); }
};

enum class CheckStatus { pass, fail, pending, unverifiable };
std::string_view to_string(CheckStatus status);

struct VerifyReport {
  std::string file_id;
  CheckStatus ciphertext_check = CheckStatus::fail;
  CheckStatus combined_hash_check = CheckStatus::unverifiable;
  CheckStatus anchor_check = CheckStatus::fail;
  std::optional<CheckStatus> plaintext_check;

  Digest recomputed_ciphertext_digest;
  std::optional<Digest> recomputed_plaintext_digest;
  /// Per-file combined hash from the record's H(m) and the recomputed H(c).
  Digest file_combined_hash;
  std::optional<AnchorReceipt> receipt;
  std::string anchor_diagnostic;

  bool any_failure() const;
  bool anchor_pending() const { return anchor_check == CheckStatus::pending; }
};

class Engine {
 public:
  Engine(Repository& repository, RecordStore& records, Anchorer& anchorer,
         EngineOptions options = {});

  UploadResult upload(const DatasetRef& dataset, const std::vector<UploadInput>& files,
                      const Password& password, bool escrow);

  /// Error{authentication} on a wrong password or tampered envelope;
  /// Error{integrity} when decryption succeeds but a digest disagrees with
  /// the record. No plaintext is returned or written in either case.
  Bytes download_with_password(std::string_view file_id, const Password& password);
  void download_with_password(std::string_view file_id, const Password& password,
                              const std::filesystem::path& out);

  /// Same contract with K = q xor r. q = K, r = zeros is the direct-key path.
  Bytes download_with_shares(std::string_view file_id, ByteView q, ByteView r);
  void download_with_shares(std::string_view file_id, ByteView q, ByteView r,
                            const std::filesystem::path& out);

  VerifyReport verify(std::string_view file_id, std::istream* plaintext = nullptr);

  /// Anchors queued digests and attaches the receipts to their records.
  FlushOutcome flush_anchors();

  const EngineOptions& options() const { return options_; }
  RecordStore& records() { return records_; }
  Repository& repository() { return repository_; }
  Anchorer& anchorer() { return anchorer_; }

  /// Sink for not-yet-verified plaintext (memory buffer or temp file).
  class Staging;

 private:
  UploadedFile upload_one(const DatasetRef& dataset, const UploadInput& input,
                          const Password& password, bool escrow);
  void download_into(std::string_view file_id, const KeyMaterial& key, Staging& staging);
  void fault(FaultPoint point) const;

  Repository& repository_;
  RecordStore& records_;
  Anchorer& anchorer_;
  EngineOptions options_;
  std::mutex commit_mu_;
};

}  // namespace sealstamp
