#pragma once

// Durable per-file metadata: repository file id, KDF parameters (salt and
// iteration count), both digests, and the anchor receipt. Never plaintext,
// passwords, keys or shares.
//
// Persistence is an append-only log, one tab-separated record per line:
//   op_tag file_id created_utc label salt_hex iterations plaintext_hex
//   ciphertext_hex <6 receipt fields | PENDING>
// op_tag is PUT for the first line of a file and RECEIPT for the single
// pending -> anchored transition. Startup replays the log into an index.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sealstamp/anchors.hpp"
#include "sealstamp/crypto_core.hpp"

namespace sealstamp {

struct FileRecord {
  std::string file_id;
  std::string label;
  std::string created_utc;
  KdfParams kdf;
  Digest plaintext_digest;
  Digest ciphertext_digest;
  std::optional<AnchorReceipt> receipt;  // nullopt while anchoring is pending

  bool pending() const { return !receipt.has_value(); }
  DigestPair digests() const { return {plaintext_digest, ciphertext_digest}; }

  friend bool operator==(const FileRecord& a, const FileRecord& b) {
    return a.file_id == b.file_id && a.label == b.label && a.created_utc == b.created_utc &&
           a.kdf.iterations == b.kdf.iterations && a.kdf.key_length == b.kdf.key_length &&
           a.kdf.salt == b.kdf.salt && a.plaintext_digest == b.plaintext_digest &&
           a.ciphertext_digest == b.ciphertext_digest && a.receipt == b.receipt;
  }
};

std::string format_record_line(std::string_view op_tag, const FileRecord& record);
/// Returns the op tag and the record. Throws Error{format} on a bad line.
std::pair<std::string, FileRecord> parse_record_line(std::string_view line);

class RecordStore {
 public:
  /// Replays the log. A torn final line (no trailing newline) is discarded
  /// and truncated away; a malformed line before the tail is Error{corruption}.
  explicit RecordStore(std::filesystem::path log_path);

  /// Error{conflict} if the file id already has a record.
  void put(const FileRecord& record);
  /// Error{not_found} for unknown ids.
  FileRecord get(std::string_view file_id) const;
  bool contains(std::string_view file_id) const;
  /// Error{not_found}, or Error{conflict} when already anchored.
  void attach_receipt(std::string_view file_id, const AnchorReceipt& receipt);

  /// All records in first-put order.
  std::vector<FileRecord> all() const;
  std::size_t size() const;

  /// Canonical snapshot: one PUT line per record with its current receipt.
  void export_to(const std::filesystem::path& out) const;

  const std::filesystem::path& path() const { return path_; }

  /// Test hook invoked after the first half of a log line has been written
  /// and synced, before the rest. Used to simulate a crash mid-write.
  void set_mid_write_hook(std::function<void()> hook) { mid_write_hook_ = std::move(hook); }

 private:
  void append_locked(const std::string& line);

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<std::string, FileRecord, std::less<>> index_;
  std::vector<std::string> order_;
  std::function<void()> mid_write_hook_;
};

}  // namespace sealstamp
