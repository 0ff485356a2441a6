#pragma once

// Timestamp providers. A provider takes a digest and returns a receipt whose
// verification link it can later resolve back to (digest, timestamp).
//
//   LocalLedger         append-only hash-chained file, links "local://ledger/{seq}"
//   RemoteAnchorClient  HTTP client: POST /hashes {"hash"} -> {"link"},
//                       GET /proofs/{id} -> {"digest","timestamp"}
//
// Anchorer sits in front of a provider and applies the anchor mode:
// immediate submission, or queueing for a concatenated / Merkle batch.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sealstamp/crypto_core.hpp"
#include "sealstamp/provenance.hpp"

namespace sealstamp {

enum class AnchorMode { immediate, concat_batch, merkle_batch };

std::string_view to_string(AnchorMode mode);
AnchorMode parse_anchor_mode(std::string_view text);

struct MerkleContext {
  Digest root;
  MerkleProof proof;

  friend bool operator==(const MerkleContext&, const MerkleContext&) = default;
};

/// In concat mode a file's pair is one member of the hashed sequence.
struct ConcatContext {
  std::size_t member_index = 0;
  std::vector<DigestPair> members;

  friend bool operator==(const ConcatContext&, const ConcatContext&) = default;
};

struct AnchorReceipt {
  std::string verification_link;
  Digest anchored_digest;
  std::string timestamp_utc;
  std::string provider_id;
  AnchorMode mode = AnchorMode::immediate;
  std::optional<MerkleContext> merkle;
  std::optional<ConcatContext> concat;

  bool has_batch_context() const { return merkle.has_value() || concat.has_value(); }

  friend bool operator==(const AnchorReceipt&, const AnchorReceipt&) = default;
};

inline constexpr std::size_t kReceiptFieldCount = 6;

/// mode, provider_id, link, anchored digest hex, timestamp, batch context.
std::vector<std::string> receipt_to_fields(const AnchorReceipt& receipt);
AnchorReceipt receipt_from_fields(std::span<const std::string> fields);

struct AnchoredEntry {
  Digest digest;
  std::string timestamp_utc;
};

class AnchorProvider {
 public:
  virtual ~AnchorProvider() = default;

  virtual std::string id() const = 0;

  /// Throws Error{unavailable} when the provider cannot be reached,
  /// Error{corruption} when local state fails its integrity check.
  virtual AnchorReceipt submit(const Digest& digest) = 0;

  /// nullopt (with a reason in *diagnostic) when the link does not resolve.
  virtual std::optional<AnchoredEntry> resolve(std::string_view link,
                                               std::string* diagnostic) const = 0;
};

struct LedgerEntry {
  std::uint64_t seq = 0;
  std::string timestamp_utc;
  Digest digest;
  Digest chain;
};

struct AuditResult {
  bool ok = true;
  std::size_t entries = 0;
  std::optional<std::uint64_t> first_bad_seq;
  std::string diagnostic;

  explicit operator bool() const { return ok; }
};

/// chain_n = H(chain_{n-1} || digest_n || timestamp_n), chain_{-1} = 64 zero bytes.
Digest ledger_chain(const Digest& previous, const Digest& digest, std::string_view timestamp_utc);

/// Replays a ledger file from genesis.
AuditResult audit_ledger_file(const std::filesystem::path& path);

class LocalLedger final : public AnchorProvider {
 public:
  using Clock = std::function<std::string()>;

  explicit LocalLedger(std::filesystem::path path, Clock clock = {});

  std::string id() const override { return "local-ledger"; }
  AnchorReceipt submit(const Digest& digest) override;
  std::optional<AnchoredEntry> resolve(std::string_view link,
                                       std::string* diagnostic) const override;

  AuditResult audit() const { return audit_ledger_file(path_); }
  std::vector<LedgerEntry> entries() const;
  const std::filesystem::path& path() const { return path_; }

  static std::string link_for(std::uint64_t seq);

 private:
  void reload_locked() const;

  std::filesystem::path path_;
  Clock clock_;
  mutable std::mutex mu_;
  mutable std::vector<LedgerEntry> cache_;
  mutable bool corrupted_ = false;
  mutable std::string corruption_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};
  std::chrono::milliseconds timeout{5000};
};

class RemoteAnchorClient final : public AnchorProvider {
 public:
  explicit RemoteAnchorClient(std::string base_url, RetryPolicy retry = {},
                              std::string provider_id = "remote");
  ~RemoteAnchorClient() override;

  std::string id() const override { return provider_id_; }
  AnchorReceipt submit(const Digest& digest) override;
  std::optional<AnchoredEntry> resolve(std::string_view link,
                                       std::string* diagnostic) const override;

 private:
  std::string base_url_;
  RetryPolicy retry_;
  std::string provider_id_;
};

/// True iff the provider's entry behind receipt.verification_link holds the
/// anchored digest and `leaf` (a per-file combined hash) folds to that digest
/// through the receipt's batch context, if any.
bool verify_receipt(const AnchorProvider& provider, const AnchorReceipt& receipt,
                    const Digest& leaf, std::string* diagnostic = nullptr);

struct PendingItem {
  std::string file_id;
  DigestPair pair;

  friend bool operator==(const PendingItem&, const PendingItem&) = default;
};

/// File-backed FIFO of digests awaiting anchoring. Survives restarts.
class PendingQueue {
 public:
  explicit PendingQueue(std::filesystem::path path);

  void push(const PendingItem& item);
  std::vector<PendingItem> items() const;
  void replace(std::vector<PendingItem> items);
  bool contains(std::string_view file_id) const;
  std::size_t size() const { return items_.size(); }

 private:
  void persist() const;

  std::filesystem::path path_;
  std::vector<PendingItem> items_;
};

struct FlushOutcome {
  bool flushed = false;
  std::size_t files = 0;
  std::optional<AnchorReceipt> batch_receipt;
  std::size_t still_pending = 0;
  std::string diagnostic;
};

class Anchorer {
 public:
  using Deliver = std::function<void(const std::string& file_id, const AnchorReceipt&)>;
  using Filter = std::function<bool(const std::string& file_id)>;

  Anchorer(AnchorProvider& provider, AnchorMode mode, std::filesystem::path queue_path);

  AnchorMode mode() const { return mode_; }
  AnchorProvider& provider() { return provider_; }
  const AnchorProvider& provider() const { return provider_; }

  /// Immediate mode: submits and returns the receipt, or nullopt when the
  /// provider is unavailable. Batch modes: always nullopt.
  /// Callers enqueue() whatever comes back pending.
  std::optional<AnchorReceipt> try_anchor(const DigestPair& pair);

  void enqueue(const PendingItem& item);
  std::vector<PendingItem> pending() const;
  bool is_queued(std::string_view file_id) const;

  /// Anchors everything queued. `keep` filters stale items (e.g. files whose
  /// record no longer exists); `deliver` receives every per-file receipt
  /// before the queue is trimmed. An empty queue returns flushed = false.
  FlushOutcome flush_batch(const Deliver& deliver, const Filter& keep = {});

 private:
  AnchorProvider& provider_;
  AnchorMode mode_;
  mutable std::mutex mu_;
  PendingQueue queue_;
};

}  // namespace sealstamp
