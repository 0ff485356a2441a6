#pragma once

// Opaque file storage grouped by dataset. Only envelope bytes and labels
// ever cross this interface.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sealstamp/anchors.hpp"
#include "sealstamp/bytes.hpp"

namespace sealstamp {

struct DatasetRef {
  std::string dataset_id;
  std::string title;

  friend bool operator==(const DatasetRef&, const DatasetRef&) = default;
};

struct StoredFileRef {
  std::string file_id;
  DatasetRef dataset;
  std::uint64_t byte_length = 0;
  std::string label;

  friend bool operator==(const StoredFileRef&, const StoredFileRef&) = default;
};

using ChunkSink = std::function<void(ByteView)>;

/// Dataset ids are used as directory names: [A-Za-z0-9._-]+, not "." or "..".
void validate_dataset_id(std::string_view id);

class Repository {
 public:
  virtual ~Repository() = default;

  /// Streams `content` into a new file. Nothing is visible if this throws.
  virtual StoredFileRef store(const DatasetRef& dataset, std::string_view label,
                              ByteSource& content) = 0;

  /// Streams the stored bytes to `sink`. Error{not_found} for unknown ids.
  virtual void fetch(std::string_view file_id, const ChunkSink& sink) const = 0;

  /// Error{not_found} for unknown datasets.
  virtual std::vector<StoredFileRef> list_dataset(std::string_view dataset_id) const = 0;

  /// Rollback hook for failed uploads.
  virtual void remove(std::string_view file_id) = 0;

  Bytes fetch_all(std::string_view file_id) const;
};

/// Layout: <root>/<dataset_id>/<file_id>.bin, <root>/<dataset_id>/index.tsv
/// (file_id, label, byte_length per line), <root>/<dataset_id>/title.txt.
class LocalRepository final : public Repository {
 public:
  explicit LocalRepository(std::filesystem::path root, std::size_t chunk_size = 1 << 20);

  StoredFileRef store(const DatasetRef& dataset, std::string_view label,
                      ByteSource& content) override;
  void fetch(std::string_view file_id, const ChunkSink& sink) const override;
  std::vector<StoredFileRef> list_dataset(std::string_view dataset_id) const override;
  void remove(std::string_view file_id) override;

  /// Location of the stored envelope (for tamper tests and audits).
  std::filesystem::path path_of(std::string_view file_id) const;
  std::size_t chunk_size() const { return chunk_size_; }
  /// Largest transfer buffer held by any store/fetch so far.
  std::size_t peak_buffer_bytes() const { return peak_buffer_.load(); }

 private:
  void load();
  void ensure_dataset_locked(const DatasetRef& dataset);
  void note_buffer(std::size_t bytes) const;

  std::filesystem::path root_;
  std::size_t chunk_size_;
  mutable std::shared_mutex mu_;
  std::map<std::string, DatasetRef, std::less<>> datasets_;
  std::map<std::string, std::vector<StoredFileRef>, std::less<>> files_by_dataset_;
  std::map<std::string, StoredFileRef, std::less<>> files_;
  mutable std::atomic<std::size_t> peak_buffer_{0};
};

/// Client for a minimal Dataverse-like HTTP contract:
///   POST   /api/datasets/{id}/add        multipart "file" (+ optional "title")
///                                        -> {"file_id": "..."}; 503 while ingesting
///   GET    /api/access/datafile/{file_id} -> raw bytes
///   GET    /api/datasets/{id}/files       -> [{"file_id","label","byte_length"}]
///   DELETE /api/files/{file_id}
/// The api token, when set, is sent verbatim as "Authorization: Bearer <token>".
class HttpRepository final : public Repository {
 public:
  HttpRepository(std::string base_url, std::optional<std::string> api_token = std::nullopt,
                 std::size_t chunk_size = 1 << 20, RetryPolicy retry = {5, std::chrono::milliseconds(50), std::chrono::milliseconds(30000)});

  StoredFileRef store(const DatasetRef& dataset, std::string_view label,
                      ByteSource& content) override;
  void fetch(std::string_view file_id, const ChunkSink& sink) const override;
  std::vector<StoredFileRef> list_dataset(std::string_view dataset_id) const override;
  void remove(std::string_view file_id) override;

 private:
  std::string base_url_;
  std::optional<std::string> token_;
  std::size_t chunk_size_;
  RetryPolicy retry_;
};

}  // namespace sealstamp
