#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sealstamp/bytes.hpp"
#include "sealstamp/crypto_core.hpp"

namespace sealstamp::bench {

/// tabular: comma-separated rows with a fixed column count.
/// binary:  uniform pseudo-random bytes.
enum class ContentKind { tabular, binary };

std::string_view to_string(ContentKind kind);
ContentKind parse_content_kind(std::string_view text);

inline constexpr std::size_t kTabularColumns = 6;

/// Deterministic in (size, kind, seed).
Bytes generate_file(std::uint64_t size, ContentKind kind, std::uint64_t seed);

inline constexpr std::array<std::string_view, 8> kOperations = {
    "key_gen", "encrypt", "plaintext_hash", "ciphertext_hash",
    "store",   "record_put", "other",       "total"};

struct BenchSample {
  std::string operation;
  std::uint64_t size_bytes = 0;
  ContentKind kind = ContentKind::binary;
  int repeat = 0;
  double elapsed_ms = 0;
};

struct BenchOptions {
  std::uint32_t kdf_iterations = kDefaultKdfIterations;
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t upload_concurrency = 1;
  /// Scratch space for the repository, record log and ledger. Empty: a
  /// fresh directory under the system temp dir, removed afterwards.
  std::filesystem::path work_dir;
  std::uint64_t seed = 7;
};

/// Uploads one generated file per (size, kind, repeat) through a local
/// engine and records the per-operation breakdown.
std::vector<BenchSample> run_benchmark(const std::vector<std::uint64_t>& sizes,
                                       const std::vector<ContentKind>& kinds, int repeats,
                                       const BenchOptions& options = {});

double mean_ms(const std::vector<BenchSample>& samples, std::string_view operation,
               std::uint64_t size, ContentKind kind);

/// operation,size_bytes,kind,repeat,elapsed_ms
std::string samples_csv(const std::vector<BenchSample>& samples);

/// One row per operation, one column per (size, kind), means over repeats.
std::string summary_csv(const std::vector<BenchSample>& samples,
                        const std::vector<std::uint64_t>& sizes,
                        const std::vector<ContentKind>& kinds);

/// "1MB", "10MB", "512KB", "1GB", "4096" -> bytes (binary multiples).
std::uint64_t parse_size(std::string_view text);
std::string format_size(std::uint64_t bytes);

}  // namespace sealstamp::bench
