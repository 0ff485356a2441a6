#pragma once

// CLI/service configuration and the object graph it describes.
//
// File format, one setting per line:
//   # comment
//   key = value
// Every key can be overridden by the environment variable SEALSTAMP_<KEY>
// (upper case), e.g. SEALSTAMP_ANCHOR_MODE=merkle_batch.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "sealstamp/anchors.hpp"
#include "sealstamp/engine.hpp"
#include "sealstamp/record_store.hpp"
#include "sealstamp/repository.hpp"

namespace sealstamp {

struct CliConfig {
  /// Local directory, or an http(s):// base URL for the HTTP repository.
  std::string repository = "sealstamp-data/repository";
  std::filesystem::path record_log_path = "sealstamp-data/records.log";
  std::filesystem::path ledger_path = "sealstamp-data/ledger.tsv";
  std::filesystem::path pending_queue_path = "sealstamp-data/pending.tsv";
  AnchorMode anchor_mode = AnchorMode::immediate;
  /// "local" or "remote:<base url>".
  std::string anchor_provider = "local";
  int batch_interval_seconds = 60;
  std::size_t chunk_size_bytes = kDefaultChunkSize;
  std::uint32_t kdf_iterations = kDefaultKdfIterations;
  std::size_t upload_concurrency = 1;
  /// Opaque bearer token sent to the HTTP repository.
  std::optional<std::string> api_token;
  /// Bearer token required by the service's write endpoints.
  std::optional<std::string> service_token;

  bool remote_repository() const;
  bool remote_anchor() const;
  std::string remote_anchor_url() const;

  /// Error{validation} on an invalid value or mode/provider combination.
  void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

/// Reads the process environment.
EnvLookup process_env();

/// Applies `key = value` lines on top of `base`. Unknown keys are an error.
CliConfig parse_config(std::string_view text, CliConfig base = {});
void set_config_value(CliConfig& config, std::string_view key, std::string_view value);
void apply_env_overrides(CliConfig& config, const EnvLookup& env);

/// Defaults, then the file (when given), then the environment; validated.
CliConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env);

std::string render_config(const CliConfig& config);

/// Owns repository, record store, anchor provider, anchorer and engine.
class Runtime {
 public:
  explicit Runtime(CliConfig config, EngineOptions engine_options = {});
  ~Runtime();

  const CliConfig& config() const { return config_; }
  Repository& repository() { return *repository_; }
  RecordStore& records() { return *records_; }
  AnchorProvider& provider() { return *provider_; }
  Anchorer& anchorer() { return *anchorer_; }
  Engine& engine() { return *engine_; }
  /// Null when anchoring goes to a remote provider.
  LocalLedger* local_ledger() { return ledger_; }

 private:
  CliConfig config_;
  std::unique_ptr<Repository> repository_;
  std::unique_ptr<RecordStore> records_;
  std::unique_ptr<AnchorProvider> provider_;
  LocalLedger* ledger_ = nullptr;
  std::unique_ptr<Anchorer> anchorer_;
  std::unique_ptr<Engine> engine_;
};

}  // namespace sealstamp
