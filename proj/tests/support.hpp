#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "sealstamp/anchors.hpp"
#include "sealstamp/engine.hpp"
#include "sealstamp/mock_servers.hpp"
#include "sealstamp/record_store.hpp"
#include "sealstamp/repository.hpp"

namespace testing {

namespace fs = std::filesystem;
using namespace sealstamp;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

Bytes random_bytes(std::size_t n, std::mt19937_64& rng);
Digest random_digest(std::mt19937_64& rng);
void flip_bit(Bytes& data, std::size_t bit);
void flip_file_bit(const fs::path& path, std::size_t bit);

/// Pass-through provider that can simulate an outage.
class FlakyProvider final : public AnchorProvider {
 public:
  explicit FlakyProvider(AnchorProvider& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }
  AnchorReceipt submit(const Digest& digest) override;
  std::optional<AnchoredEntry> resolve(std::string_view link, std::string* diagnostic) const override {
    return inner_.resolve(link, diagnostic);
  }
  void set_offline(bool offline) { offline_ = offline; }
  std::size_t submissions() const { return submissions_; }

 private:
  AnchorProvider& inner_;
  std::atomic<bool> offline_{false};
  std::atomic<std::size_t> submissions_{0};
};

enum class ProviderKind { local_ledger, mock_remote };
const char* to_string(ProviderKind kind);

/// Small KDF cost and chunk size so tests stay fast.
EngineOptions fast_options();

/// A complete engine over files in `dir`. reopen() rebuilds every component
/// from disk, as a process restart would.
struct Stack {
  Stack(fs::path dir, ProviderKind kind, AnchorMode mode, EngineOptions options = fast_options());
  ~Stack();

  void reopen();

  fs::path dir;
  ProviderKind kind;
  AnchorMode mode;
  EngineOptions options;
  std::unique_ptr<MockAnchorServer> mock;  // mock_remote only
  std::unique_ptr<AnchorProvider> inner;
  std::unique_ptr<FlakyProvider> provider;
  LocalLedger* ledger = nullptr;  // local_ledger only
  std::unique_ptr<LocalRepository> repo;
  std::unique_ptr<RecordStore> records;
  std::unique_ptr<Anchorer> anchorer;
  std::unique_ptr<Engine> engine;

  UploadedFile upload(const std::string& label, const Bytes& content, const std::string& password = "pw",
                      bool escrow = false);
};

}  // namespace testing
