#pragma once

// In-process HTTP servers implementing the remote anchor and repository wire
// contracts. Used by hermetic tests and by the CLI's mock-* subcommands.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "sealstamp/repository.hpp"

namespace httplib {
class Server;
}

namespace sealstamp {

/// Owns an httplib::Server running on a background thread.
class BackgroundServer {
 public:
  BackgroundServer();
  virtual ~BackgroundServer();
  BackgroundServer(const BackgroundServer&) = delete;
  BackgroundServer& operator=(const BackgroundServer&) = delete;

  /// Binds (port 0 picks a free port) and starts serving. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  /// Blocks the caller while serving in the foreground (CLI use).
  void run(const std::string& host, int port);
  int port() const { return port_; }
  std::string base_url() const;

 protected:
  httplib::Server& server() { return *server_; }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

/// POST /hashes {"hash": hex} -> {"link": "<prefix><n>"}; honours an
/// Idempotency-Key header. GET /proofs/{n} -> {"digest", "timestamp"}.
class MockAnchorServer final : public BackgroundServer {
 public:
  explicit MockAnchorServer(std::string link_prefix = "mock://proof/");
  ~MockAnchorServer() override { stop(); }

  /// The next `count` requests answer 503.
  void fail_next(int count);
  void set_offline(bool offline);
  std::size_t submissions() const;
  /// Test hook: overwrite the digest stored under an id.
  void tamper(std::uint64_t id, const Digest& digest);

 private:
  struct Entry {
    Digest digest;
    std::string timestamp;
  };
  bool should_fail();

  std::string link_prefix_;
  mutable std::mutex mu_;
  std::map<std::uint64_t, Entry> entries_;
  std::map<std::string, std::uint64_t> idempotency_;
  int fail_next_ = 0;
  bool offline_ = false;
};

struct MockRepositoryOptions {
  /// After each upload the server reports "ingest in progress" (503) for
  /// this long, like a repository ingesting tabular data.
  std::chrono::milliseconds ingest_delay{0};
  std::optional<std::string> required_token;
};

class MockRepositoryServer final : public BackgroundServer {
 public:
  MockRepositoryServer(std::filesystem::path root, MockRepositoryOptions options = {});
  ~MockRepositoryServer() override { stop(); }

  std::size_t rejected_busy() const;
  LocalRepository& backing() { return repo_; }

 private:
  LocalRepository repo_;
  MockRepositoryOptions options_;
  mutable std::mutex mu_;
  std::chrono::steady_clock::time_point busy_until_{};
  std::size_t rejected_busy_ = 0;
};

}  // namespace sealstamp
