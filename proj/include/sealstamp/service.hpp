#pragma once

// JSON-over-HTTP front end for one engine.
//
//   POST /datasets/{id}/files     multipart "file" parts (+ "title", "escrow"),
//                                 password in X-Password; loopback callers only
//   GET  /files/{id}?mode=password|shares
//                                 X-Password, or X-Share-Q / X-Share-R (hex)
//   GET  /files/{id}/verify
//   GET  /records                 all records
//   GET  /records/{id}            one record, same field names as the log
//   POST /anchors/flush
//
// Reads are open. Writes (upload, flush) need "Authorization: Bearer <token>"
// when a service token is configured.

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"
#include "sealstamp/engine.hpp"
#include "sealstamp/mock_servers.hpp"

namespace sealstamp {

nlohmann::json receipt_to_json(const AnchorReceipt& receipt);
nlohmann::json record_to_json(const FileRecord& record);
nlohmann::json report_to_json(const VerifyReport& report);
nlohmann::json flush_to_json(const FlushOutcome& outcome);

/// HTTP status used for an engine error code.
int http_status_for(ErrorCode code);

struct ServiceOptions {
  std::optional<std::string> write_token;
  /// Batch-mode flush period; zero disables the background flusher.
  std::chrono::seconds batch_interval{60};
};

class Service final : public BackgroundServer {
 public:
  Service(Engine& engine, ServiceOptions options = {});
  ~Service() override;

  std::size_t background_flushes() const;

 private:
  void flush_loop();

  Engine& engine_;
  ServiceOptions options_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::size_t background_flushes_ = 0;
  std::thread flusher_;
};

}  // namespace sealstamp
