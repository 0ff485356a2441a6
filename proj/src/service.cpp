#include "sealstamp/service.hpp"

#include <sstream>

#include "httplib.h"
#include "sealstamp/error.hpp"
#include "sealstamp/provenance.hpp"

namespace sealstamp {

using json = nlohmann::json;

json receipt_to_json(const AnchorReceipt& r) {
  json out = {{"mode", to_string(r.mode)},
              {"provider_id", r.provider_id},
              {"verification_link", r.verification_link},
              {"anchored_digest", r.anchored_digest.hex()},
              {"timestamp_utc", r.timestamp_utc}};
  if (r.merkle) {
    out["batch_context"] = {{"kind", "merkle"},
                            {"root", r.merkle->root.hex()},
                            {"proof", r.merkle->proof.to_text()}};
  } else if (r.concat) {
    json members = json::array();
    for (const auto& m : r.concat->members)
      members.push_back({{"plaintext", m.plaintext.hex()}, {"ciphertext", m.ciphertext.hex()}});
    out["batch_context"] = {{"kind", "concat"}, {"member_index", r.concat->member_index}, {"members", members}};
  } else {
    out["batch_context"] = nullptr;
  }
  return out;
}

json record_to_json(const FileRecord& r) {
  return {{"file_id", r.file_id},
          {"created_utc", r.created_utc},
          {"label", r.label},
          {"salt", r.kdf.salt.hex()},
          {"iterations", r.kdf.iterations},
          {"plaintext_digest", r.plaintext_digest.hex()},
          {"ciphertext_digest", r.ciphertext_digest.hex()},
          {"receipt", r.receipt ? receipt_to_json(*r.receipt) : json("PENDING")}};
}

json report_to_json(const VerifyReport& r) {
  json out = {{"file_id", r.file_id},
              {"ciphertext_check", to_string(r.ciphertext_check)},
              {"combined_hash_check", to_string(r.combined_hash_check)},
              {"anchor_check", to_string(r.anchor_check)},
              {"plaintext_check", r.plaintext_check ? json(to_string(*r.plaintext_check)) : json(nullptr)},
              {"recomputed_ciphertext_digest", r.recomputed_ciphertext_digest.hex()},
              {"file_combined_hash", r.file_combined_hash.hex()},
              {"combined_hash_recipe", combined_hash_recipe()},
              {"anchor_diagnostic", r.anchor_diagnostic},
              {"receipt", r.receipt ? receipt_to_json(*r.receipt) : json("PENDING")}};
  return out;
}

json flush_to_json(const FlushOutcome& o) {
  return {{"flushed", o.flushed},
          {"files", o.files},
          {"still_pending", o.still_pending},
          {"diagnostic", o.diagnostic},
          {"batch_receipt", o.batch_receipt ? receipt_to_json(*o.batch_receipt) : json(nullptr)}};
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::format: return 400;
    case ErrorCode::authentication: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::integrity: return 409;
    case ErrorCode::unavailable: return 503;
    default: return 500;
  }
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  reply(res, http_status_for(e.code()), {{"error", to_string(e.code())}, {"message", e.what()}});
}

bool is_loopback(const std::string& addr) {
  return addr == "127.0.0.1" || addr == "::1" || addr.starts_with("::ffff:127.") || addr.starts_with("127.");
}

// Runs a handler, mapping exceptions to JSON errors.
template <typename F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

std::array<std::uint8_t, kKeySize> share_header(const httplib::Request& req, const char* name) {
  if (!req.has_header(name)) fail(ErrorCode::validation, std::string("missing header ") + name);
  const Bytes raw = from_hex(req.get_header_value(name));
  if (raw.size() != kKeySize) fail(ErrorCode::validation, std::string(name) + " must be 64 hex chars");
  std::array<std::uint8_t, kKeySize> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

}  // namespace

Service::Service(Engine& engine, ServiceOptions options) : engine_(engine), options_(std::move(options)) {
  auto& srv = server();

  auto authorized = [this](const httplib::Request& req, httplib::Response& res) {
    if (!options_.write_token) return true;
    if (req.get_header_value("Authorization") == "Bearer " + *options_.write_token) return true;
    reply(res, 401, {{"error", "unauthorized"}, {"message", "bearer token required"}});
    return false;
  };

  srv.Post(R"(/datasets/([^/]+)/files)", guarded([this, authorized](const httplib::Request& req,
                                                                     httplib::Response& res) {
    if (!authorized(req, res)) return;
    if (!is_loopback(req.remote_addr))
      return reply(res, 403, {{"error", "forbidden"}, {"message", "password uploads are accepted only over loopback"}});
    if (!req.has_header("X-Password")) fail(ErrorCode::validation, "missing header X-Password");
    const Password password(req.get_header_value("X-Password"));
    DatasetRef dataset{req.matches[1], req.has_file("title") ? req.get_file_value("title").content : ""};
    const bool escrow = req.has_file("escrow") && req.get_file_value("escrow").content == "true";
    std::vector<UploadInput> inputs;
    for (const auto& part : req.get_file_values("file")) {
      const std::string label = part.filename.empty() ? "upload" : part.filename;
      inputs.push_back(UploadInput::from_bytes(label, Bytes(part.content.begin(), part.content.end())));
    }
    if (inputs.empty()) fail(ErrorCode::validation, "no \"file\" parts in the request");

    const UploadResult result = engine_.upload(dataset, inputs, password, escrow);
    json files = json::array();
    for (const auto& f : result.files) {
      json entry = record_to_json(f.record);
      if (f.shares) entry["shares"] = {{"q", to_hex(f.shares->q)}, {"r", to_hex(f.shares->r)}};
      files.push_back(std::move(entry));
    }
    json failures = json::array();
    for (const auto& f : result.failures)
      failures.push_back({{"label", f.label}, {"error", to_string(f.code)}, {"message", f.message}});
    reply(res, result.ok() ? 201 : (result.files.empty() ? 400 : 207),
          {{"files", files}, {"failures", failures}});
  }));

  srv.Get(R"(/files/([^/]+)/verify)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, report_to_json(engine_.verify(req.matches[1].str())));
  }));

  srv.Get(R"(/files/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string file_id = req.matches[1];
    const std::string mode = req.has_param("mode") ? req.get_param_value("mode") : "password";
    Bytes plain;
    if (mode == "password") {
      if (!req.has_header("X-Password")) fail(ErrorCode::validation, "missing header X-Password");
      plain = engine_.download_with_password(file_id, Password(req.get_header_value("X-Password")));
    } else if (mode == "shares") {
      const auto q = share_header(req, "X-Share-Q");
      const auto r = share_header(req, "X-Share-R");
      plain = engine_.download_with_shares(file_id, q, r);
    } else {
      fail(ErrorCode::validation, "mode must be password or shares");
    }
    res.status = 200;
    res.set_content(std::string(plain.begin(), plain.end()), "application/octet-stream");
    secure_wipe(plain);
  }));

  srv.Get("/records", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : engine_.records().all()) out.push_back(record_to_json(r));
    reply(res, 200, out);
  }));

  srv.Get(R"(/records/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, record_to_json(engine_.records().get(req.matches[1].str())));
  }));

  srv.Post("/anchors/flush", guarded([this, authorized](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    const FlushOutcome outcome = engine_.flush_anchors();
    reply(res, outcome.still_pending > 0 ? 503 : 200, flush_to_json(outcome));
  }));

  if (engine_.anchorer().mode() != AnchorMode::immediate && options_.batch_interval.count() > 0)
    flusher_ = std::thread([this] { flush_loop(); });
}

Service::~Service() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (flusher_.joinable()) flusher_.join();
  stop();
}

std::size_t Service::background_flushes() const {
  std::lock_guard lock(mu_);
  return background_flushes_;
}

void Service::flush_loop() {
  std::unique_lock lock(mu_);
  while (!cv_.wait_for(lock, options_.batch_interval, [this] { return stopping_; })) {
    lock.unlock();
    try {
      engine_.flush_anchors();
    } catch (const std::exception&) {
      // Left queued; the next tick retries.
    }
    lock.lock();
    ++background_flushes_;
  }
}

}  // namespace sealstamp
