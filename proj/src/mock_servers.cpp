#include "sealstamp/mock_servers.hpp"

#include "httplib.h"
#include "json.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

using json = nlohmann::json;

BackgroundServer::BackgroundServer() : server_(std::make_unique<httplib::Server>()) {}

BackgroundServer::~BackgroundServer() { stop(); }

int BackgroundServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) fail(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void BackgroundServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) fail(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void BackgroundServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string BackgroundServer::base_url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

// ---- anchor mock ---------------------------------------------------------------

MockAnchorServer::MockAnchorServer(std::string link_prefix) : link_prefix_(std::move(link_prefix)) {
  server().Post("/hashes", [this](const httplib::Request& req, httplib::Response& res) {
    if (should_fail()) return reply_json(res, 503, {{"error", "unavailable"}});
    Digest digest;
    try {
      digest = Digest::from_hex(json::parse(req.body).at("hash").get<std::string>());
    } catch (const std::exception&) {
      return reply_json(res, 400, {{"error", "expected {\"hash\": <128 hex chars>}"}});
    }
    std::lock_guard lock(mu_);
    const std::string key = req.get_header_value("Idempotency-Key");
    std::uint64_t id = 0;
    if (!key.empty() && idempotency_.contains(key)) {
      id = idempotency_[key];
    } else {
      id = entries_.size() + 1;
      entries_[id] = {digest, utc_now()};
      if (!key.empty()) idempotency_[key] = id;
    }
    reply_json(res, 200, {{"link", link_prefix_ + std::to_string(id)}});
  });

  server().Get(R"(/proofs/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (should_fail()) return reply_json(res, 503, {{"error", "unavailable"}});
    std::lock_guard lock(mu_);
    const auto it = entries_.find(std::stoull(req.matches[1].str()));
    if (it == entries_.end()) return reply_json(res, 404, {{"error", "unknown proof"}});
    reply_json(res, 200, {{"digest", it->second.digest.hex()}, {"timestamp", it->second.timestamp}});
  });
}

bool MockAnchorServer::should_fail() {
  std::lock_guard lock(mu_);
  if (offline_) return true;
  if (fail_next_ > 0) {
    --fail_next_;
    return true;
  }
  return false;
}

void MockAnchorServer::fail_next(int count) {
  std::lock_guard lock(mu_);
  fail_next_ = count;
}

void MockAnchorServer::set_offline(bool offline) {
  std::lock_guard lock(mu_);
  offline_ = offline;
}

std::size_t MockAnchorServer::submissions() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void MockAnchorServer::tamper(std::uint64_t id, const Digest& digest) {
  std::lock_guard lock(mu_);
  entries_.at(id).digest = digest;
}

// ---- repository mock -------------------------------------------------------------

MockRepositoryServer::MockRepositoryServer(std::filesystem::path root, MockRepositoryOptions options)
    : repo_(std::move(root)), options_(std::move(options)) {
  auto authorized = [this](const httplib::Request& req) {
    if (!options_.required_token) return true;
    return req.get_header_value("Authorization") == "Bearer " + *options_.required_token;
  };

  server().Post(R"(/api/datasets/([A-Za-z0-9._-]+)/add)",
                [this, authorized](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return reply_json(res, 401, {{"error", "unauthorized"}});
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      if (now < busy_until_) {
        ++rejected_busy_;
        return reply_json(res, 503, {{"status", "ERROR"}, {"message", "ingest in progress"}});
      }
      busy_until_ = now + options_.ingest_delay;
    }
    if (!req.has_file("file")) return reply_json(res, 400, {{"error", "missing file part"}});
    const auto file = req.get_file_value("file");
    const std::string title = req.has_file("title") ? req.get_file_value("title").content : "";
    SpanSource src(as_bytes(file.content));
    try {
      const auto ref = repo_.store({req.matches[1].str(), title}, file.filename, src);
      reply_json(res, 200, {{"file_id", ref.file_id}, {"byte_length", ref.byte_length}});
    } catch (const Error& e) {
      reply_json(res, 500, {{"error", e.what()}});
    }
  });

  server().Get(R"(/api/access/datafile/([0-9a-f]+))",
               [this, authorized](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return reply_json(res, 401, {{"error", "unauthorized"}});
    try {
      const Bytes content = repo_.fetch_all(req.matches[1].str());
      res.set_content(std::string(content.begin(), content.end()), "application/octet-stream");
    } catch (const Error& e) {
      reply_json(res, e.code() == ErrorCode::not_found ? 404 : 500, {{"error", e.what()}});
    }
  });

  server().Get(R"(/api/datasets/([A-Za-z0-9._-]+)/files)",
               [this, authorized](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return reply_json(res, 401, {{"error", "unauthorized"}});
    try {
      json files = json::array();
      std::string title;
      for (const auto& ref : repo_.list_dataset(req.matches[1].str())) {
        files.push_back({{"file_id", ref.file_id}, {"label", ref.label}, {"byte_length", ref.byte_length}});
        title = ref.dataset.title;
      }
      reply_json(res, 200, {{"title", title}, {"files", files}});
    } catch (const Error& e) {
      reply_json(res, e.code() == ErrorCode::not_found ? 404 : 500, {{"error", e.what()}});
    }
  });

  server().Delete(R"(/api/files/([0-9a-f]+))",
                  [this, authorized](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return reply_json(res, 401, {{"error", "unauthorized"}});
    try {
      repo_.remove(req.matches[1].str());
      reply_json(res, 200, {{"status", "OK"}});
    } catch (const Error& e) {
      reply_json(res, e.code() == ErrorCode::not_found ? 404 : 500, {{"error", e.what()}});
    }
  });
}

std::size_t MockRepositoryServer::rejected_busy() const {
  std::lock_guard lock(mu_);
  return rejected_busy_;
}

}  // namespace sealstamp
