#include "sealstamp/config.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kRemotePrefix = "remote:";

constexpr std::string_view kKeys[] = {
    "repository",       "record_log_path",  "ledger_path",    "pending_queue_path",
    "anchor_mode",      "anchor_provider",  "batch_interval_seconds",
    "chunk_size_bytes", "kdf_iterations",   "upload_concurrency",
    "api_token",        "service_token",
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(ErrorCode::validation, std::string(key) + ": not a number: " + std::string(value));
  return out;
}

bool is_http_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

void ensure_writable_parent(const fs::path& path, std::string_view key) {
  if (path.empty()) fail(ErrorCode::validation, std::string(key) + " must not be empty");
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (::access(parent.c_str(), W_OK) != 0)
    fail(ErrorCode::validation, std::string(key) + ": directory not writable: " + parent.string());
}

}  // namespace

bool CliConfig::remote_repository() const { return is_http_url(repository); }

bool CliConfig::remote_anchor() const { return anchor_provider.starts_with(kRemotePrefix); }

std::string CliConfig::remote_anchor_url() const {
  return remote_anchor() ? anchor_provider.substr(kRemotePrefix.size()) : std::string();
}

void CliConfig::validate() const {
  if (repository.empty()) fail(ErrorCode::validation, "repository must not be empty");
  if (anchor_provider != "local") {
    if (!remote_anchor()) fail(ErrorCode::validation, "anchor_provider must be local or remote:<url>");
    if (!is_http_url(remote_anchor_url()))
      fail(ErrorCode::validation, "anchor_provider remote url must start with http:// or https://");
  }
  if (batch_interval_seconds < 0) fail(ErrorCode::validation, "batch_interval_seconds must be >= 0");
  if (chunk_size_bytes < 1) fail(ErrorCode::validation, "chunk_size_bytes must be >= 1");
  if (kdf_iterations < 1) fail(ErrorCode::validation, "kdf_iterations must be >= 1");
  if (upload_concurrency < 1) fail(ErrorCode::validation, "upload_concurrency must be >= 1");
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

void set_config_value(CliConfig& c, std::string_view key, std::string_view value) {
  if (key == "repository") c.repository = value;
  else if (key == "record_log_path") c.record_log_path = std::string(value);
  else if (key == "ledger_path") c.ledger_path = std::string(value);
  else if (key == "pending_queue_path") c.pending_queue_path = std::string(value);
  else if (key == "anchor_mode") c.anchor_mode = parse_anchor_mode(value);
  else if (key == "anchor_provider") c.anchor_provider = value;
  else if (key == "batch_interval_seconds") c.batch_interval_seconds = parse_number<int>(key, value);
  else if (key == "chunk_size_bytes") c.chunk_size_bytes = parse_number<std::size_t>(key, value);
  else if (key == "kdf_iterations") c.kdf_iterations = parse_number<std::uint32_t>(key, value);
  else if (key == "upload_concurrency") c.upload_concurrency = parse_number<std::size_t>(key, value);
  else if (key == "api_token") c.api_token = value.empty() ? std::nullopt : std::optional<std::string>(value);
  else if (key == "service_token") c.service_token = value.empty() ? std::nullopt : std::optional<std::string>(value);
  else fail(ErrorCode::validation, "unknown config key: " + std::string(key));
}

CliConfig parse_config(std::string_view text, CliConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::validation, "config line " + std::to_string(line_no) + ": expected key = value");
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorCode::validation, "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

void apply_env_overrides(CliConfig& config, const EnvLookup& env) {
  for (const std::string_view key : kKeys) {
    std::string name = "SEALSTAMP_";
    for (const char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const auto value = env(name)) {
      try {
        set_config_value(config, key, *value);
      } catch (const Error& e) {
        fail(ErrorCode::validation, name + ": " + e.what());
      }
    }
  }
}

CliConfig load_config(const std::optional<fs::path>& file, const EnvLookup& env) {
  CliConfig config;
  if (file) {
    if (!fs::exists(*file)) fail(ErrorCode::io, "config file not found: " + file->string());
    config = parse_config(read_file(*file), config);
  }
  apply_env_overrides(config, env);
  config.validate();
  return config;
}

std::string render_config(const CliConfig& c) {
  std::ostringstream out;
  out << "repository = " << c.repository << '\n'
      << "record_log_path = " << c.record_log_path.string() << '\n'
      << "ledger_path = " << c.ledger_path.string() << '\n'
      << "pending_queue_path = " << c.pending_queue_path.string() << '\n'
      << "anchor_mode = " << to_string(c.anchor_mode) << '\n'
      << "anchor_provider = " << c.anchor_provider << '\n'
      << "batch_interval_seconds = " << c.batch_interval_seconds << '\n'
      << "chunk_size_bytes = " << c.chunk_size_bytes << '\n'
      << "kdf_iterations = " << c.kdf_iterations << '\n'
      << "upload_concurrency = " << c.upload_concurrency << '\n'
      << "api_token = " << (c.api_token ? "<set>" : "") << '\n'
      << "service_token = " << (c.service_token ? "<set>" : "") << '\n';
  return out.str();
}

Runtime::Runtime(CliConfig config, EngineOptions engine_options) : config_(std::move(config)) {
  config_.validate();
  ensure_writable_parent(config_.record_log_path, "record_log_path");
  ensure_writable_parent(config_.pending_queue_path, "pending_queue_path");

  if (config_.remote_repository()) {
    repository_ = std::make_unique<HttpRepository>(config_.repository, config_.api_token,
                                                   config_.chunk_size_bytes);
  } else {
    fs::create_directories(config_.repository);
    repository_ = std::make_unique<LocalRepository>(config_.repository, config_.chunk_size_bytes);
  }
  records_ = std::make_unique<RecordStore>(config_.record_log_path);
  if (config_.remote_anchor()) {
    provider_ = std::make_unique<RemoteAnchorClient>(config_.remote_anchor_url());
  } else {
    ensure_writable_parent(config_.ledger_path, "ledger_path");
    auto ledger = std::make_unique<LocalLedger>(config_.ledger_path);
    ledger_ = ledger.get();
    provider_ = std::move(ledger);
  }
  anchorer_ = std::make_unique<Anchorer>(*provider_, config_.anchor_mode, config_.pending_queue_path);
  engine_options.chunk_size = config_.chunk_size_bytes;
  engine_options.kdf_iterations = config_.kdf_iterations;
  engine_options.upload_concurrency = config_.upload_concurrency;
  engine_ = std::make_unique<Engine>(*repository_, *records_, *anchorer_, std::move(engine_options));
}

Runtime::~Runtime() = default;

}  // namespace sealstamp
