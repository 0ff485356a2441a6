#include "sealstamp/repository.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

namespace fs = std::filesystem;
using json = nlohmann::json;

void validate_dataset_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..")
    fail(ErrorCode::validation, "invalid dataset id");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
    if (!ok) fail(ErrorCode::validation, "invalid dataset id: " + std::string(id));
  }
}

Bytes Repository::fetch_all(std::string_view file_id) const {
  Bytes out;
  fetch(file_id, [&](ByteView chunk) { out.insert(out.end(), chunk.begin(), chunk.end()); });
  return out;
}

// ---- local filesystem ----------------------------------------------------------

LocalRepository::LocalRepository(fs::path root, std::size_t chunk_size)
    : root_(std::move(root)), chunk_size_(chunk_size) {
  if (chunk_size_ < 1) fail(ErrorCode::validation, "chunk size must be >= 1");
  fs::create_directories(root_);
  load();
}

void LocalRepository::load() {
  for (const auto& dir : fs::directory_iterator(root_)) {
    if (!dir.is_directory()) continue;
    const std::string id = dir.path().filename().string();
    DatasetRef ds{id, ""};
    if (fs::exists(dir.path() / "title.txt")) ds.title = read_file(dir.path() / "title.txt");
    datasets_[id] = ds;
    auto& list = files_by_dataset_[id];
    std::ifstream index(dir.path() / "index.tsv", std::ios::binary);
    std::string line;
    while (std::getline(index, line)) {
      const auto f = split_tabs(line);
      // A torn final line from a crash is ignored; its .bin is unreachable.
      if (f.size() != 3 || index.eof()) continue;
      StoredFileRef ref{f[0], ds, std::stoull(f[2]), unescape_field(f[1])};
      if (!fs::exists(dir.path() / (ref.file_id + ".bin"))) continue;
      files_[ref.file_id] = ref;
      list.push_back(std::move(ref));
    }
  }
}

void LocalRepository::ensure_dataset_locked(const DatasetRef& dataset) {
  validate_dataset_id(dataset.dataset_id);
  if (datasets_.contains(dataset.dataset_id)) return;
  const fs::path dir = root_ / dataset.dataset_id;
  fs::create_directories(dir);
  write_file_atomic(dir / "title.txt", dataset.title);
  datasets_[dataset.dataset_id] = dataset;
  files_by_dataset_[dataset.dataset_id];
}

void LocalRepository::note_buffer(std::size_t bytes) const {
  std::size_t seen = peak_buffer_.load();
  while (bytes > seen && !peak_buffer_.compare_exchange_weak(seen, bytes)) {
  }
}

StoredFileRef LocalRepository::store(const DatasetRef& dataset, std::string_view label,
                                     ByteSource& content) {
  DatasetRef ds;
  {
    std::unique_lock lock(mu_);
    ensure_dataset_locked(dataset);
    ds = datasets_[dataset.dataset_id];
  }
  const fs::path dir = root_ / ds.dataset_id;
  std::string file_id;
  {
    std::shared_lock lock(mu_);
    do {
      file_id = random_hex_id(8);
    } while (files_.contains(file_id));
  }
  const fs::path final_path = dir / (file_id + ".bin");
  const fs::path tmp_path = dir / (file_id + ".bin.tmp");

  const int fd = ::open(tmp_path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0600);
  if (fd < 0) fail(ErrorCode::io, "cannot create " + tmp_path.string() + ": " + std::strerror(errno));
  std::uint64_t total = 0;
  try {
    Bytes buf(chunk_size_);
    note_buffer(buf.size());
    while (const std::size_t n = content.read(buf)) {
      std::size_t off = 0;
      while (off < n) {
        const ssize_t w = ::write(fd, buf.data() + off, n - off);
        if (w < 0) {
          if (errno == EINTR) continue;
          fail(ErrorCode::io, "write failed: " + std::string(std::strerror(errno)));
        }
        off += static_cast<std::size_t>(w);
      }
      total += n;
    }
    if (::fsync(fd) != 0) fail(ErrorCode::io, "fsync failed");
    ::close(fd);
  } catch (...) {
    ::close(fd);
    std::error_code ec;
    fs::remove(tmp_path, ec);
    throw;
  }

  StoredFileRef ref{file_id, ds, total, std::string(label)};
  std::unique_lock lock(mu_);
  try {
    fs::rename(tmp_path, final_path);
    append_durable(dir / "index.tsv",
                   file_id + "\t" + escape_field(label) + "\t" + std::to_string(total) + "\n");
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp_path, ec);
    fs::remove(final_path, ec);
    throw;
  }
  files_[file_id] = ref;
  files_by_dataset_[ds.dataset_id].push_back(ref);
  return ref;
}

fs::path LocalRepository::path_of(std::string_view file_id) const {
  std::shared_lock lock(mu_);
  const auto it = files_.find(file_id);
  if (it == files_.end()) fail(ErrorCode::not_found, "unknown file id: " + std::string(file_id));
  return root_ / it->second.dataset.dataset_id / (it->second.file_id + ".bin");
}

void LocalRepository::fetch(std::string_view file_id, const ChunkSink& sink) const {
  const fs::path path = path_of(file_id);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  Bytes buf(chunk_size_);
  note_buffer(buf.size());
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    if (in.bad()) fail(ErrorCode::io, "read failed: " + path.string());
    if (n > 0) sink(ByteView(buf).first(n));
  }
}

std::vector<StoredFileRef> LocalRepository::list_dataset(std::string_view dataset_id) const {
  std::shared_lock lock(mu_);
  const auto it = files_by_dataset_.find(dataset_id);
  if (it == files_by_dataset_.end())
    fail(ErrorCode::not_found, "unknown dataset: " + std::string(dataset_id));
  return it->second;
}

void LocalRepository::remove(std::string_view file_id) {
  std::unique_lock lock(mu_);
  const auto it = files_.find(file_id);
  if (it == files_.end()) fail(ErrorCode::not_found, "unknown file id: " + std::string(file_id));
  const std::string ds = it->second.dataset.dataset_id;
  const fs::path dir = root_ / ds;
  auto& list = files_by_dataset_[ds];
  std::erase_if(list, [&](const StoredFileRef& r) { return r.file_id == file_id; });
  std::string index;
  for (const auto& r : list)
    index += r.file_id + "\t" + escape_field(r.label) + "\t" + std::to_string(r.byte_length) + "\n";
  write_file_atomic(dir / "index.tsv", index);
  std::error_code ec;
  fs::remove(dir / (std::string(file_id) + ".bin"), ec);
  files_.erase(it);
}

// ---- HTTP client ---------------------------------------------------------------

HttpRepository::HttpRepository(std::string base_url, std::optional<std::string> api_token,
                               std::size_t chunk_size, RetryPolicy retry)
    : base_url_(std::move(base_url)), token_(std::move(api_token)), chunk_size_(chunk_size),
      retry_(retry) {}

namespace {

httplib::Client make_client(const std::string& base, const RetryPolicy& retry,
                            const std::optional<std::string>& token) {
  httplib::Client cli(base);
  cli.set_connection_timeout(retry.timeout);
  cli.set_read_timeout(retry.timeout);
  cli.set_write_timeout(retry.timeout);
  if (token) cli.set_bearer_token_auth(*token);
  return cli;
}

[[noreturn]] void http_fail(const httplib::Result& res, const std::string& what) {
  if (!res) fail(ErrorCode::io, what + ": transport error " + httplib::to_string(res.error()));
  if (res->status == 404) fail(ErrorCode::not_found, what + ": not found");
  fail(ErrorCode::io, what + ": HTTP " + std::to_string(res->status));
}

// Temp spool so an upload can be replayed when the server is busy ingesting.
class Spool {
 public:
  Spool() {
    char name[] = "/tmp/sealstamp-spool-XXXXXX";
    fd_ = ::mkstemp(name);
    if (fd_ < 0) fail(ErrorCode::io, "cannot create spool file");
    ::unlink(name);
  }
  ~Spool() { ::close(fd_); }
  Spool(const Spool&) = delete;
  Spool& operator=(const Spool&) = delete;

  std::uint64_t fill(ByteSource& src, std::size_t chunk) {
    Bytes buf(chunk);
    std::uint64_t total = 0;
    while (const std::size_t n = src.read(buf)) {
      if (::pwrite(fd_, buf.data(), n, static_cast<off_t>(total)) != static_cast<ssize_t>(n))
        fail(ErrorCode::io, "spool write failed");
      total += n;
    }
    size_ = total;
    return total;
  }

  std::size_t read_at(std::uint64_t offset, std::span<std::uint8_t> out) const {
    const ssize_t n = ::pread(fd_, out.data(), out.size(), static_cast<off_t>(offset));
    if (n < 0) fail(ErrorCode::io, "spool read failed");
    return static_cast<std::size_t>(n);
  }

  std::uint64_t size() const { return size_; }

 private:
  int fd_ = -1;
  std::uint64_t size_ = 0;
};

}  // namespace

StoredFileRef HttpRepository::store(const DatasetRef& dataset, std::string_view label,
                                    ByteSource& content) {
  validate_dataset_id(dataset.dataset_id);
  Spool spool;
  const std::uint64_t total = spool.fill(content, chunk_size_);
  auto cli = make_client(base_url_, retry_, token_);
  const std::string path = "/api/datasets/" + dataset.dataset_id + "/add";

  httplib::MultipartFormDataItems items = {{"title", dataset.title, "", "text/plain"}};
  httplib::Result res{nullptr, httplib::Error::Unknown};
  const std::size_t chunk = chunk_size_;
  for (int attempt = 0; attempt < std::max(1, retry_.attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(retry_.backoff * (1 << std::min(attempt - 1, 6)));
    httplib::MultipartFormDataProviderItems providers = {
        {"file",
         [&spool, chunk](std::size_t offset, httplib::DataSink& sink) {
           if (offset >= spool.size()) {
             sink.done();
             return true;
           }
           Bytes buf(chunk);
           const std::size_t n = spool.read_at(offset, buf);
           return sink.write(reinterpret_cast<const char*>(buf.data()), n);
         },
         std::string(label), "application/octet-stream"}};
    res = cli.Post(path, {}, items, providers);
    if (res && res->status == 503) continue;  // ingest in progress
    break;
  }
  if (!res || res->status != 200) http_fail(res, "upload");
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception&) {
    fail(ErrorCode::format, "repository returned invalid JSON");
  }
  if (!reply.contains("file_id")) fail(ErrorCode::format, "repository reply lacks file_id");
  const auto reported = reply.value("byte_length", total);
  if (reported != total) fail(ErrorCode::io, "repository stored a different byte count");
  return StoredFileRef{reply["file_id"].get<std::string>(), dataset, total, std::string(label)};
}

void HttpRepository::fetch(std::string_view file_id, const ChunkSink& sink) const {
  auto cli = make_client(base_url_, retry_, token_);
  int status = 0;
  auto res = cli.Get(
      "/api/access/datafile/" + std::string(file_id),
      [&](const httplib::Response& r) {
        status = r.status;
        return r.status == 200;
      },
      [&](const char* data, std::size_t len) {
        sink(ByteView(reinterpret_cast<const std::uint8_t*>(data), len));
        return true;
      });
  if (status == 404) fail(ErrorCode::not_found, "unknown file id: " + std::string(file_id));
  if (!res || status != 200) http_fail(res, "download");
}

std::vector<StoredFileRef> HttpRepository::list_dataset(std::string_view dataset_id) const {
  auto cli = make_client(base_url_, retry_, token_);
  auto res = cli.Get("/api/datasets/" + std::string(dataset_id) + "/files");
  if (!res || res->status != 200) http_fail(res, "list dataset");
  std::vector<StoredFileRef> out;
  const json reply = json::parse(res->body);
  const DatasetRef ds{std::string(dataset_id), reply.value("title", "")};
  for (const auto& f : reply.at("files")) {
    out.push_back({f.at("file_id").get<std::string>(), ds, f.at("byte_length").get<std::uint64_t>(),
                   f.at("label").get<std::string>()});
  }
  return out;
}

void HttpRepository::remove(std::string_view file_id) {
  auto cli = make_client(base_url_, retry_, token_);
  auto res = cli.Delete("/api/files/" + std::string(file_id));
  if (!res || res->status != 200) http_fail(res, "delete");
}

}  // namespace sealstamp
