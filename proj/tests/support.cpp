#include "support.hpp"

#include <fstream>

#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"

namespace testing {

TempDir::TempDir() {
  path_ = fs::temp_directory_path() / ("sealstamp-test-" + random_hex_id(8));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Bytes random_bytes(std::size_t n, std::mt19937_64& rng) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

Digest random_digest(std::mt19937_64& rng) {
  Digest d;
  for (auto& b : d.bytes) b = static_cast<std::uint8_t>(rng());
  return d;
}

void flip_bit(Bytes& data, std::size_t bit) { data.at(bit / 8) ^= static_cast<std::uint8_t>(1u << (bit % 8)); }

void flip_file_bit(const fs::path& path, std::size_t bit) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f.seekg(static_cast<std::streamoff>(bit / 8));
  char c = 0;
  f.read(&c, 1);
  c = static_cast<char>(c ^ (1 << (bit % 8)));
  f.seekp(static_cast<std::streamoff>(bit / 8));
  f.write(&c, 1);
}

AnchorReceipt FlakyProvider::submit(const Digest& digest) {
  if (offline_) fail(ErrorCode::unavailable, "simulated outage");
  ++submissions_;
  return inner_.submit(digest);
}

const char* to_string(ProviderKind kind) {
  return kind == ProviderKind::local_ledger ? "local-ledger" : "mock-remote";
}

EngineOptions fast_options() {
  EngineOptions o;
  o.kdf_iterations = 1000;
  o.chunk_size = 64 * 1024;
  return o;
}

Stack::Stack(fs::path d, ProviderKind k, AnchorMode m, EngineOptions o)
    : dir(std::move(d)), kind(k), mode(m), options(std::move(o)) {
  if (kind == ProviderKind::mock_remote) {
    mock = std::make_unique<MockAnchorServer>();
    mock->start();
    inner = std::make_unique<RemoteAnchorClient>(
        mock->base_url(), RetryPolicy{3, std::chrono::milliseconds(5), std::chrono::milliseconds(2000)});
  } else {
    auto l = std::make_unique<LocalLedger>(dir / "ledger.tsv");
    ledger = l.get();
    inner = std::move(l);
  }
  provider = std::make_unique<FlakyProvider>(*inner);
  reopen();
}

Stack::~Stack() {
  engine.reset();
  anchorer.reset();
  records.reset();
  repo.reset();
}

void Stack::reopen() {
  engine.reset();
  anchorer.reset();
  records.reset();
  repo.reset();
  repo = std::make_unique<LocalRepository>(dir / "repo", options.chunk_size);
  records = std::make_unique<RecordStore>(dir / "records.log");
  anchorer = std::make_unique<Anchorer>(*provider, mode, dir / "pending.tsv");
  engine = std::make_unique<Engine>(*repo, *records, *anchorer, options);
}

UploadedFile Stack::upload(const std::string& label, const Bytes& content, const std::string& password,
                           bool escrow) {
  UploadResult r = engine->upload({"ds", "test dataset"}, {UploadInput::from_bytes(label, content)},
                                  Password(password), escrow);
  if (!r.ok()) fail(r.failures.front().code, r.failures.front().message);
  return std::move(r.files.front());
}

}  // namespace testing
