#include "sealstamp/bench.hpp"

#include <charconv>
#include <cstdio>
#include <random>
#include <sstream>

#include "sealstamp/anchors.hpp"
#include "sealstamp/engine.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/record_store.hpp"
#include "sealstamp/repository.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp::bench {

namespace fs = std::filesystem;

std::string_view to_string(ContentKind kind) {
  return kind == ContentKind::tabular ? "tabular" : "binary";
}

ContentKind parse_content_kind(std::string_view text) {
  if (text == "tabular") return ContentKind::tabular;
  if (text == "binary") return ContentKind::binary;
  fail(ErrorCode::validation, "unknown content kind: " + std::string(text));
}

namespace {

// Smallest row: six one-character fields, five commas, newline.
constexpr std::size_t kMinRow = 2 * kTabularColumns;

std::string make_row(std::mt19937_64& rng, std::uint64_t row) {
  static constexpr const char* kCategories[] = {"alpha", "beta", "gamma", "delta", "epsilon"};
  char buf[160];
  const int n = std::snprintf(
      buf, sizeof buf, "%llu,2022-%02u-%02uT%02u:%02u:%02u,%s,%.6f,%lld,%s\n",
      static_cast<unsigned long long>(row), static_cast<unsigned>(rng() % 12 + 1),
      static_cast<unsigned>(rng() % 28 + 1), static_cast<unsigned>(rng() % 24),
      static_cast<unsigned>(rng() % 60), static_cast<unsigned>(rng() % 60), kCategories[rng() % 5],
      static_cast<double>(rng() % 100000000) / 1000.0, static_cast<long long>(rng() % 2000001) - 1000000,
      (rng() & 1) ? "true" : "false");
  return std::string(buf, static_cast<std::size_t>(n));
}

// Pads the last field with zeros so the row is exactly `length` bytes.
std::string pad_row(std::string row, std::size_t length) {
  row.insert(row.size() - 1, length - row.size(), '0');
  return row;
}

void generate_tabular(Bytes& out, std::uint64_t size, std::mt19937_64& rng) {
  if (size < kMinRow) {
    out.assign(size, '0');
    if (size > 0) out.back() = '\n';
    return;
  }
  std::uint64_t row_no = 0;
  while (out.size() < size) {
    const std::size_t remaining = size - out.size();
    std::string row = make_row(rng, row_no++);
    if (row.size() > remaining) {
      row = pad_row("0,0,0,0,0,0\n", remaining);
    } else if (remaining - row.size() < kMinRow) {
      row = pad_row(std::move(row), remaining);
    }
    out.insert(out.end(), row.begin(), row.end());
  }
}

}  // namespace

Bytes generate_file(std::uint64_t size, ContentKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ (kind == ContentKind::tabular ? 0x7461627ULL : 0x62696eULL));
  Bytes out;
  out.reserve(size);
  if (kind == ContentKind::tabular) {
    generate_tabular(out, size, rng);
    return out;
  }
  out.resize(size);
  std::size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    const std::uint64_t v = rng();
    for (int b = 0; b < 8; ++b) out[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  const std::uint64_t tail = rng();
  for (int b = 0; i < size; ++i, ++b) out[i] = static_cast<std::uint8_t>(tail >> (8 * b));
  return out;
}

namespace {

// Memory-backed istream without copying the buffer.
class ViewBuf : public std::streambuf {
 public:
  explicit ViewBuf(ByteView data) {
    char* p = const_cast<char*>(reinterpret_cast<const char*>(data.data()));
    setg(p, p, p + data.size());
  }
};

class ViewStream : public std::istream {
 public:
  explicit ViewStream(ByteView data) : std::istream(nullptr), buf_(data) { rdbuf(&buf_); }

 private:
  ViewBuf buf_;
};

}  // namespace

std::vector<BenchSample> run_benchmark(const std::vector<std::uint64_t>& sizes,
                                       const std::vector<ContentKind>& kinds, int repeats,
                                       const BenchOptions& options) {
  if (repeats < 1) fail(ErrorCode::validation, "repeats must be >= 1");
  const bool own_dir = options.work_dir.empty();
  const fs::path dir =
      own_dir ? fs::temp_directory_path() / ("sealstamp-bench-" + random_hex_id(6)) : options.work_dir;
  fs::create_directories(dir);

  std::vector<BenchSample> samples;
  try {
    LocalRepository repo(dir / "repository", options.chunk_size);
    RecordStore records(dir / "records.log");
    LocalLedger ledger(dir / "ledger.tsv");
    Anchorer anchorer(ledger, AnchorMode::immediate, dir / "pending.tsv");
    EngineOptions eo;
    eo.chunk_size = options.chunk_size;
    eo.kdf_iterations = options.kdf_iterations;
    eo.upload_concurrency = options.upload_concurrency;
    Engine engine(repo, records, anchorer, eo);
    const Password password("benchmark password");
    const DatasetRef dataset{"bench", "benchmark runs"};

    // Untimed warm-up so the first measured sample does not pay for page
    // faults and lazy library initialisation.
    engine.upload(dataset, {UploadInput::from_bytes("warmup", generate_file(4096, ContentKind::binary, 1))},
                  password, false);

    std::vector<std::pair<std::uint64_t, ContentKind>> cases;
    std::vector<Bytes> contents;
    for (const std::uint64_t size : sizes) {
      for (const ContentKind kind : kinds) {
        cases.emplace_back(size, kind);
        contents.push_back(generate_file(size, kind, options.seed));
      }
    }
    // Repeats are the outer loop so slow drift in machine speed spreads
    // evenly over all sizes instead of biasing whichever ran last.
    for (int rep = 0; rep < repeats; ++rep) {
      for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto [size, kind] = cases[c];
        const ByteView view(contents[c]);
        UploadInput input{format_size(size) + "-" + std::string(to_string(kind)) + ".dat",
                          [view] { return std::make_unique<ViewStream>(view); }};
        const UploadResult result = engine.upload(dataset, {input}, password, false);
        if (!result.ok()) fail(result.failures.front().code, result.failures.front().message);
        const UploadTimings& t = result.files.front().timings;
        const double values[] = {t.key_gen, t.encrypt, t.plaintext_hash, t.ciphertext_hash,
                                 t.store,   t.record_put, t.other,       t.total};
        for (std::size_t op = 0; op < kOperations.size(); ++op)
          samples.push_back({std::string(kOperations[op]), size, kind, rep, values[op]});
        // Keep scratch usage flat across large runs.
        repo.remove(result.files.front().ref.file_id);
      }
    }
  } catch (...) {
    if (own_dir) fs::remove_all(dir);
    throw;
  }
  if (own_dir) fs::remove_all(dir);
  return samples;
}

double mean_ms(const std::vector<BenchSample>& samples, std::string_view operation,
               std::uint64_t size, ContentKind kind) {
  double sum = 0;
  int n = 0;
  for (const auto& s : samples) {
    if (s.operation == operation && s.size_bytes == size && s.kind == kind) {
      sum += s.elapsed_ms;
      ++n;
    }
  }
  if (n == 0) fail(ErrorCode::not_found, "no samples for " + std::string(operation));
  return sum / n;
}

std::string samples_csv(const std::vector<BenchSample>& samples) {
  std::ostringstream out;
  out << "operation,size_bytes,kind,repeat,elapsed_ms\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.3f", s.elapsed_ms);
    out << s.operation << ',' << s.size_bytes << ',' << to_string(s.kind) << ',' << s.repeat << ','
        << buf << '\n';
  }
  return out.str();
}

std::string summary_csv(const std::vector<BenchSample>& samples,
                        const std::vector<std::uint64_t>& sizes,
                        const std::vector<ContentKind>& kinds) {
  std::ostringstream out;
  out << "operation";
  for (const auto size : sizes)
    for (const auto kind : kinds) out << ',' << format_size(size) << '_' << to_string(kind) << "_ms";
  out << '\n';
  char buf[64];
  for (const auto op : kOperations) {
    out << op;
    for (const auto size : sizes) {
      for (const auto kind : kinds) {
        std::snprintf(buf, sizeof buf, "%.3f", mean_ms(samples, op, size, kind));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::uint64_t parse_size(std::string_view text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr == text.data()) fail(ErrorCode::validation, "bad size: " + std::string(text));
  const std::string_view unit(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr));
  if (unit.empty() || unit == "B") return value;
  if (unit == "KB" || unit == "K") return value << 10;
  if (unit == "MB" || unit == "M") return value << 20;
  if (unit == "GB" || unit == "G") return value << 30;
  fail(ErrorCode::validation, "bad size unit: " + std::string(text));
}

std::string format_size(std::uint64_t bytes) {
  if (bytes >= (1ULL << 30) && bytes % (1ULL << 30) == 0) return std::to_string(bytes >> 30) + "GB";
  if (bytes >= (1ULL << 20) && bytes % (1ULL << 20) == 0) return std::to_string(bytes >> 20) + "MB";
  if (bytes >= (1ULL << 10) && bytes % (1ULL << 10) == 0) return std::to_string(bytes >> 10) + "KB";
  return std::to_string(bytes) + "B";
}

}  // namespace sealstamp::bench
