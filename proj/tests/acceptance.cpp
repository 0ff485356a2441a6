// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracle/reference.hpp"
#include "oracle/vectors.hpp"
#include "protocol_suite.hpp"
#include "sealstamp/bench.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"
#include "support.hpp"

using namespace sealstamp;
using testing::ProviderKind;
using testing::random_bytes;
using testing::random_digest;
using testing::Stack;
using testing::TempDir;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::string detail;
};

/// Collects the first few failure messages.
class Failures {
 public:
  void add(std::string what) {
    ++count_;
    if (shown_.size() < 5) shown_.push_back(std::move(what));
  }
  bool any() const { return count_ > 0; }
  std::string summary() const {
    std::string out = std::to_string(count_) + " failure(s)";
    for (const auto& s : shown_) out += "; " + s;
    return out;
  }

 private:
  std::size_t count_ = 0;
  std::vector<std::string> shown_;
};

std::optional<ErrorCode> error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool has_partials(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().find(".partial-") != std::string::npos) return true;
  return false;
}

// ---- 1 ------------------------------------------------------------------------

Outcome roundtrip() {
  TempDir tmp;
  EngineOptions opts;  // production KDF cost and chunk size
  Stack s(tmp.path(), ProviderKind::local_ledger, AnchorMode::immediate, opts);
  std::mt19937_64 rng(1001);
  constexpr std::uint64_t kMax = 10ull << 20;
  Failures failures;
  std::uint64_t total = 0;
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t size = i == 0 ? 0 : i == 1 ? kMax : rng() % (kMax + 1);
    const auto kind = i % 2 == 0 ? bench::ContentKind::tabular : bench::ContentKind::binary;
    const Bytes data = bench::generate_file(size, kind, rng());
    total += size;
    const auto up = s.upload("f" + std::to_string(i), data, "pw-" + std::to_string(i % 7));
    if (s.engine->download_with_password(up.ref.file_id, Password("pw-" + std::to_string(i % 7))) != data)
      failures.add("file " + std::to_string(i) + " (" + std::to_string(size) + " B) differs");
  }
  return {!failures.any(), failures.any() ? failures.summary()
                                          : "200 files, " + std::to_string(total >> 20) + " MiB, byte-identical"};
}

// ---- 2 ------------------------------------------------------------------------

Outcome escrow() {
  TempDir tmp;
  Stack s(tmp.path(), ProviderKind::local_ledger, AnchorMode::immediate);
  std::mt19937_64 rng(1002);
  Failures failures;
  std::size_t flips = 0;
  const fs::path out = tmp / "out.bin";
  for (int i = 0; i < 50; ++i) {
    const Bytes data = random_bytes(rng() % 20000, rng);
    const auto up = s.upload("f" + std::to_string(i), data, "pw", true);
    const auto& sh = *up.shares;
    const Bytes via_password = s.engine->download_with_password(up.ref.file_id, Password("pw"));
    const Bytes via_shares = s.engine->download_with_shares(up.ref.file_id, sh.q, sh.r);
    if (via_password != data || via_shares != via_password) failures.add("file " + std::to_string(i) + " paths differ");

    for (int which = 0; which < 2; ++which) {
      for (std::size_t bit = 0; bit < kKeySize * 8; ++bit) {
        Bytes q(sh.q.begin(), sh.q.end());
        Bytes r(sh.r.begin(), sh.r.end());
        testing::flip_bit(which == 0 ? q : r, bit);
        ++flips;
        Bytes emitted;
        const auto mem = error_of([&] { emitted = s.engine->download_with_shares(up.ref.file_id, q, r); });
        const auto file = error_of([&] { s.engine->download_with_shares(up.ref.file_id, q, r, out); });
        if (mem != ErrorCode::authentication || file != ErrorCode::authentication || !emitted.empty() ||
            fs::exists(out))
          failures.add("file " + std::to_string(i) + (which == 0 ? " q" : " r") + " bit " + std::to_string(bit));
      }
    }
  }
  if (has_partials(tmp.path())) failures.add("partial output left behind");
  return {!failures.any(),
          failures.any() ? failures.summary()
                         : "50 files equal on both paths; " + std::to_string(flips) +
                               " single-bit share flips all rejected with authentication, 0 bytes emitted"};
}

// ---- 3 ------------------------------------------------------------------------

Outcome tamper() {
  TempDir tmp;
  Stack s(tmp.path(), ProviderKind::local_ledger, AnchorMode::immediate);
  std::mt19937_64 rng(1003);
  Failures failures;
  std::size_t header_hits = 0;
  for (int i = 0; i < 20; ++i) {
    const Bytes data = random_bytes(1 + rng() % 200000, rng);
    const auto up = s.upload("f" + std::to_string(i), data, "pw", true);
    const std::size_t bits = up.ref.byte_length * 8;
    const std::size_t bit = rng() % bits;
    if (bit < kEnvelopeHeaderSize * 8) ++header_hits;
    testing::flip_file_bit(s.repo->path_of(up.ref.file_id), bit);
    const auto pw = error_of([&] { s.engine->download_with_password(up.ref.file_id, Password("pw")); });
    const auto sh = error_of([&] { s.engine->download_with_shares(up.ref.file_id, up.shares->q, up.shares->r); });
    auto rejected = [](std::optional<ErrorCode> c) {
      return c == ErrorCode::authentication || c == ErrorCode::integrity;
    };
    const VerifyReport report = s.engine->verify(up.ref.file_id);
    if (!rejected(pw) || !rejected(sh) || report.ciphertext_check != CheckStatus::fail)
      failures.add("file " + std::to_string(i) + " bit " + std::to_string(bit) + " not detected");
  }
  return {!failures.any(), failures.any() ? failures.summary()
                                          : "20/20 flips detected on both paths and by verify (" +
                                                std::to_string(header_hits) + " in the header)"};
}

// ---- 4 ------------------------------------------------------------------------

Outcome combined() {
  std::mt19937_64 rng(1004);
  Failures failures;
  for (int i = 0; i < 100; ++i) {
    const DigestPair p{random_digest(rng), random_digest(rng)};
    const std::string expected = oracle::combined_hash_hex({p.plaintext.hex(), p.ciphertext.hex()});
    const std::string text = p.plaintext.hex() + "||" + p.ciphertext.hex();
    const std::string direct = oracle::hex(oracle::sha512(text));
    const std::string got = combined_hash({p}).value.hex();
    if (got != expected || got != direct) failures.add("pair " + std::to_string(i));
  }
  return {!failures.any(), failures.any() ? failures.summary() : "100/100 pairs byte-exact"};
}

// ---- 5 ------------------------------------------------------------------------

Outcome merkle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1005);
  Failures failures;
  std::size_t proofs = 0;
  std::size_t mutations = 0;
  for (std::size_t n = 1; n <= 16; ++n) {
    std::vector<Digest> leaves;
    std::vector<std::array<std::uint8_t, 64>> raw;
    for (std::size_t i = 0; i < n; ++i) {
      leaves.push_back(random_digest(rng));
      std::array<std::uint8_t, 64> a{};
      std::copy(leaves.back().bytes.begin(), leaves.back().bytes.end(), a.begin());
      raw.push_back(a);
    }
    const MerkleTree tree = merkle_build(leaves);
    Digest oracle_root;
    const auto r = oracle::merkle_root(raw);
    std::copy(r.begin(), r.end(), oracle_root.bytes.begin());
    if (tree.root() != oracle_root) failures.add("root mismatch at n=" + std::to_string(n));

    for (std::size_t i = 0; i < n; ++i) {
      const MerkleProof proof = merkle_prove(tree, i);
      ++proofs;
      if (!merkle_verify(leaves[i], proof, oracle_root))
        failures.add("n=" + std::to_string(n) + " i=" + std::to_string(i) + " does not verify");
      auto must_fail = [&](const Digest& leaf, const MerkleProof& p, const Digest& root, const char* what) {
        ++mutations;
        if (merkle_verify(leaf, p, root))
          failures.add(std::string(what) + " accepted at n=" + std::to_string(n) + " i=" + std::to_string(i));
      };
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) must_fail(leaves[j], proof, oracle_root, "other leaf");
      for (std::size_t bit = 0; bit < 512; bit += 7) {
        Digest leaf = leaves[i];
        leaf.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        must_fail(leaf, proof, oracle_root, "mutated leaf");
        Digest root = oracle_root;
        root.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        must_fail(leaves[i], proof, root, "mutated root");
      }
      for (std::size_t k = 0; k < proof.siblings.size(); ++k) {
        MerkleProof side = proof;
        side.siblings[k].side = side.siblings[k].side == Side::left ? Side::right : Side::left;
        must_fail(leaves[i], side, oracle_root, "flipped side");
        for (std::size_t bit = 0; bit < 512; bit += 31) {
          MerkleProof sib = proof;
          sib.siblings[k].sibling.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
          must_fail(leaves[i], sib, oracle_root, "mutated sibling");
        }
        MerkleProof dropped = proof;
        dropped.siblings.erase(dropped.siblings.begin() + static_cast<std::ptrdiff_t>(k));
        must_fail(leaves[i], dropped, oracle_root, "dropped step");
      }
      MerkleProof extended = proof;
      extended.siblings.push_back({leaves[i], Side::right});
      must_fail(leaves[i], extended, oracle_root, "extra step");
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (secs >= 10.0) failures.add("took " + fmt(secs) + " s");
  return {!failures.any(), failures.any() ? failures.summary()
                                          : std::to_string(proofs) + " proofs verify, " + std::to_string(mutations) +
                                                " mutations rejected, " + fmt(secs, 3) + " s"};
}

// ---- 6 ------------------------------------------------------------------------

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

Outcome anchor_verifiability() {
  TempDir tmp;
  Stack s(tmp.path(), ProviderKind::local_ledger, AnchorMode::merkle_batch);
  std::mt19937_64 rng(1006);
  Failures failures;
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(s.upload("f" + std::to_string(i), random_bytes(rng() % 50000, rng)).ref.file_id);
  const FlushOutcome flushed = s.engine->flush_anchors();
  if (flushed.files != 10 || flushed.still_pending != 0) failures.add("flush anchored " + std::to_string(flushed.files));
  for (const auto& id : ids)
    if (s.engine->verify(id).anchor_check != CheckStatus::pass) failures.add(id + " anchor_check != pass");

  // More batches so the ledger has several lines to edit.
  for (int b = 0; b < 4; ++b) {
    for (int j = 0; j < 2; ++j) ids.push_back(s.upload("g" + std::to_string(b * 2 + j), random_bytes(500, rng)).ref.file_id);
    s.engine->flush_anchors();
  }
  for (const auto& id : ids)
    if (s.engine->verify(id).anchor_check != CheckStatus::pass) failures.add(id + " anchor_check != pass");

  const fs::path ledger = tmp / "ledger.tsv";
  const std::string original = read_file(ledger);
  const auto lines = lines_of(original);
  if (!audit_ledger_file(ledger).ok) failures.add("clean ledger fails audit");
  std::size_t edits = 0;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto fields = split_tabs(lines[n]);
    for (std::size_t f = 0; f < fields.size(); ++f) {
      for (std::size_t pos : {std::size_t{0}, fields[f].size() - 1}) {
        auto edited_fields = fields;
        char& c = edited_fields[f][pos];
        c = f == 1 ? (c == '1' ? '2' : '1') : (c == '1' ? '2' : c == '0' ? '3' : '1');
        auto edited = lines;
        edited[n].clear();
        for (std::size_t k = 0; k < edited_fields.size(); ++k) edited[n] += (k ? "\t" : "") + edited_fields[k];
        write_file_atomic(ledger, join_lines(edited));
        ++edits;
        const AuditResult a = audit_ledger_file(ledger);
        if (a.ok || a.first_bad_seq != n)
          failures.add("edit of line " + std::to_string(n) + " field " + std::to_string(f) + " reported at " +
                       (a.first_bad_seq ? std::to_string(*a.first_bad_seq) : std::string(a.ok ? "pass" : "?")));
      }
    }
  }
  write_file_atomic(ledger, original);
  if (!audit_ledger_file(ledger).ok) failures.add("restored ledger fails audit");
  return {!failures.any(), failures.any() ? failures.summary()
                                          : "10/10 pass after one merkle flush (" + std::to_string(ids.size()) +
                                                "/" + std::to_string(ids.size()) + " over " + std::to_string(lines.size()) +
                                                " batches); " + std::to_string(edits) +
                                                " ledger edits each failed at their own seq"};
}

// ---- 7 ------------------------------------------------------------------------

Outcome known_answers() {
  Failures failures;
  for (const auto& [input, expected] : {std::pair<std::string, std::string_view>{"", oracle::vectors::kSha512Empty},
                                        std::pair<std::string, std::string_view>{"abc", oracle::vectors::kSha512Abc}}) {
    for (std::size_t chunk : {1, 2, 64}) {
      const Bytes b(input.begin(), input.end());
      SpanSource src(b);
      if (hash_stream(src, chunk).hex() != expected) failures.add("hash of \"" + input + "\"");
    }
    if (oracle::hex(oracle::sha512(input)) != expected) failures.add("oracle hash of \"" + input + "\"");
  }
  const auto vectors = oracle::vectors::kdf_vectors();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& v = vectors[i];
    KdfParams p;
    p.iterations = v.iterations;
    std::copy(v.salt.begin(), v.salt.end(), p.salt.bytes.begin());
    const std::string got = to_hex(derive_key(Password(std::string(v.password)), p).view());
    const std::string ref = oracle::hex(oracle::pbkdf2_sha512(v.password, v.salt, v.iterations, 32));
    if (got != ref || got != v.key_hex) failures.add("kdf triple " + std::to_string(i));
  }
  return {!failures.any(), failures.any() ? failures.summary()
                                          : "SHA-512 of \"\" and \"abc\" match; 3 KDF triples byte-exact vs oracle"};
}

// ---- 8 ------------------------------------------------------------------------

Outcome scaling() {
  const auto start = Clock::now();
  const std::vector<std::uint64_t> sizes{1ull << 20, 10ull << 20, 100ull << 20};
  const std::vector<bench::ContentKind> kinds{bench::ContentKind::tabular, bench::ContentKind::binary};
  constexpr int kRepeats = 24;
  const auto samples = bench::run_benchmark(sizes, kinds, kRepeats);
  Failures failures;
  std::ostringstream detail;

  // key_gen does not depend on the file: pool both kinds per size.
  std::vector<double> keygen;
  for (std::uint64_t size : sizes) {
    double sum = 0;
    for (auto kind : kinds) sum += bench::mean_ms(samples, "key_gen", size, kind);
    keygen.push_back(sum / static_cast<double>(kinds.size()));
  }
  const double spread = *std::max_element(keygen.begin(), keygen.end()) / *std::min_element(keygen.begin(), keygen.end());
  detail << "key_gen ms " << fmt(keygen[0]) << "/" << fmt(keygen[1]) << "/" << fmt(keygen[2]) << " (max/min "
         << fmt(spread, 3) << ")";
  if (!(spread < 1.10)) failures.add("key_gen max/min " + fmt(spread, 3) + " >= 1.10");

  for (const char* op : {"encrypt", "plaintext_hash", "ciphertext_hash"}) {
    for (auto kind : kinds) {
      detail << "; " << op << "/" << bench::to_string(kind) << " x";
      for (std::size_t i = 1; i < sizes.size(); ++i) {
        const double ratio = bench::mean_ms(samples, op, sizes[i], kind) / bench::mean_ms(samples, op, sizes[i - 1], kind);
        detail << (i > 1 ? "," : "") << fmt(ratio, 1);
        if (!(ratio >= 5.0 && ratio <= 20.0))
          failures.add(std::string(op) + "/" + std::string(bench::to_string(kind)) + " ratio " + fmt(ratio, 2));
      }
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  detail << "; " << fmt(secs, 0) << " s";
  if (secs >= 600) failures.add("took " + fmt(secs, 0) + " s");
  return {!failures.any(), failures.any() ? failures.summary() + " | " + detail.str() : detail.str()};
}

// ---- 9 ------------------------------------------------------------------------

const char* name_of(FaultPoint p) {
  switch (p) {
    case FaultPoint::after_key_derivation: return "after_key_derivation";
    case FaultPoint::mid_store: return "mid_store";
    case FaultPoint::after_store: return "after_store";
    case FaultPoint::mid_record_write: return "mid_record_write";
    case FaultPoint::after_record_put: return "after_record_put";
  }
  return "?";
}

struct CrashFile {
  std::string label;
  Bytes content;
};

/// Child: uploads `files` one at a time and dies at `point` during the
/// second upload.
[[noreturn]] void crash_child(const fs::path& dir, AnchorMode mode, FaultPoint point,
                              const std::vector<CrashFile>& files) {
  try {
    EngineOptions opts = testing::fast_options();
    opts.chunk_size = 4096;
    int upload_index = -1;
    opts.fault_hook = [&](FaultPoint p) {
      if (p == FaultPoint::after_key_derivation) ++upload_index;
      if (upload_index == 1 && p == point) ::_exit(42);
    };
    Stack s(dir, ProviderKind::local_ledger, mode, opts);
    if (point == FaultPoint::mid_record_write)
      s.records->set_mid_write_hook([&] {
        if (upload_index == 1) ::_exit(42);
      });
    for (const auto& f : files) s.upload(f.label, f.content);
  } catch (...) {
    ::_exit(3);
  }
  ::_exit(0);
}

Outcome crash_consistency() {
  Failures failures;
  std::mt19937_64 rng(1009);
  std::size_t scenarios = 0;
  std::size_t absent = 0;
  std::size_t complete = 0;
  for (AnchorMode mode : {AnchorMode::immediate, AnchorMode::merkle_batch}) {
    for (FaultPoint point : {FaultPoint::after_key_derivation, FaultPoint::mid_store, FaultPoint::after_store,
                             FaultPoint::mid_record_write, FaultPoint::after_record_put}) {
      ++scenarios;
      const std::string tag = std::string(to_string(mode)) + "/" + name_of(point);
      TempDir tmp;
      std::vector<CrashFile> files;
      for (int i = 0; i < 3; ++i) files.push_back({"f" + std::to_string(i), random_bytes(10000 + rng() % 20000, rng)});

      std::cout.flush();
      const pid_t pid = ::fork();
      if (pid < 0) return {false, "fork failed"};
      if (pid == 0) crash_child(tmp.path(), mode, point, files);
      int status = 0;
      ::waitpid(pid, &status, 0);
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 42) {
        failures.add(tag + ": child did not crash at the fault point");
        continue;
      }

      try {
        Stack s(tmp.path(), ProviderKind::local_ledger, mode);
        std::map<std::string, const CrashFile*> by_label;
        for (const auto& f : files) by_label[f.label] = &f;
        std::set<std::string> present;
        for (const FileRecord& r : s.records->all()) {
          present.insert(r.label);
          const CrashFile* want = by_label.at(r.label);
          if (r.plaintext_digest != hash_bytes(want->content)) failures.add(tag + ": " + r.label + " H(m) wrong");
          if (s.engine->download_with_password(r.file_id, Password("pw")) != want->content)
            failures.add(tag + ": " + r.label + " does not round trip");
        }
        if (!present.contains("f0")) failures.add(tag + ": committed file f0 lost");
        if (present.contains("f2")) failures.add(tag + ": f2 should never have started");
        present.contains("f1") ? ++complete : ++absent;

        s.engine->flush_anchors();
        for (const FileRecord& r : s.records->all()) {
          const VerifyReport v = s.engine->verify(r.file_id);
          if (v.any_failure() || v.anchor_pending()) failures.add(tag + ": " + r.label + " does not verify after restart");
        }
        const auto again = s.upload("after", Bytes(1000, 1));
        if (s.engine->verify(again.ref.file_id).anchor_check == CheckStatus::fail)
          failures.add(tag + ": upload after restart does not verify");
        const AuditResult audit = s.ledger->audit();
        if (!audit.ok) failures.add(tag + ": ledger audit failed: " + audit.diagnostic);
      } catch (const std::exception& e) {
        failures.add(tag + ": restart threw: " + e.what());
      }
    }
  }
  return {!failures.any(), failures.any() ? failures.summary()
                                          : std::to_string(scenarios) + " crashes (5 points x immediate/merkle): " +
                                                std::to_string(absent) + " absent, " + std::to_string(complete) +
                                                " complete, 0 partial; ledger audit passes"};
}

// ---- 10 -----------------------------------------------------------------------

Outcome substitutability() {
  const auto local = testing::run_protocol_suite(ProviderKind::local_ledger);
  const auto remote = testing::run_protocol_suite(ProviderKind::mock_remote);
  Failures failures;
  if (local.size() != remote.size()) failures.add("suites differ in length");
  for (std::size_t i = 0; i < std::min(local.size(), remote.size()); ++i) {
    if (local[i].name != remote[i].name) failures.add("check " + std::to_string(i) + " differs in name");
    if (!local[i].ok) failures.add("local: " + local[i].name + ": " + local[i].detail);
    if (!remote[i].ok) failures.add("remote: " + remote[i].name + ": " + remote[i].detail);
  }
  return {!failures.any(), failures.any() ? failures.summary()
                                          : std::to_string(local.size()) + "/" + std::to_string(local.size()) +
                                                " checks pass under both local-ledger and mock-remote"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"end-to-end roundtrip", roundtrip},
      {"escrow equivalence", escrow},
      {"tamper detection", tamper},
      {"combined-hash oracle", combined},
      {"merkle brute-force equivalence", merkle},
      {"anchor verifiability", anchor_verifiability},
      {"known-answer crypto vectors", known_answers},
      {"scaling properties", scaling},
      {"crash consistency", crash_consistency},
      {"provider substitutability", substitutability},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(n)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (!o.ok) ++failed;
    std::cout << (o.ok ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << criteria[i].first << " ("
              << fmt(secs, 1) << " s): " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "acceptance: all criteria pass" : "acceptance: " + std::to_string(failed) + " failing")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
