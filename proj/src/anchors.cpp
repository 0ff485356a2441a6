#include "sealstamp/anchors.hpp"

#include <charconv>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(AnchorMode mode) {
  switch (mode) {
    case AnchorMode::immediate: return "immediate";
    case AnchorMode::concat_batch: return "concat_batch";
    case AnchorMode::merkle_batch: return "merkle_batch";
  }
  return "immediate";
}

AnchorMode parse_anchor_mode(std::string_view text) {
  if (text == "immediate") return AnchorMode::immediate;
  if (text == "concat_batch") return AnchorMode::concat_batch;
  if (text == "merkle_batch") return AnchorMode::merkle_batch;
  fail(ErrorCode::validation, "unknown anchor mode: " + std::string(text));
}

// ---- receipt text form -------------------------------------------------------

namespace {

std::size_t parse_index(std::string_view text) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorCode::format, "bad integer field: " + std::string(text));
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string context_to_text(const AnchorReceipt& r) {
  if (r.merkle) {
    std::string out = "merkle:" + r.merkle->root.hex() + ":" +
                      std::to_string(r.merkle->proof.leaf_index);
    for (const ProofStep& s : r.merkle->proof.siblings) {
      out += ':';
      out += s.sibling.hex();
      out += static_cast<char>(s.side);
    }
    return out;
  }
  if (r.concat) {
    std::string out = "concat:" + std::to_string(r.concat->member_index) + ":";
    for (std::size_t i = 0; i < r.concat->members.size(); ++i) {
      if (i > 0) out += ',';
      out += r.concat->members[i].plaintext.hex();
      out += '/';
      out += r.concat->members[i].ciphertext.hex();
    }
    return out;
  }
  return "-";
}

void context_from_text(std::string_view text, AnchorReceipt& r) {
  if (text == "-") return;
  const auto parts = split(text, ':');
  if (parts[0] == "merkle" && parts.size() >= 3) {
    MerkleContext ctx;
    ctx.root = Digest::from_hex(parts[1]);
    ctx.proof.leaf_index = parse_index(parts[2]);
    for (std::size_t i = 3; i < parts.size(); ++i) {
      const std::string_view step = parts[i];
      if (step.size() != 2 * kDigestSize + 1) fail(ErrorCode::format, "bad proof step");
      const char side = step.back();
      if (side != 'L' && side != 'R') fail(ErrorCode::format, "bad proof side");
      ctx.proof.siblings.push_back(
          {Digest::from_hex(step.substr(0, 2 * kDigestSize)), static_cast<Side>(side)});
    }
    r.merkle = std::move(ctx);
    return;
  }
  if (parts[0] == "concat" && parts.size() == 3) {
    ConcatContext ctx;
    ctx.member_index = parse_index(parts[1]);
    for (std::string_view member : split(parts[2], ',')) {
      const auto halves = split(member, '/');
      if (halves.size() != 2) fail(ErrorCode::format, "bad concat member");
      ctx.members.push_back({Digest::from_hex(halves[0]), Digest::from_hex(halves[1])});
    }
    if (ctx.member_index >= ctx.members.size()) fail(ErrorCode::format, "concat index out of range");
    r.concat = std::move(ctx);
    return;
  }
  fail(ErrorCode::format, "unknown batch context");
}

}  // namespace

std::vector<std::string> receipt_to_fields(const AnchorReceipt& r) {
  return {std::string(to_string(r.mode)),   escape_field(r.provider_id),
          escape_field(r.verification_link), r.anchored_digest.hex(),
          escape_field(r.timestamp_utc),     context_to_text(r)};
}

AnchorReceipt receipt_from_fields(std::span<const std::string> f) {
  if (f.size() != kReceiptFieldCount) fail(ErrorCode::format, "receipt needs 6 fields");
  AnchorReceipt r;
  try {
    r.mode = parse_anchor_mode(f[0]);
  } catch (const Error&) {
    fail(ErrorCode::format, "bad anchor mode in receipt");
  }
  r.provider_id = unescape_field(f[1]);
  r.verification_link = unescape_field(f[2]);
  r.anchored_digest = Digest::from_hex(f[3]);
  r.timestamp_utc = unescape_field(f[4]);
  context_from_text(f[5], r);
  return r;
}

// ---- local ledger ------------------------------------------------------------

Digest ledger_chain(const Digest& previous, const Digest& digest, std::string_view timestamp_utc) {
  Sha512 h;
  h.update(previous.bytes);
  h.update(digest.bytes);
  h.update(as_bytes(timestamp_utc));
  return h.finish();
}

namespace {

constexpr std::string_view kLedgerLinkPrefix = "local://ledger/";

struct LedgerScan {
  std::vector<LedgerEntry> entries;
  AuditResult audit;
};

LedgerScan scan_ledger(const fs::path& path) {
  LedgerScan scan;
  if (!fs::exists(path)) return scan;
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open ledger " + path.string());
  std::string line;
  Digest prev{};
  std::string prev_ts;
  std::uint64_t expected = 0;
  auto bad = [&](std::string why) {
    scan.audit.ok = false;
    scan.audit.first_bad_seq = expected;
    scan.audit.diagnostic = "seq " + std::to_string(expected) + ": " + std::move(why);
  };
  while (std::getline(in, line)) {
    const auto f = split_tabs(line);
    if (f.size() != 4) {
      bad("malformed line");
      break;
    }
    LedgerEntry e;
    try {
      e.seq = parse_index(f[0]);
      e.timestamp_utc = f[1];
      e.digest = Digest::from_hex(f[2]);
      e.chain = Digest::from_hex(f[3]);
    } catch (const Error& err) {
      bad(std::string("unparsable entry: ") + err.what());
      break;
    }
    if (e.seq != expected) {
      bad("sequence gap (found " + std::to_string(e.seq) + ")");
      break;
    }
    if (!prev_ts.empty() && e.timestamp_utc < prev_ts) {
      bad("timestamp goes backwards");
      break;
    }
    if (ledger_chain(prev, e.digest, e.timestamp_utc) != e.chain) {
      bad("hash chain mismatch");
      break;
    }
    prev = e.chain;
    prev_ts = e.timestamp_utc;
    scan.entries.push_back(std::move(e));
    ++expected;
  }
  scan.audit.entries = scan.entries.size();
  return scan;
}

}  // namespace

AuditResult audit_ledger_file(const fs::path& path) { return scan_ledger(path).audit; }

LocalLedger::LocalLedger(fs::path path, Clock clock)
    : path_(std::move(path)), clock_(clock ? std::move(clock) : Clock(utc_now)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::lock_guard lock(mu_);
  reload_locked();
}

void LocalLedger::reload_locked() const {
  LedgerScan scan = scan_ledger(path_);
  cache_ = std::move(scan.entries);
  corrupted_ = !scan.audit.ok;
  corruption_ = scan.audit.diagnostic;
}

std::string LocalLedger::link_for(std::uint64_t seq) {
  return std::string(kLedgerLinkPrefix) + std::to_string(seq);
}

AnchorReceipt LocalLedger::submit(const Digest& digest) {
  std::lock_guard lock(mu_);
  // Full replay: an in-place edit need not change size or mtime.
  reload_locked();
  if (corrupted_) fail(ErrorCode::corruption, "ledger failed audit: " + corruption_);

  std::string ts = clock_();
  if (!cache_.empty() && ts < cache_.back().timestamp_utc) ts = cache_.back().timestamp_utc;
  LedgerEntry e;
  e.seq = cache_.size();
  e.timestamp_utc = ts;
  e.digest = digest;
  e.chain = ledger_chain(cache_.empty() ? Digest{} : cache_.back().chain, digest, ts);
  const std::string line = std::to_string(e.seq) + "\t" + e.timestamp_utc + "\t" +
                           e.digest.hex() + "\t" + e.chain.hex() + "\n";
  append_durable(path_, line);
  cache_.push_back(e);

  AnchorReceipt r;
  r.verification_link = link_for(e.seq);
  r.anchored_digest = digest;
  r.timestamp_utc = ts;
  r.provider_id = id();
  return r;
}

std::optional<AnchoredEntry> LocalLedger::resolve(std::string_view link,
                                                  std::string* diagnostic) const {
  auto note = [&](std::string msg) {
    if (diagnostic) *diagnostic = std::move(msg);
    return std::nullopt;
  };
  if (!link.starts_with(kLedgerLinkPrefix)) return note("not a local ledger link: " + std::string(link));
  std::uint64_t seq = 0;
  try {
    seq = parse_index(link.substr(kLedgerLinkPrefix.size()));
  } catch (const Error&) {
    return note("malformed ledger link: " + std::string(link));
  }
  std::lock_guard lock(mu_);
  reload_locked();
  if (seq >= cache_.size()) return note("unknown link: " + std::string(link));
  return AnchoredEntry{cache_[seq].digest, cache_[seq].timestamp_utc};
}

std::vector<LedgerEntry> LocalLedger::entries() const {
  std::lock_guard lock(mu_);
  reload_locked();
  return cache_;
}

// ---- remote client -------------------------------------------------------------

RemoteAnchorClient::RemoteAnchorClient(std::string base_url, RetryPolicy retry,
                                       std::string provider_id)
    : base_url_(std::move(base_url)), retry_(retry), provider_id_(std::move(provider_id)) {}

RemoteAnchorClient::~RemoteAnchorClient() = default;

namespace {

httplib::Client make_client(const std::string& base_url, const RetryPolicy& retry) {
  httplib::Client cli(base_url);
  const auto t = retry.timeout;
  cli.set_connection_timeout(t);
  cli.set_read_timeout(t);
  cli.set_write_timeout(t);
  return cli;
}

std::string link_id(std::string_view link) {
  const std::size_t slash = link.rfind('/');
  return std::string(slash == std::string_view::npos ? link : link.substr(slash + 1));
}

}  // namespace

AnchorReceipt RemoteAnchorClient::submit(const Digest& digest) {
  auto cli = make_client(base_url_, retry_);
  const httplib::Headers headers = {{"Idempotency-Key", random_hex_id(16)}};
  const std::string body = json{{"hash", digest.hex()}}.dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < std::max(1, retry_.attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(retry_.backoff * (1 << (attempt - 1)));
    auto res = cli.Post("/hashes", headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200 && res->status != 201)
      fail(ErrorCode::validation, "anchor provider rejected digest: HTTP " + std::to_string(res->status));
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception&) {
      fail(ErrorCode::format, "anchor provider returned invalid JSON");
    }
    if (!reply.contains("link") || !reply["link"].is_string())
      fail(ErrorCode::format, "anchor provider reply has no link");

    AnchorReceipt r;
    r.verification_link = reply["link"].get<std::string>();
    r.anchored_digest = digest;
    r.provider_id = provider_id_;
    std::string diag;
    const auto entry = resolve(r.verification_link, &diag);
    if (!entry) fail(ErrorCode::unavailable, "submitted digest does not resolve: " + diag);
    if (entry->digest != digest) fail(ErrorCode::corruption, "provider echoed a different digest");
    r.timestamp_utc = entry->timestamp_utc;
    return r;
  }
  fail(ErrorCode::unavailable, "anchor provider unreachable: " + last_error);
}

std::optional<AnchoredEntry> RemoteAnchorClient::resolve(std::string_view link,
                                                         std::string* diagnostic) const {
  auto note = [&](std::string msg) {
    if (diagnostic) *diagnostic = std::move(msg);
    return std::nullopt;
  };
  auto cli = make_client(base_url_, retry_);
  const std::string id = link_id(link);
  if (id.empty()) return note("malformed link: " + std::string(link));
  for (int attempt = 0; attempt < std::max(1, retry_.attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(retry_.backoff * (1 << (attempt - 1)));
    auto res = cli.Get("/proofs/" + id);
    if (!res || res->status >= 500) continue;
    if (res->status == 404) return note("unknown link: " + std::string(link));
    if (res->status != 200) return note("provider returned HTTP " + std::to_string(res->status));
    try {
      const json reply = json::parse(res->body);
      return AnchoredEntry{Digest::from_hex(reply.at("digest").get<std::string>()),
                           reply.at("timestamp").get<std::string>()};
    } catch (const std::exception& e) {
      return note(std::string("malformed proof: ") + e.what());
    }
  }
  return note("provider unreachable");
}

// ---- receipt verification ------------------------------------------------------

bool verify_receipt(const AnchorProvider& provider, const AnchorReceipt& receipt,
                    const Digest& leaf, std::string* diagnostic) {
  auto reject = [&](std::string msg) {
    if (diagnostic) *diagnostic = std::move(msg);
    return false;
  };
  if (receipt.provider_id != provider.id())
    return reject("receipt issued by provider '" + receipt.provider_id + "', checking against '" +
                  provider.id() + "'");

  if (receipt.merkle) {
    if (receipt.merkle->root != receipt.anchored_digest)
      return reject("batch root differs from anchored digest");
    if (!merkle_verify(leaf, receipt.merkle->proof, receipt.merkle->root))
      return reject("merkle proof does not fold to the anchored root");
  } else if (receipt.concat) {
    const auto& ctx = *receipt.concat;
    if (ctx.member_index >= ctx.members.size()) return reject("concat member index out of range");
    if (combined_hash({ctx.members[ctx.member_index]}).value != leaf)
      return reject("file digests differ from the batch member");
    if (combined_hash(ctx.members).value != receipt.anchored_digest)
      return reject("concatenated batch hash differs from anchored digest");
  } else if (receipt.anchored_digest != leaf) {
    return reject("anchored digest differs from expected digest");
  }

  std::string why;
  const auto entry = provider.resolve(receipt.verification_link, &why);
  if (!entry) return reject(why);
  if (entry->digest != receipt.anchored_digest)
    return reject("provider entry holds a different digest");
  if (entry->timestamp_utc != receipt.timestamp_utc)
    return reject("provider timestamp differs from receipt");
  if (diagnostic) diagnostic->clear();
  return true;
}

// ---- pending queue ---------------------------------------------------------

PendingQueue::PendingQueue(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  if (!fs::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_tabs(line);
    if (f.size() != 3) fail(ErrorCode::corruption, "malformed pending queue line");
    items_.push_back({unescape_field(f[0]), {Digest::from_hex(f[1]), Digest::from_hex(f[2])}});
  }
}

void PendingQueue::persist() const {
  std::string text;
  for (const auto& item : items_) {
    text += escape_field(item.file_id) + "\t" + item.pair.plaintext.hex() + "\t" +
            item.pair.ciphertext.hex() + "\n";
  }
  write_file_atomic(path_, text);
}

void PendingQueue::push(const PendingItem& item) {
  items_.push_back(item);
  persist();
}

std::vector<PendingItem> PendingQueue::items() const { return items_; }

void PendingQueue::replace(std::vector<PendingItem> items) {
  items_ = std::move(items);
  persist();
}

bool PendingQueue::contains(std::string_view file_id) const {
  for (const auto& item : items_)
    if (item.file_id == file_id) return true;
  return false;
}

// ---- anchorer ----------------------------------------------------------------

Anchorer::Anchorer(AnchorProvider& provider, AnchorMode mode, fs::path queue_path)
    : provider_(provider), mode_(mode), queue_(std::move(queue_path)) {}

std::optional<AnchorReceipt> Anchorer::try_anchor(const DigestPair& pair) {
  if (mode_ != AnchorMode::immediate) return std::nullopt;
  std::lock_guard lock(mu_);
  try {
    return provider_.submit(combined_hash({pair}).value);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::unavailable) return std::nullopt;
    throw;
  }
}

void Anchorer::enqueue(const PendingItem& item) {
  std::lock_guard lock(mu_);
  if (!queue_.contains(item.file_id)) queue_.push(item);
}

std::vector<PendingItem> Anchorer::pending() const {
  std::lock_guard lock(mu_);
  return queue_.items();
}

bool Anchorer::is_queued(std::string_view file_id) const {
  std::lock_guard lock(mu_);
  return queue_.contains(file_id);
}

FlushOutcome Anchorer::flush_batch(const Deliver& deliver, const Filter& keep) {
  std::lock_guard lock(mu_);
  FlushOutcome out;
  std::vector<PendingItem> live;
  for (const auto& item : queue_.items())
    if (!keep || keep(item.file_id)) live.push_back(item);
  if (live.empty()) {
    if (queue_.size() != 0) queue_.replace({});
    out.diagnostic = "nothing pending";
    return out;
  }

  try {
    if (mode_ == AnchorMode::immediate) {
      // Retry of digests that missed an outage; each anchors on its own.
      std::size_t done = 0;
      for (; done < live.size(); ++done) {
        AnchorReceipt r;
        try {
          r = provider_.submit(combined_hash({live[done].pair}).value);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::unavailable) throw;
          out.diagnostic = e.what();
          break;
        }
        deliver(live[done].file_id, r);
        out.batch_receipt = r;
      }
      out.files = done;
      out.flushed = done > 0;
      queue_.replace(std::vector<PendingItem>(live.begin() + static_cast<std::ptrdiff_t>(done), live.end()));
      out.still_pending = live.size() - done;
      return out;
    }

    std::vector<DigestPair> members;
    for (const auto& item : live) members.push_back(item.pair);

    if (mode_ == AnchorMode::merkle_batch) {
      std::vector<Digest> leaves;
      for (const auto& pair : members) leaves.push_back(combined_hash({pair}).value);
      const MerkleTree tree = merkle_build(std::move(leaves));
      AnchorReceipt batch = provider_.submit(tree.root());
      batch.mode = mode_;
      for (std::size_t i = 0; i < live.size(); ++i) {
        AnchorReceipt r = batch;
        r.merkle = MerkleContext{tree.root(), tree.prove(i)};
        deliver(live[i].file_id, r);
      }
      out.batch_receipt = batch;
    } else {
      const Digest root = combined_hash(members).value;
      AnchorReceipt batch = provider_.submit(root);
      batch.mode = mode_;
      for (std::size_t i = 0; i < live.size(); ++i) {
        AnchorReceipt r = batch;
        r.concat = ConcatContext{i, members};
        deliver(live[i].file_id, r);
      }
      out.batch_receipt = batch;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unavailable) throw;
    out.diagnostic = e.what();
    out.still_pending = live.size();
    return out;
  }
  queue_.replace({});
  out.flushed = true;
  out.files = live.size();
  return out;
}

}  // namespace sealstamp
