#include "sealstamp/record_store.hpp"

#include <charconv>
#include <fstream>

#include "sealstamp/error.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPut = "PUT";
constexpr std::string_view kReceipt = "RECEIPT";
constexpr std::string_view kPending = "PENDING";
constexpr std::size_t kBaseFields = 8;

}  // namespace

std::string format_record_line(std::string_view op_tag, const FileRecord& r) {
  std::string line;
  line += op_tag;
  for (const std::string& field :
       {escape_field(r.file_id), escape_field(r.created_utc), escape_field(r.label), r.kdf.salt.hex(),
        std::to_string(r.kdf.iterations), r.plaintext_digest.hex(), r.ciphertext_digest.hex()}) {
    line += '\t';
    line += field;
  }
  if (r.receipt) {
    for (const std::string& field : receipt_to_fields(*r.receipt)) {
      line += '\t';
      line += field;
    }
  } else {
    line += '\t';
    line += kPending;
  }
  line += '\n';
  return line;
}

std::pair<std::string, FileRecord> parse_record_line(std::string_view line) {
  if (line.ends_with('\n')) line.remove_suffix(1);
  const auto f = split_tabs(line);
  const bool pending = f.size() == kBaseFields + 1 && f[kBaseFields] == kPending;
  if (!pending && f.size() != kBaseFields + kReceiptFieldCount)
    fail(ErrorCode::format, "record line has wrong field count");
  if (f[0] != kPut && f[0] != kReceipt) fail(ErrorCode::format, "unknown record op tag");
  FileRecord r;
  r.file_id = unescape_field(f[1]);
  r.created_utc = unescape_field(f[2]);
  r.label = unescape_field(f[3]);
  r.kdf.salt = Salt::from_hex(f[4]);
  std::uint32_t iterations = 0;
  auto [ptr, ec] = std::from_chars(f[5].data(), f[5].data() + f[5].size(), iterations);
  if (ec != std::errc{} || ptr != f[5].data() + f[5].size() || iterations < 1)
    fail(ErrorCode::format, "bad iteration count");
  r.kdf.iterations = iterations;
  r.plaintext_digest = Digest::from_hex(f[6]);
  r.ciphertext_digest = Digest::from_hex(f[7]);
  if (!pending)
    r.receipt = receipt_from_fields(std::span(f).subspan(kBaseFields, kReceiptFieldCount));
  return {f[0], std::move(r)};
}

RecordStore::RecordStore(fs::path log_path) : path_(std::move(log_path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  if (!fs::exists(path_)) return;
  const std::string text = read_file(path_);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      // Torn tail from an interrupted append: drop it so later appends start clean.
      fs::resize_file(path_, pos);
      fsync_path(path_);
      break;
    }
    ++line_no;
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    std::pair<std::string, FileRecord> parsed;
    try {
      parsed = parse_record_line(line);
    } catch (const Error& e) {
      fail(ErrorCode::corruption, "record log line " + std::to_string(line_no) + ": " + e.what());
    }
    auto& [op, rec] = parsed;
    if (op == kPut) {
      if (index_.contains(rec.file_id))
        fail(ErrorCode::corruption, "record log line " + std::to_string(line_no) + ": duplicate PUT");
      order_.push_back(rec.file_id);
      index_[rec.file_id] = std::move(rec);
    } else {
      auto it = index_.find(rec.file_id);
      if (it == index_.end() || !it->second.pending() || !rec.receipt)
        fail(ErrorCode::corruption,
             "record log line " + std::to_string(line_no) + ": RECEIPT without pending PUT");
      it->second.receipt = rec.receipt;
    }
  }
}

void RecordStore::append_locked(const std::string& line) {
  const std::uintmax_t before = fs::exists(path_) ? fs::file_size(path_) : 0;
  try {
    if (mid_write_hook_) {
      const std::size_t half = line.size() / 2;
      append_durable(path_, std::string_view(line).substr(0, half));
      mid_write_hook_();
      append_durable(path_, std::string_view(line).substr(half));
      return;
    }
    append_durable(path_, line);
  } catch (...) {
    // Never leave a partial line for the next append to land behind.
    std::error_code ec;
    if (fs::exists(path_, ec) && fs::file_size(path_, ec) > before) {
      fs::resize_file(path_, before, ec);
      if (!ec) fsync_path(path_);
    }
    throw;
  }
}

void RecordStore::put(const FileRecord& record) {
  if (record.file_id.empty()) fail(ErrorCode::validation, "record needs a file id");
  record.kdf.validate();
  std::unique_lock lock(mu_);
  if (index_.contains(record.file_id))
    fail(ErrorCode::conflict, "record already exists for " + record.file_id);
  append_locked(format_record_line(kPut, record));
  order_.push_back(record.file_id);
  index_[record.file_id] = record;
}

FileRecord RecordStore::get(std::string_view file_id) const {
  std::shared_lock lock(mu_);
  const auto it = index_.find(file_id);
  if (it == index_.end()) fail(ErrorCode::not_found, "no record for " + std::string(file_id));
  return it->second;
}

bool RecordStore::contains(std::string_view file_id) const {
  std::shared_lock lock(mu_);
  return index_.contains(file_id);
}

void RecordStore::attach_receipt(std::string_view file_id, const AnchorReceipt& receipt) {
  std::unique_lock lock(mu_);
  const auto it = index_.find(file_id);
  if (it == index_.end()) fail(ErrorCode::not_found, "no record for " + std::string(file_id));
  if (!it->second.pending()) fail(ErrorCode::conflict, "record already anchored: " + std::string(file_id));
  FileRecord updated = it->second;
  updated.receipt = receipt;
  append_locked(format_record_line(kReceipt, updated));
  it->second = std::move(updated);
}

std::vector<FileRecord> RecordStore::all() const {
  std::shared_lock lock(mu_);
  std::vector<FileRecord> out;
  out.reserve(order_.size());
  for (const auto& id : order_) out.push_back(index_.at(id));
  return out;
}

std::size_t RecordStore::size() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

void RecordStore::export_to(const fs::path& out) const {
  std::string text;
  for (const auto& r : all()) text += format_record_line(kPut, r);
  write_file_atomic(out, text);
}

}  // namespace sealstamp
