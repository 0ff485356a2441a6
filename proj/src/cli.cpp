#include "sealstamp/cli.hpp"

#include <sys/stat.h>
#include <termios.h>
#include <unistd.h>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sealstamp/bench.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/mock_servers.hpp"
#include "sealstamp/provenance.hpp"
#include "sealstamp/service.hpp"
#include "sealstamp/util.hpp"

namespace sealstamp {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::authentication || code == ErrorCode::integrity ? kExitIntegrity
                                                                            : kExitOperational;
}

namespace {

constexpr const char* kPasswordEnv = "SEALSTAMP_PASSWORD";

// Hides typed characters while reading from an interactive terminal.
class EchoOff {
 public:
  explicit EchoOff(bool active) {
    if (!active || ::tcgetattr(STDIN_FILENO, &saved_) != 0) return;
    termios quiet = saved_;
    quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
    engaged_ = ::tcsetattr(STDIN_FILENO, TCSAFLUSH, &quiet) == 0;
  }
  ~EchoOff() {
    if (engaged_) ::tcsetattr(STDIN_FILENO, TCSAFLUSH, &saved_);
  }

 private:
  termios saved_{};
  bool engaged_ = false;
};

Password read_password(bool prompt, std::istream& in, std::ostream& err, const EnvLookup& env) {
  if (prompt) {
    err << "Password: " << std::flush;
    std::string line;
    {
      EchoOff guard(&in == &std::cin && ::isatty(STDIN_FILENO));
      std::getline(in, line);
    }
    if (&in == &std::cin && ::isatty(STDIN_FILENO)) err << '\n';
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) fail(ErrorCode::validation, "empty password");
    Password p(std::move(line));
    secure_wipe(std::span(reinterpret_cast<std::uint8_t*>(line.data()), line.size()));
    return p;
  }
  if (auto value = env(kPasswordEnv); value && !value->empty()) return Password(std::move(*value));
  fail(ErrorCode::validation, std::string("no password: pass --password-prompt or set ") + kPasswordEnv);
}

void write_private_file(const fs::path& path, const std::string& text) {
  write_file_atomic(path, text);
  ::chmod(path.c_str(), 0600);
}

// Share files hold "file_id<TAB>hex" lines, or a single bare hex line.
std::array<std::uint8_t, kKeySize> read_share(const fs::path& path, std::string_view file_id) {
  std::istringstream lines(read_file(path));
  std::string line;
  std::optional<std::string> bare;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ++count;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      bare = line;
      continue;
    }
    if (std::string_view(line).substr(0, tab) == file_id) {
      bare = line.substr(tab + 1);
      count = 1;
      break;
    }
  }
  if (!bare || count != 1) fail(ErrorCode::validation, "no share for " + std::string(file_id) + " in " + path.string());
  const Bytes raw = from_hex(*bare);
  if (raw.size() != kKeySize) fail(ErrorCode::validation, "share in " + path.string() + " is not 32 bytes");
  std::array<std::uint8_t, kKeySize> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

std::string receipt_cell(const FileRecord& r) {
  return r.receipt ? r.receipt->verification_link : "pending";
}

// ---- subcommands ---------------------------------------------------------------

struct Context {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  const EnvLookup& env;
  std::optional<fs::path> config_path;

  CliConfig config() const { return load_config(config_path, env); }
};

struct UploadArgs {
  std::string dataset;
  std::string title;
  std::vector<std::string> paths;
  bool password_prompt = false;
  bool escrow = false;
  std::string share_q;
  std::string share_r;
};

int cmd_upload(Context& ctx, const UploadArgs& a) {
  if (a.escrow) {
    if (a.share_q.empty() || a.share_r.empty())
      fail(ErrorCode::validation, "--escrow needs --share-q and --share-r");
    if (fs::weakly_canonical(a.share_q) == fs::weakly_canonical(a.share_r))
      fail(ErrorCode::validation, "--share-q and --share-r must be different paths");
  }
  const Password password = read_password(a.password_prompt, ctx.in, ctx.err, ctx.env);
  Runtime rt(ctx.config());
  std::vector<UploadInput> inputs;
  for (const auto& p : a.paths) inputs.push_back(UploadInput::from_file(p));
  const UploadResult result =
      rt.engine().upload({a.dataset, a.title.empty() ? a.dataset : a.title}, inputs, password, a.escrow);

  ctx.out << "file_id\tlabel\tsalt\tplaintext_sha512\tciphertext_sha512\treceipt\n";
  std::string q_text;
  std::string r_text;
  for (const auto& f : result.files) {
    ctx.out << f.record.file_id << '\t' << f.record.label << '\t' << f.record.kdf.salt.hex() << '\t'
            << f.record.plaintext_digest.hex() << '\t' << f.record.ciphertext_digest.hex() << '\t'
            << receipt_cell(f.record) << '\n';
    if (f.shares) {
      q_text += f.record.file_id + '\t' + to_hex(f.shares->q) + '\n';
      r_text += f.record.file_id + '\t' + to_hex(f.shares->r) + '\n';
    }
  }
  if (a.escrow && !result.files.empty()) {
    write_private_file(a.share_q, q_text);
    write_private_file(a.share_r, r_text);
    ctx.err << "shares written to " << a.share_q << " and " << a.share_r << '\n';
  }
  for (const auto& f : result.failures)
    ctx.err << "error\t" << f.label << '\t' << to_string(f.code) << '\t' << f.message << '\n';
  return result.ok() ? kExitOk : kExitOperational;
}

struct DownloadArgs {
  std::string file_id;
  std::string out;
  bool password_prompt = false;
  std::vector<std::string> shares;
};

int cmd_download(Context& ctx, const DownloadArgs& a) {
  Runtime rt(ctx.config());
  if (fs::exists(a.out)) fail(ErrorCode::validation, "refusing to overwrite " + a.out);
  if (!a.shares.empty()) {
    const auto q = read_share(a.shares.at(0), a.file_id);
    const auto r = read_share(a.shares.at(1), a.file_id);
    rt.engine().download_with_shares(a.file_id, q, r, a.out);
  } else {
    const Password password = read_password(a.password_prompt, ctx.in, ctx.err, ctx.env);
    rt.engine().download_with_password(a.file_id, password, a.out);
  }
  ctx.out << "wrote " << a.out << " (" << fs::file_size(a.out) << " bytes, digests verified)\n";
  return kExitOk;
}

int cmd_verify(Context& ctx, const std::string& file_id, const std::string& plaintext) {
  Runtime rt(ctx.config());
  const FileRecord record = rt.records().get(file_id);
  std::optional<std::ifstream> plain;
  if (!plaintext.empty()) {
    plain.emplace(plaintext, std::ios::binary);
    if (!*plain) fail(ErrorCode::io, "cannot read " + plaintext);
  }
  const VerifyReport rep = rt.engine().verify(file_id, plain ? &*plain : nullptr);
  auto& o = ctx.out;
  o << "file_id:             " << rep.file_id << '\n'
    << "label:               " << record.label << '\n'
    << "ciphertext_check:    " << to_string(rep.ciphertext_check) << '\n'
    << "anchor_check:        " << to_string(rep.anchor_check) << '\n'
    << "combined_hash_check: " << to_string(rep.combined_hash_check) << '\n'
    << "plaintext_check:     "
    << (rep.plaintext_check ? std::string(to_string(*rep.plaintext_check)) : "not supplied") << '\n'
    << "record H(m):         " << record.plaintext_digest.hex() << '\n'
    << "record H(c):         " << record.ciphertext_digest.hex() << '\n'
    << "recomputed H(c):     " << rep.recomputed_ciphertext_digest.hex() << '\n';
  if (rep.recomputed_plaintext_digest)
    o << "recomputed H(m):     " << rep.recomputed_plaintext_digest->hex() << '\n';
  o << "combined hash h:     " << rep.file_combined_hash.hex() << '\n';
  if (rep.receipt) {
    o << "anchor mode:         " << to_string(rep.receipt->mode) << '\n'
      << "provider:            " << rep.receipt->provider_id << '\n'
      << "verification link:   " << rep.receipt->verification_link << '\n'
      << "anchored digest:     " << rep.receipt->anchored_digest.hex() << '\n'
      << "anchored at:         " << rep.receipt->timestamp_utc << '\n';
    if (rep.receipt->merkle) {
      o << "merkle root:         " << rep.receipt->merkle->root.hex() << '\n'
        << "merkle proof:\n" << rep.receipt->merkle->proof.to_text();
    }
    if (rep.receipt->concat)
      o << "batch member:        " << rep.receipt->concat->member_index << " of "
        << rep.receipt->concat->members.size() << '\n';
  } else {
    o << "receipt:             pending\n";
  }
  if (!rep.anchor_diagnostic.empty()) o << "diagnostic:          " << rep.anchor_diagnostic << '\n';
  o << "recipe:\n" << combined_hash_recipe();
  if (rep.any_failure()) return kExitIntegrity;
  if (rep.anchor_pending()) return kExitPending;
  return kExitOk;
}

int cmd_audit(Context& ctx) {
  const CliConfig config = ctx.config();
  bool ok = true;
  std::vector<LedgerEntry> ledger_entries;
  if (!config.remote_anchor()) {
    const AuditResult audit = audit_ledger_file(config.ledger_path);
    if (audit) {
      ctx.out << "ledger: pass (" << audit.entries << " entries)\n";
    } else {
      ok = false;
      ctx.out << "ledger: FAIL at seq " << (audit.first_bad_seq ? std::to_string(*audit.first_bad_seq) : "?")
              << ": " << audit.diagnostic << '\n';
    }
  } else {
    ctx.out << "ledger: remote provider, chain audit not applicable\n";
  }

  std::unique_ptr<Runtime> rt;
  try {
    rt = std::make_unique<Runtime>(config);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::corruption) throw;
    ctx.out << "records: FAIL: " << e.what() << '\n';
    return kExitIntegrity;
  }

  std::size_t anchored = 0;
  std::size_t pending = 0;
  std::set<std::string> referenced;
  for (const FileRecord& r : rt->records().all()) {
    if (r.pending()) {
      ++pending;
      continue;
    }
    ++anchored;
    referenced.insert(r.receipt->verification_link);
    std::string why;
    if (!verify_receipt(rt->provider(), *r.receipt, combined_hash({r.digests()}).value, &why)) {
      ok = false;
      ctx.out << "records: FAIL " << r.file_id << ": receipt does not verify: " << why << '\n';
    }
  }
  if (LocalLedger* ledger = rt->local_ledger(); ledger && ledger->audit()) {
    for (const LedgerEntry& e : ledger->entries()) {
      if (!referenced.contains(LocalLedger::link_for(e.seq))) {
        ok = false;
        ctx.out << "records: FAIL ledger seq " << e.seq << " is not referenced by any record\n";
      }
    }
  }
  ctx.out << "records: " << anchored << " anchored, " << pending << " pending\n";
  ctx.out << (ok ? "audit: pass\n" : "audit: FAIL\n");
  return ok ? kExitOk : kExitIntegrity;
}

int cmd_flush(Context& ctx) {
  Runtime rt(ctx.config());
  const FlushOutcome o = rt.engine().flush_anchors();
  ctx.out << "flushed: " << (o.flushed ? "yes" : "no") << '\n'
          << "files:   " << o.files << '\n';
  if (o.batch_receipt) ctx.out << "link:    " << o.batch_receipt->verification_link << '\n';
  if (!o.diagnostic.empty()) ctx.out << "note:    " << o.diagnostic << '\n';
  ctx.out << "pending: " << o.still_pending << '\n';
  return o.still_pending > 0 ? kExitPending : kExitOk;
}

int cmd_list(Context& ctx) {
  Runtime rt(ctx.config());
  ctx.out << "file_id\tlabel\tcreated_utc\tstate\treceipt\n";
  for (const auto& r : rt.records().all())
    ctx.out << r.file_id << '\t' << r.label << '\t' << r.created_utc << '\t'
            << (r.pending() ? "pending" : "anchored") << '\t' << receipt_cell(r) << '\n';
  return kExitOk;
}

int cmd_export(Context& ctx, const std::string& path) {
  Runtime rt(ctx.config());
  rt.records().export_to(path);
  ctx.out << "exported " << rt.records().size() << " records to " << path << '\n';
  return kExitOk;
}

struct BenchArgs {
  std::vector<std::string> sizes{"1MB", "10MB", "100MB"};
  std::string format = "both";
  int repeats = 3;
  std::string samples;
  std::uint32_t kdf_iterations = kDefaultKdfIterations;
  std::size_t concurrency = 1;
  std::uint64_t seed = 7;
};

int cmd_bench(Context& ctx, const BenchArgs& a) {
  std::vector<std::uint64_t> sizes;
  for (const auto& s : a.sizes) sizes.push_back(bench::parse_size(s));
  std::vector<bench::ContentKind> kinds;
  if (a.format == "both") kinds = {bench::ContentKind::tabular, bench::ContentKind::binary};
  else kinds = {bench::parse_content_kind(a.format)};
  bench::BenchOptions opts;
  opts.kdf_iterations = a.kdf_iterations;
  opts.upload_concurrency = a.concurrency;
  opts.seed = a.seed;
  const auto samples = bench::run_benchmark(sizes, kinds, a.repeats, opts);
  if (!a.samples.empty()) write_file_atomic(a.samples, bench::samples_csv(samples));
  ctx.out << bench::summary_csv(samples, sizes, kinds);
  return kExitOk;
}

int cmd_serve(Context& ctx, const std::string& host, int port) {
  Runtime rt(ctx.config());
  ServiceOptions opts;
  opts.write_token = rt.config().service_token;
  opts.batch_interval = std::chrono::seconds(rt.config().batch_interval_seconds);
  Service service(rt.engine(), opts);
  ctx.err << "serving on http://" << host << ':' << port << '\n';
  service.run(host, port);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Encrypted archival with verifiable timestamps", "sealstamp"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "Config file (key = value lines)");

  UploadArgs up;
  auto* upload = app.add_subcommand("upload", "Encrypt, store and anchor files");
  upload->add_option("dataset", up.dataset, "Dataset id")->required();
  upload->add_option("paths", up.paths, "Files to upload")->required();
  upload->add_option("--title", up.title, "Dataset title");
  upload->add_flag("--password-prompt", up.password_prompt, "Read the password from stdin");
  upload->add_flag("--escrow", up.escrow, "Split each file key into two shares");
  upload->add_option("--share-q", up.share_q, "Output path for the q shares");
  upload->add_option("--share-r", up.share_r, "Output path for the r shares");

  DownloadArgs down;
  auto* download = app.add_subcommand("download", "Decrypt a stored file after verifying it");
  download->add_option("file_id", down.file_id)->required();
  download->add_option("--out", down.out, "Output path")->required();
  auto* pw = download->add_flag("--password-prompt", down.password_prompt, "Read the password from stdin");
  download->add_option("--shares", down.shares, "q and r share files")->expected(2)->excludes(pw);

  std::string verify_id;
  std::string verify_plain;
  auto* verify = app.add_subcommand("verify", "Check a stored file against its record and anchor");
  verify->add_option("file_id", verify_id)->required();
  verify->add_option("--plaintext", verify_plain, "Original file, to check H(m) too");

  auto* audit = app.add_subcommand("audit", "Audit the ledger and cross-check every receipt");
  auto* flush = app.add_subcommand("flush", "Anchor everything queued now");
  auto* list = app.add_subcommand("list", "List file records");

  std::string export_path;
  auto* exp = app.add_subcommand("export", "Write a snapshot of the record store");
  exp->add_option("path", export_path)->required();

  BenchArgs ba;
  auto* benchcmd = app.add_subcommand("bench", "Upload benchmark with per-operation timings (CSV)");
  benchcmd->add_option("--sizes", ba.sizes, "Sizes, e.g. 1MB,10MB")->delimiter(',');
  benchcmd->add_option("--format", ba.format, "tabular, binary or both")
      ->check(CLI::IsMember({"tabular", "binary", "both"}));
  benchcmd->add_option("--repeats", ba.repeats)->check(CLI::PositiveNumber);
  benchcmd->add_option("--samples", ba.samples, "Also write raw samples CSV here");
  benchcmd->add_option("--kdf-iterations", ba.kdf_iterations)->check(CLI::PositiveNumber);
  benchcmd->add_option("--concurrency", ba.concurrency)->check(CLI::PositiveNumber);
  benchcmd->add_option("--seed", ba.seed);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  std::string mock_host = "127.0.0.1";
  int mock_port = 8081;
  auto* mock_anchor = app.add_subcommand("mock-anchor", "Run the mock timestamp server");
  mock_anchor->add_option("--host", mock_host);
  mock_anchor->add_option("--port", mock_port);

  std::string repo_root = "mock-repository";
  int repo_port = 8082;
  int ingest_ms = 0;
  std::string repo_token;
  auto* mock_repo = app.add_subcommand("mock-repository", "Run the mock repository server");
  mock_repo->add_option("--root", repo_root);
  mock_repo->add_option("--host", mock_host);
  mock_repo->add_option("--port", repo_port);
  mock_repo->add_option("--ingest-delay-ms", ingest_ms);
  mock_repo->add_option("--token", repo_token, "Require this bearer token");

  std::vector<std::string> argv_store{"sealstamp"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitOperational;
  }

  Context ctx{in, out, err, env, std::nullopt};
  if (!config_path.empty()) ctx.config_path = config_path;
  else if (auto from_env = env("SEALSTAMP_CONFIG")) ctx.config_path = *from_env;

  try {
    if (*upload) return cmd_upload(ctx, up);
    if (*download) return cmd_download(ctx, down);
    if (*verify) return cmd_verify(ctx, verify_id, verify_plain);
    if (*audit) return cmd_audit(ctx);
    if (*flush) return cmd_flush(ctx);
    if (*list) return cmd_list(ctx);
    if (*exp) return cmd_export(ctx, export_path);
    if (*benchcmd) return cmd_bench(ctx, ba);
    if (*serve) return cmd_serve(ctx, host, port);
    if (*mock_anchor) {
      MockAnchorServer server;
      err << "mock anchor on http://" << mock_host << ':' << mock_port << '\n';
      server.run(mock_host, mock_port);
      return kExitOk;
    }
    if (*mock_repo) {
      MockRepositoryOptions opts;
      opts.ingest_delay = std::chrono::milliseconds(ingest_ms);
      if (!repo_token.empty()) opts.required_token = repo_token;
      MockRepositoryServer server(repo_root, opts);
      err << "mock repository on http://" << mock_host << ':' << repo_port << '\n';
      server.run(mock_host, repo_port);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOperational;
  }
  return kExitOperational;
}

}  // namespace sealstamp
