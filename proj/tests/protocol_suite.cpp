#include "protocol_suite.hpp"

#include <functional>
#include <sstream>

#include "sealstamp/error.hpp"
#include "sealstamp/provenance.hpp"

namespace testing {

namespace {

struct Recorder {
  std::vector<ProtocolCheck> checks;

  void run(const std::string& name, const std::function<void(std::string&)>& body) {
    ProtocolCheck c{name, true, ""};
    try {
      body(c.detail);
      c.ok = c.detail.empty();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    checks.push_back(std::move(c));
  }
};

void expect(bool cond, std::string& detail, const std::string& what) {
  if (!cond && detail.empty()) detail = what;
}

bool all_pass(const VerifyReport& r) {
  return r.ciphertext_check == CheckStatus::pass && r.anchor_check == CheckStatus::pass;
}

}  // namespace

std::vector<ProtocolCheck> run_protocol_suite(ProviderKind kind) {
  Recorder rec;
  std::mt19937_64 rng(2024);

  rec.run("immediate upload anchors and verifies", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    const auto f = s.upload("a", random_bytes(5000, rng));
    expect(!f.record.pending(), d, "record left pending");
    const auto r = s.engine->verify(f.record.file_id);
    expect(all_pass(r), d, "verify did not pass: " + r.anchor_diagnostic);
    expect(r.combined_hash_check == CheckStatus::unverifiable, d, "combined check without plaintext");
    expect(!r.plaintext_check.has_value(), d, "plaintext check present without plaintext");
  });

  rec.run("receipt resolves to the per-file combined hash", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    const auto f = s.upload("a", random_bytes(100, rng));
    const Digest h = combined_hash({f.record.digests()}).value;
    std::string why;
    const auto entry = s.provider->resolve(f.record.receipt->verification_link, &why);
    expect(entry.has_value(), d, "link did not resolve: " + why);
    if (entry) {
      expect(entry->digest == h, d, "resolved digest differs");
      expect(entry->timestamp_utc == f.record.receipt->timestamp_utc, d, "timestamp differs");
    }
    expect(f.record.receipt->anchored_digest == h, d, "anchored digest is not h");
  });

  rec.run("receipt rejects a different leaf and an unknown link", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    const auto f = s.upload("a", random_bytes(100, rng));
    expect(!verify_receipt(*s.provider, *f.record.receipt, random_digest(rng)), d, "wrong leaf accepted");
    AnchorReceipt forged = *f.record.receipt;
    forged.verification_link += "99";
    expect(!verify_receipt(*s.provider, forged, forged.anchored_digest), d, "unknown link accepted");
    AnchorReceipt other = *f.record.receipt;
    other.provider_id = "someone-else";
    expect(!verify_receipt(*s.provider, other, other.anchored_digest), d, "foreign provider id accepted");
    AnchorReceipt late = *f.record.receipt;
    late.timestamp_utc = "2099-01-01T00:00:00.000000Z";
    expect(!verify_receipt(*s.provider, late, late.anchored_digest), d, "altered timestamp accepted");
  });

  rec.run("verify with plaintext checks the whole combined hash", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    const Bytes content = random_bytes(7000, rng);
    const auto f = s.upload("a", content);
    std::istringstream good(std::string(content.begin(), content.end()));
    const auto r = s.engine->verify(f.record.file_id, &good);
    expect(r.plaintext_check == CheckStatus::pass, d, "plaintext check failed");
    expect(r.combined_hash_check == CheckStatus::pass, d, "combined hash check failed");
    std::istringstream bad("not the file");
    const auto r2 = s.engine->verify(f.record.file_id, &bad);
    expect(r2.plaintext_check == CheckStatus::fail, d, "wrong plaintext passed");
    expect(r2.combined_hash_check == CheckStatus::fail, d, "wrong plaintext combined hash passed");
    expect(r2.anchor_check == CheckStatus::pass, d, "anchor check depends on supplied plaintext");
  });

  rec.run("merkle batch: pending until flush, then every file verifies", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::merkle_batch);
    std::vector<std::string> ids;
    for (int i = 0; i < 7; ++i) ids.push_back(s.upload("f" + std::to_string(i), random_bytes(300 + i, rng)).record.file_id);
    for (const auto& id : ids)
      expect(s.engine->verify(id).anchor_check == CheckStatus::pending, d, "not pending before flush");
    const auto before = s.provider->submissions();
    const auto out = s.engine->flush_anchors();
    expect(out.flushed && out.files == 7, d, "flush did not cover 7 files");
    expect(s.provider->submissions() == before + 1, d, "batch should be one submission");
    for (const auto& id : ids) {
      const auto r = s.engine->verify(id);
      expect(all_pass(r), d, "file " + id + " failed after flush: " + r.anchor_diagnostic);
      expect(s.records->get(id).receipt->merkle.has_value(), d, "receipt has no merkle context");
    }
    expect(!s.engine->flush_anchors().flushed, d, "second flush anchored again");
  });

  rec.run("concat batch: every file verifies through the member list", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::concat_batch);
    std::vector<FileRecord> recs;
    for (int i = 0; i < 4; ++i) recs.push_back(s.upload("c" + std::to_string(i), random_bytes(90, rng)).record);
    const auto out = s.engine->flush_anchors();
    expect(out.flushed && out.files == 4, d, "flush did not cover 4 files");
    std::vector<DigestPair> pairs;
    for (const auto& r : recs) pairs.push_back(r.digests());
    expect(out.batch_receipt && out.batch_receipt->anchored_digest == combined_hash(pairs).value, d,
           "batch digest is not the concatenated combined hash");
    for (const auto& r : recs) {
      const auto v = s.engine->verify(r.file_id);
      expect(all_pass(v), d, "concat member failed: " + v.anchor_diagnostic);
    }
  });

  rec.run("outage leaves the file pending; flush after recovery anchors it", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    s.provider->set_offline(true);
    const auto f = s.upload("a", random_bytes(1000, rng));
    expect(f.record.pending(), d, "upload during outage was not pending");
    expect(s.engine->verify(f.record.file_id).anchor_check == CheckStatus::pending, d, "verify not pending");
    const auto failed = s.engine->flush_anchors();
    expect(failed.still_pending == 1, d, "flush during outage did not keep the file");
    s.provider->set_offline(false);
    const auto ok = s.engine->flush_anchors();
    expect(ok.flushed && ok.still_pending == 0, d, "flush after recovery did not anchor");
    expect(all_pass(s.engine->verify(f.record.file_id)), d, "file does not verify after recovery");
  });

  rec.run("batch outage keeps the whole batch queued", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::merkle_batch);
    const auto a = s.upload("a", random_bytes(10, rng));
    const auto b = s.upload("b", random_bytes(10, rng));
    s.provider->set_offline(true);
    const auto out = s.engine->flush_anchors();
    expect(!out.flushed && out.still_pending == 2, d, "outage flush lost items");
    s.provider->set_offline(false);
    expect(s.engine->flush_anchors().files == 2, d, "recovery flush did not anchor both");
    expect(all_pass(s.engine->verify(a.record.file_id)) && all_pass(s.engine->verify(b.record.file_id)), d,
           "batch files do not verify after recovery");
  });

  rec.run("tampered envelope fails ciphertext and anchor checks", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    const auto f = s.upload("a", random_bytes(4096, rng));
    flip_file_bit(s.repo->path_of(f.record.file_id), 8 * 100 + 3);
    const auto r = s.engine->verify(f.record.file_id);
    expect(r.ciphertext_check == CheckStatus::fail, d, "ciphertext check passed");
    expect(r.anchor_check == CheckStatus::fail, d, "anchor check passed");
  });

  rec.run("receipts survive a restart", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::merkle_batch);
    const auto f = s.upload("a", random_bytes(64, rng));
    s.reopen();
    expect(s.anchorer->is_queued(f.record.file_id), d, "queue lost across restart");
    s.engine->flush_anchors();
    s.reopen();
    const auto r = s.engine->verify(f.record.file_id);
    expect(all_pass(r), d, "verify failed after restart: " + r.anchor_diagnostic);
  });

  rec.run("downloads are independent of the provider", [&](std::string& d) {
    TempDir tmp;
    Stack s(tmp.path(), kind, AnchorMode::immediate);
    const Bytes content = random_bytes(200000, rng);
    const auto f = s.upload("a", content, "secret", true);
    expect(s.engine->download_with_password(f.record.file_id, Password("secret")) == content, d,
           "password download differs");
    expect(s.engine->download_with_shares(f.record.file_id, f.shares->q, f.shares->r) == content, d,
           "share download differs");
  });

  return rec.checks;
}

}  // namespace testing
