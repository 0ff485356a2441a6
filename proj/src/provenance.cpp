#include "sealstamp/provenance.hpp"

#include <charconv>
#include <sstream>

#include "sealstamp/error.hpp"

namespace sealstamp {

std::string combined_hash_preimage(const std::vector<DigestPair>& pairs) {
  std::string out;
  out.reserve(pairs.size() * (4 * kDigestSize + 2 * kCombinedHashDelimiter.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i > 0) out += kCombinedHashDelimiter;
    out += pairs[i].plaintext.hex();
    out += kCombinedHashDelimiter;
    out += pairs[i].ciphertext.hex();
  }
  return out;
}

CombinedHash combined_hash(std::vector<DigestPair> pairs) {
  if (pairs.empty()) fail(ErrorCode::validation, "combined hash needs at least one digest pair");
  CombinedHash result;
  result.value = hash_bytes(as_bytes(combined_hash_preimage(pairs)));
  result.parts = std::move(pairs);
  return result;
}

std::string combined_hash_recipe() {
  return "h = SHA-512( hex(H(m_1)) + \"||\" + hex(H(c_1)) + \"||\" + ... + hex(H(c_n)) )\n"
         "    digests rendered as 128 lowercase hex chars, joined by the 2 ASCII bytes \"||\"\n"
         "    single file: h = SHA-512( hex(H(m)) + \"||\" + hex(H(c)) )\n";
}

Digest merkle_leaf_node(const Digest& leaf) {
  Sha512 h;
  const std::uint8_t prefix = 0x00;
  h.update({&prefix, 1});
  h.update(leaf.bytes);
  return h.finish();
}

Digest merkle_internal_node(const Digest& left, const Digest& right) {
  Sha512 h;
  const std::uint8_t prefix = 0x01;
  h.update({&prefix, 1});
  h.update(left.bytes);
  h.update(right.bytes);
  return h.finish();
}

MerkleTree MerkleTree::build(std::vector<Digest> leaves) {
  if (leaves.empty()) fail(ErrorCode::validation, "merkle tree needs at least one leaf");
  MerkleTree tree;
  tree.leaves_ = std::move(leaves);
  std::vector<Digest> level;
  level.reserve(tree.leaves_.size());
  for (const Digest& leaf : tree.leaves_) level.push_back(merkle_leaf_node(leaf));
  tree.levels_.push_back(std::move(level));
  while (tree.levels_.back().size() > 1) {
    const auto& below = tree.levels_.back();
    std::vector<Digest> above;
    above.reserve((below.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < below.size(); i += 2)
      above.push_back(merkle_internal_node(below[i], below[i + 1]));
    if (below.size() % 2 == 1) above.push_back(below.back());
    tree.levels_.push_back(std::move(above));
  }
  return tree;
}

MerkleProof MerkleTree::prove(std::size_t leaf_index) const {
  if (leaf_index >= leaves_.size()) fail(ErrorCode::validation, "leaf index out of range");
  MerkleProof proof;
  proof.leaf_index = leaf_index;
  std::size_t index = leaf_index;
  for (std::size_t depth = 0; depth + 1 < levels_.size(); ++depth) {
    const auto& level = levels_[depth];
    if (index % 2 == 1) {
      proof.siblings.push_back({level[index - 1], Side::left});
    } else if (index + 1 < level.size()) {
      proof.siblings.push_back({level[index + 1], Side::right});
    }
    // else: promoted, no sibling at this level
    index /= 2;
  }
  return proof;
}

bool merkle_verify(const Digest& leaf, const MerkleProof& proof, const Digest& root) {
  Digest node = merkle_leaf_node(leaf);
  for (const ProofStep& step : proof.siblings) {
    node = step.side == Side::left ? merkle_internal_node(step.sibling, node)
                                   : merkle_internal_node(node, step.sibling);
  }
  return node == root;
}

std::string MerkleProof::to_text() const {
  std::string out = "index " + std::to_string(leaf_index) + "\n";
  for (const ProofStep& step : siblings) {
    out += step.sibling.hex();
    out += ' ';
    out += static_cast<char>(step.side);
    out += '\n';
  }
  return out;
}

MerkleProof MerkleProof::from_text(std::string_view text) {
  MerkleProof proof;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("index "))
    fail(ErrorCode::format, "merkle proof must start with an index line");
  const std::string_view idx = std::string_view(line).substr(6);
  auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), proof.leaf_index);
  if (ec != std::errc{} || ptr != idx.data() + idx.size())
    fail(ErrorCode::format, "bad merkle proof index");
  while (std::getline(in, line)) {
    if (line.size() != 2 * kDigestSize + 2 || line[2 * kDigestSize] != ' ')
      fail(ErrorCode::format, "bad merkle proof line");
    const char side = line.back();
    if (side != 'L' && side != 'R') fail(ErrorCode::format, "bad merkle proof side");
    proof.siblings.push_back({Digest::from_hex(std::string_view(line).substr(0, 2 * kDigestSize)),
                              static_cast<Side>(side)});
  }
  return proof;
}

}  // namespace sealstamp
