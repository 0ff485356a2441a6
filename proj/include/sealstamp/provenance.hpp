#pragma once

// Timestampable artifacts built from per-file digest pairs.
//
// Combined hash over pairs (Hm_1, Hc_1), ..., (Hm_n, Hc_n):
//   H( hex(Hm_1) "||" hex(Hc_1) "||" hex(Hm_2) "||" ... "||" hex(Hc_n) )
// with lowercase hex and the two ASCII bytes "||" between every digest.
//
// Merkle tree: leaf node = H(0x00 || leaf), internal node =
// H(0x01 || left || right); an unpaired node is promoted unchanged.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sealstamp/crypto_core.hpp"

namespace sealstamp {

struct DigestPair {
  Digest plaintext;
  Digest ciphertext;

  friend bool operator==(const DigestPair&, const DigestPair&) = default;
};

struct CombinedHash {
  Digest value;
  std::vector<DigestPair> parts;
};

inline constexpr std::string_view kCombinedHashDelimiter = "||";

/// The exact ASCII string that gets hashed; exposed for hand audits.
std::string combined_hash_preimage(const std::vector<DigestPair>& pairs);

/// Throws Error{validation} on an empty list.
CombinedHash combined_hash(std::vector<DigestPair> pairs);

/// Human-readable recipe for recomputing a combined hash by hand.
std::string combined_hash_recipe();

enum class Side : char { left = 'L', right = 'R' };

struct ProofStep {
  Digest sibling;
  Side side;  // where the sibling sits relative to the running node

  friend bool operator==(const ProofStep&, const ProofStep&) = default;
};

struct MerkleProof {
  std::size_t leaf_index = 0;
  std::vector<ProofStep> siblings;

  friend bool operator==(const MerkleProof&, const MerkleProof&) = default;

  /// Canonical text: first line "index <n>", then one "<hex> L|R" line per
  /// sibling, bottom-up. Each line ends with '\n'.
  std::string to_text() const;
  static MerkleProof from_text(std::string_view text);
};

Digest merkle_leaf_node(const Digest& leaf);
Digest merkle_internal_node(const Digest& left, const Digest& right);

class MerkleTree {
 public:
  /// Throws Error{validation} on an empty leaf list.
  static MerkleTree build(std::vector<Digest> leaves);

  const std::vector<Digest>& leaves() const { return leaves_; }
  /// levels()[0] are the leaf nodes; levels().back() holds only the root.
  const std::vector<std::vector<Digest>>& levels() const { return levels_; }
  const Digest& root() const { return levels_.back().front(); }

  /// Throws Error{validation} if leaf_index is out of range.
  MerkleProof prove(std::size_t leaf_index) const;

 private:
  std::vector<Digest> leaves_;
  std::vector<std::vector<Digest>> levels_;
};

inline MerkleTree merkle_build(std::vector<Digest> leaves) {
  return MerkleTree::build(std::move(leaves));
}
inline MerkleProof merkle_prove(const MerkleTree& tree, std::size_t leaf_index) {
  return tree.prove(leaf_index);
}
bool merkle_verify(const Digest& leaf, const MerkleProof& proof, const Digest& root);

}  // namespace sealstamp
