#include <random>

#include "doctest.h"
#include "oracle/reference.hpp"
#include "sealstamp/error.hpp"
#include "sealstamp/provenance.hpp"
#include "support.hpp"

using namespace sealstamp;
using testing::random_digest;

namespace {

std::array<std::uint8_t, 64> raw(const Digest& d) {
  std::array<std::uint8_t, 64> out{};
  std::copy(d.bytes.begin(), d.bytes.end(), out.begin());
  return out;
}

}  // namespace

TEST_CASE("combined hash equals the reference over the hex || hex string") {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 60; ++i) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<DigestPair> pairs;
    std::vector<std::string> hexes;
    for (std::size_t j = 0; j < n; ++j) {
      pairs.push_back({random_digest(rng), random_digest(rng)});
      hexes.push_back(pairs.back().plaintext.hex());
      hexes.push_back(pairs.back().ciphertext.hex());
    }
    CHECK(combined_hash(pairs).value.hex() == oracle::combined_hash_hex(hexes));
    CHECK(combined_hash_preimage(pairs).size() == 2 * n * 128 + (2 * n - 1) * 2);
  }
}

TEST_CASE("combined hash preimage is the documented text") {
  std::mt19937_64 rng(11);
  const DigestPair p{random_digest(rng), random_digest(rng)};
  CHECK(combined_hash_preimage({p}) == p.plaintext.hex() + "||" + p.ciphertext.hex());
  CHECK(combined_hash({p}).parts.size() == 1);
}

TEST_CASE("combined hash is order sensitive and rejects empty input") {
  std::mt19937_64 rng(12);
  const DigestPair a{random_digest(rng), random_digest(rng)};
  const DigestPair b{random_digest(rng), random_digest(rng)};
  CHECK_FALSE(combined_hash({a, b}).value == combined_hash({b, a}).value);
  CHECK_FALSE(combined_hash({a}).value == combined_hash({{a.ciphertext, a.plaintext}}).value);
  CHECK_THROWS_AS(combined_hash({}), Error);
}

TEST_CASE("merkle root equals the brute-force oracle for 1..16 leaves") {
  std::mt19937_64 rng(13);
  for (std::size_t n = 1; n <= 16; ++n) {
    std::vector<Digest> leaves;
    std::vector<std::array<std::uint8_t, 64>> raw_leaves;
    for (std::size_t i = 0; i < n; ++i) {
      leaves.push_back(random_digest(rng));
      raw_leaves.push_back(raw(leaves.back()));
    }
    const MerkleTree tree = merkle_build(leaves);
    CAPTURE(n);
    CHECK(tree.root().hex() == oracle::hex(oracle::merkle_root(raw_leaves)));
    for (std::size_t i = 0; i < n; ++i) {
      const MerkleProof proof = merkle_prove(tree, i);
      CHECK(proof.leaf_index == i);
      CHECK(merkle_verify(leaves[i], proof, tree.root()));
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) CHECK_FALSE(merkle_verify(leaves[j], proof, tree.root()));
    }
  }
}

TEST_CASE("mutated proofs never verify") {
  std::mt19937_64 rng(14);
  for (std::size_t n = 2; n <= 16; ++n) {
    std::vector<Digest> leaves;
    for (std::size_t i = 0; i < n; ++i) leaves.push_back(random_digest(rng));
    const MerkleTree tree = merkle_build(leaves);
    for (std::size_t i = 0; i < n; ++i) {
      const MerkleProof proof = tree.prove(i);
      for (std::size_t s = 0; s < proof.siblings.size(); ++s) {
        MerkleProof flipped_side = proof;
        flipped_side.siblings[s].side = proof.siblings[s].side == Side::left ? Side::right : Side::left;
        CHECK_FALSE(merkle_verify(leaves[i], flipped_side, tree.root()));
        MerkleProof bad_sibling = proof;
        bad_sibling.siblings[s].sibling.bytes[rng() % 64] ^= 0x10;
        CHECK_FALSE(merkle_verify(leaves[i], bad_sibling, tree.root()));
        MerkleProof dropped = proof;
        dropped.siblings.erase(dropped.siblings.begin() + static_cast<std::ptrdiff_t>(s));
        CHECK_FALSE(merkle_verify(leaves[i], dropped, tree.root()));
      }
      Digest bad_root = tree.root();
      bad_root.bytes[0] ^= 1;
      CHECK_FALSE(merkle_verify(leaves[i], proof, bad_root));
    }
  }
}

TEST_CASE("domain separation: an internal node is not accepted as a leaf") {
  std::mt19937_64 rng(15);
  const std::vector<Digest> leaves{random_digest(rng), random_digest(rng), random_digest(rng), random_digest(rng)};
  const MerkleTree tree = merkle_build(leaves);
  const Digest left_subtree = tree.levels()[1][0];
  MerkleProof short_proof;
  short_proof.leaf_index = 0;
  short_proof.siblings = {tree.prove(0).siblings.back()};
  CHECK_FALSE(merkle_verify(left_subtree, short_proof, tree.root()));
  CHECK_FALSE(merkle_leaf_node(leaves[0]) == hash_bytes(leaves[0].bytes));
}

TEST_CASE("single-leaf tree: root is the leaf node, proof is empty") {
  std::mt19937_64 rng(16);
  const Digest leaf = random_digest(rng);
  const MerkleTree tree = merkle_build({leaf});
  CHECK(tree.root() == merkle_leaf_node(leaf));
  CHECK(tree.prove(0).siblings.empty());
  CHECK(merkle_verify(leaf, tree.prove(0), tree.root()));
}

TEST_CASE("merkle build/prove reject bad input") {
  CHECK_THROWS_AS(merkle_build({}), Error);
  std::mt19937_64 rng(17);
  const MerkleTree tree = merkle_build({random_digest(rng), random_digest(rng)});
  CHECK_THROWS_AS(tree.prove(2), Error);
}

TEST_CASE("proof text round trip") {
  std::mt19937_64 rng(18);
  std::vector<Digest> leaves;
  for (int i = 0; i < 11; ++i) leaves.push_back(random_digest(rng));
  const MerkleTree tree = merkle_build(leaves);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const MerkleProof p = tree.prove(i);
    const std::string text = p.to_text();
    CHECK(text.starts_with("index " + std::to_string(i) + "\n"));
    CHECK(MerkleProof::from_text(text) == p);
  }
  CHECK_THROWS_AS(MerkleProof::from_text("index x\n"), Error);
  CHECK_THROWS_AS(MerkleProof::from_text("index 0\nabcd L\n"), Error);
  CHECK_THROWS_AS(MerkleProof::from_text("index 0\n" + std::string(128, 'a') + " X\n"), Error);
}
