#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Blinding-and-capability chain: one 256-bit seed yields an unbounded
// sequence of pseudorandom storage locations (Box-IDs) together with the
// per-box encryption and signing keys. Write authority (create + sign) and
// read authority (enumerate + decrypt + verify) are held by separate
// capability values derived from the same root.

namespace funion::bacap {

using Bytes = std::vector<std::uint8_t>;
using Hash32 = std::array<std::uint8_t, 32>;
using Scalar = std::array<std::uint8_t, 32>;        // little-endian, < group order
using GroupElement = std::array<std::uint8_t, 32>;  // compressed Ed25519 point
using Nonce = std::array<std::uint8_t, 12>;
using Signature = std::array<std::uint8_t, 64>;

// Context strings separating the input and output box streams of one job.
inline constexpr std::string_view kCtxIn = "funion/ctx-in/v1";
inline constexpr std::string_view kCtxOut = "funion/ctx-out/v1";

inline constexpr std::size_t kSeedBytes = 64;  // 512 bits of entropy required
inline constexpr std::size_t kMaxPlaintext = 30'000;
inline constexpr std::size_t kAeadTagBytes = 16;
inline constexpr std::size_t kRecordOverhead = 32 + 64 + 4 + kAeadTagBytes;

struct BacapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : BacapError {
    using BacapError::BacapError;
};
struct SizeError : BacapError {
    using BacapError::BacapError;
};
// open_record failure cases, in check order.
struct WrongBoxError : BacapError {
    using BacapError::BacapError;
};
struct BadSignatureError : BacapError {
    using BacapError::BacapError;
};
struct DecryptError : BacapError {
    using BacapError::BacapError;
};

struct WriteCapability {
    Scalar root_secret;         // S_R
    GroupElement root_public;   // P_R = B * S_R (kept for convenience)
    Hash32 chain_seed;          // H_0
};

struct ReadCapability {
    GroupElement root_public;   // P_R
    Hash32 chain_seed;          // H_0
};

// Hash-chain position. index 0 is the seed itself; boxes start at index 1.
struct ChainState {
    Hash32 value;
    std::uint64_t index = 0;
};

// One chain advance: the next chain value plus the per-index raw keys.
struct ChainOutput {
    Hash32 chain_value;  // H_i
    Hash32 enc_key;      // E_i
    Scalar blind;        // K_i, nonzero scalar mod l
    Nonce nonce;         // N_i
};

struct BoxKeys {
    GroupElement box_id;  // M = P_R * K_ctx
    Hash32 enc_key;       // E_ctx
    Nonce nonce;
    Scalar blind;         // K_ctx
    std::optional<Scalar> signing_secret;  // S_ctx, write derivations only
};

// The stored unit: (Box-ID, authenticated ciphertext, signature). The Box-ID
// doubles as the signature verification key.
struct BoxRecord {
    GroupElement box_id;
    Bytes ciphertext;
    Signature sig;
};

std::pair<WriteCapability, ReadCapability> generate_capability(std::span<const std::uint8_t> seed);

// Advances the chain in place and returns the index-i key material.
ChainOutput advance_chain(ChainState& state);

BoxKeys derive_box(const ReadCapability& cap, std::uint64_t index, std::string_view ctx);
BoxKeys derive_box(const WriteCapability& cap, std::uint64_t index, std::string_view ctx);

BoxRecord seal(const WriteCapability& cap, std::uint64_t index, std::string_view ctx,
               std::span<const std::uint8_t> plaintext);

// Checks, in order: Box-ID match (WrongBoxError), signature (BadSignatureError),
// authenticated decryption (DecryptError).
Bytes open_record(const ReadCapability& cap, std::uint64_t index, std::string_view ctx,
                  const BoxRecord& record);

// Replica-side gate: signature over c under the key implicit in M. Needs no
// capability. Malformed point encodings yield false, never throw.
bool verify_record(const BoxRecord& record);

// Wire form: M (32) || s (64) || be32 ciphertext length || c.
Bytes encode_record(const BoxRecord& record);
BoxRecord decode_record(std::span<const std::uint8_t> wire);

// Schnorr-style signature with a raw scalar secret; verification is stock
// Ed25519 under `pub`. Exposed for tests.
Signature sign_with_scalar(const Scalar& secret, const GroupElement& pub,
                           std::span<const std::uint8_t> msg);

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

}  // namespace funion::bacap
