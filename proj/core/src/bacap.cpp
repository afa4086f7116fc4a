#include "funion/bacap.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

namespace funion::bacap {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw BacapError("libsodium initialization failed");
    });
}

std::array<std::uint8_t, 8> be64(std::uint64_t v) {
    std::array<std::uint8_t, 8> out{};
    for (int i = 7; i >= 0; --i) {
        out[i] = static_cast<std::uint8_t>(v & 0xff);
        v >>= 8;
    }
    return out;
}

// Keyed BLAKE2b with a domain-separation label.
void kdf(std::span<const std::uint8_t> key, std::string_view label,
         std::span<const std::uint8_t> data, std::span<std::uint8_t> out) {
    crypto_generichash_state st;
    crypto_generichash_init(&st, key.data(), key.size(), out.size());
    crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(label.data()),
                              label.size());
    crypto_generichash_update(&st, data.data(), data.size());
    crypto_generichash_final(&st, out.data(), out.size());
}

bool scalar_is_zero(const Scalar& s) {
    std::uint8_t acc = 0;
    for (auto b : s) acc |= b;
    return acc == 0;
}

// 512-bit KDF output reduced mod l; zero outputs re-derived with a retry
// counter appended.
Scalar derive_scalar(std::span<const std::uint8_t> key, std::string_view label,
                     std::span<const std::uint8_t> data) {
    for (std::uint8_t retry = 0;; ++retry) {
        Bytes msg(data.begin(), data.end());
        if (retry > 0) msg.push_back(retry);
        std::array<std::uint8_t, 64> wide{};
        kdf(key, label, msg, wide);
        Scalar s{};
        crypto_core_ed25519_scalar_reduce(s.data(), wide.data());
        if (!scalar_is_zero(s)) return s;
        if (retry == 255) throw BacapError("scalar derivation exhausted retries");
    }
}

std::span<const std::uint8_t> as_span(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

BoxKeys derive_box_common(const GroupElement& root_public, const Hash32& chain_seed,
                          std::uint64_t index, std::string_view ctx,
                          const Scalar* root_secret) {
    ensure_sodium();
    if (index == 0) throw DomainError("box index must be >= 1");
    if (ctx.empty()) throw DomainError("ctx must be non-empty");

    ChainState state{chain_seed, 0};
    ChainOutput out{};
    for (std::uint64_t i = 0; i < index; ++i) out = advance_chain(state);

    BoxKeys keys{};
    keys.blind = derive_scalar(out.blind, "funion.bacap.box.k", as_span(ctx));
    kdf(out.enc_key, "funion.bacap.box.e", as_span(ctx), keys.enc_key);
    kdf(out.enc_key, "funion.bacap.box.n", as_span(ctx), keys.nonce);

    if (root_secret != nullptr) {
        Scalar signing{};
        crypto_core_ed25519_scalar_mul(signing.data(), root_secret->data(), keys.blind.data());
        keys.signing_secret = signing;
        if (crypto_scalarmult_ed25519_base_noclamp(keys.box_id.data(), signing.data()) != 0)
            throw BacapError("degenerate signing scalar");
    } else {
        if (crypto_scalarmult_ed25519_noclamp(keys.box_id.data(), keys.blind.data(),
                                              root_public.data()) != 0)
            throw BacapError("invalid root public key");
    }
    return keys;
}

}  // namespace

std::pair<WriteCapability, ReadCapability> generate_capability(
        std::span<const std::uint8_t> seed) {
    ensure_sodium();
    if (seed.size() < kSeedBytes) throw DomainError("capability seed needs >= 64 bytes");

    WriteCapability w{};
    w.root_secret = derive_scalar(seed, "funion.bacap.root.s", {});
    kdf(seed, "funion.bacap.root.h", {}, w.chain_seed);
    if (crypto_scalarmult_ed25519_base_noclamp(w.root_public.data(), w.root_secret.data()) != 0)
        throw BacapError("degenerate root scalar");

    ReadCapability r{w.root_public, w.chain_seed};
    return {w, r};
}

ChainOutput advance_chain(ChainState& state) {
    ensure_sodium();
    const std::uint64_t next_index = state.index + 1;
    const auto idx = be64(next_index);

    ChainOutput out{};
    kdf(state.value, "funion.bacap.chain.h", idx, out.chain_value);
    kdf(state.value, "funion.bacap.chain.e", idx, out.enc_key);
    kdf(state.value, "funion.bacap.chain.n", idx, out.nonce);
    out.blind = derive_scalar(state.value, "funion.bacap.chain.k", idx);

    state.value = out.chain_value;
    state.index = next_index;
    return out;
}

BoxKeys derive_box(const ReadCapability& cap, std::uint64_t index, std::string_view ctx) {
    return derive_box_common(cap.root_public, cap.chain_seed, index, ctx, nullptr);
}

BoxKeys derive_box(const WriteCapability& cap, std::uint64_t index, std::string_view ctx) {
    return derive_box_common(cap.root_public, cap.chain_seed, index, ctx, &cap.root_secret);
}

Signature sign_with_scalar(const Scalar& secret, const GroupElement& pub,
                           std::span<const std::uint8_t> msg) {
    ensure_sodium();
    static constexpr std::string_view kNonceLabel = "funion.bacap.sig.nonce";

    // Deterministic per-signature nonce from (secret || message).
    std::array<std::uint8_t, 64> wide{};
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    crypto_hash_sha512_update(&st, reinterpret_cast<const unsigned char*>(kNonceLabel.data()),
                              kNonceLabel.size());
    crypto_hash_sha512_update(&st, secret.data(), secret.size());
    crypto_hash_sha512_update(&st, msg.data(), msg.size());
    crypto_hash_sha512_final(&st, wide.data());
    Scalar r{};
    crypto_core_ed25519_scalar_reduce(r.data(), wide.data());

    GroupElement commitment{};
    if (crypto_scalarmult_ed25519_base_noclamp(commitment.data(), r.data()) != 0)
        throw BacapError("degenerate signature nonce");

    // Standard Ed25519 challenge: SHA-512(R || A || m) mod l.
    crypto_hash_sha512_init(&st);
    crypto_hash_sha512_update(&st, commitment.data(), commitment.size());
    crypto_hash_sha512_update(&st, pub.data(), pub.size());
    crypto_hash_sha512_update(&st, msg.data(), msg.size());
    crypto_hash_sha512_final(&st, wide.data());
    Scalar challenge{};
    crypto_core_ed25519_scalar_reduce(challenge.data(), wide.data());

    Scalar s{};
    crypto_core_ed25519_scalar_mul(s.data(), challenge.data(), secret.data());
    crypto_core_ed25519_scalar_add(s.data(), s.data(), r.data());

    Signature sig{};
    std::memcpy(sig.data(), commitment.data(), 32);
    std::memcpy(sig.data() + 32, s.data(), 32);
    return sig;
}

BoxRecord seal(const WriteCapability& cap, std::uint64_t index, std::string_view ctx,
               std::span<const std::uint8_t> plaintext) {
    if (plaintext.size() > kMaxPlaintext) throw SizeError("plaintext exceeds box capacity");
    const BoxKeys keys = derive_box(cap, index, ctx);

    BoxRecord record{};
    record.box_id = keys.box_id;
    record.ciphertext.resize(plaintext.size() + kAeadTagBytes);
    unsigned long long clen = 0;
    crypto_aead_chacha20poly1305_ietf_encrypt(record.ciphertext.data(), &clen, plaintext.data(),
                                              plaintext.size(), nullptr, 0, nullptr,
                                              keys.nonce.data(), keys.enc_key.data());
    record.ciphertext.resize(clen);
    record.sig = sign_with_scalar(*keys.signing_secret, keys.box_id, record.ciphertext);
    return record;
}

Bytes open_record(const ReadCapability& cap, std::uint64_t index, std::string_view ctx,
                  const BoxRecord& record) {
    const BoxKeys keys = derive_box(cap, index, ctx);
    if (record.box_id != keys.box_id) throw WrongBoxError("Box-ID does not match derivation");
    if (!verify_record(record)) throw BadSignatureError("signature check failed");
    if (record.ciphertext.size() < kAeadTagBytes) throw DecryptError("ciphertext too short");

    Bytes plain(record.ciphertext.size() - kAeadTagBytes);
    unsigned long long plen = 0;
    if (crypto_aead_chacha20poly1305_ietf_decrypt(plain.data(), &plen, nullptr,
                                                  record.ciphertext.data(),
                                                  record.ciphertext.size(), nullptr, 0,
                                                  keys.nonce.data(), keys.enc_key.data()) != 0)
        throw DecryptError("authenticated decryption failed");
    plain.resize(plen);
    return plain;
}

bool verify_record(const BoxRecord& record) {
    ensure_sodium();
    return crypto_sign_ed25519_verify_detached(record.sig.data(), record.ciphertext.data(),
                                               record.ciphertext.size(),
                                               record.box_id.data()) == 0;
}

Bytes encode_record(const BoxRecord& record) {
    Bytes out;
    out.reserve(32 + 64 + 4 + record.ciphertext.size());
    out.insert(out.end(), record.box_id.begin(), record.box_id.end());
    out.insert(out.end(), record.sig.begin(), record.sig.end());
    const auto len = static_cast<std::uint32_t>(record.ciphertext.size());
    for (int i = 24; i >= 0; i -= 8) out.push_back(static_cast<std::uint8_t>(len >> i));
    out.insert(out.end(), record.ciphertext.begin(), record.ciphertext.end());
    return out;
}

BoxRecord decode_record(std::span<const std::uint8_t> wire) {
    if (wire.size() < 32 + 64 + 4) throw DomainError("record wire too short");
    BoxRecord record{};
    std::memcpy(record.box_id.data(), wire.data(), 32);
    std::memcpy(record.sig.data(), wire.data() + 32, 64);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | wire[96 + i];
    if (wire.size() != 100u + len) throw DomainError("record wire length mismatch");
    record.ciphertext.assign(wire.begin() + 100, wire.end());
    return record;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw DomainError("odd hex length");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw DomainError("bad hex digit");
    };
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    return out;
}

}  // namespace funion::bacap
