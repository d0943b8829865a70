#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace fairscreen {

/// Incremental FNV-1a (64-bit) over a caller-defined canonical byte stream.
/// Used for config and cohort content digests embedded in provenance and in
/// report headers, so every published table names the inputs it came from.
class Digest {
 public:
  Digest& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 1099511628211ULL;
    }
    return *this;
  }

  Digest& str(std::string_view s) {
    u64(s.size());
    return bytes(s.data(), s.size());
  }

  Digest& u64(std::uint64_t v) { return bytes(&v, sizeof(v)); }

  Digest& i64(std::int64_t v) { return bytes(&v, sizeof(v)); }

  /// Hashes the exact bit pattern, so digests are stable under round-trips.
  Digest& f64(double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    return u64(bits);
  }

  std::uint64_t value() const { return hash_; }

  static std::string hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

  std::string hex() const { return hex(hash_); }

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  return Digest{}.str(s).value();
}

}  // namespace fairscreen
