#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <string_view>

namespace fwuav {

/// 64-bit FNV-1a accumulator over the exact bytes of the values fed to it.
class Fnv1a {
 public:
  Fnv1a& add_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 1099511628211ULL;
    }
    return *this;
  }
  Fnv1a& add(double v) { return add_bytes(&v, sizeof v); }
  Fnv1a& add(std::int64_t v) { return add_bytes(&v, sizeof v); }
  Fnv1a& add(int v) { return add(static_cast<std::int64_t>(v)); }
  Fnv1a& add(std::string_view s) {
    add(static_cast<std::int64_t>(s.size()));
    return add_bytes(s.data(), s.size());
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

}  // namespace fwuav
