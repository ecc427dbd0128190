#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pper {

// Parties of the three-party protocol. P1/P2 own data, P3 evaluates.
enum class PartyId { P1, P2, P3 };

std::string to_string(PartyId p);
PartyId party_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Error taxonomy. Everything fails loudly; no silent wrap-around anywhere.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& msg) : std::runtime_error("protocol: " + msg) {}
};

struct AuthorizationError : std::runtime_error {
  explicit AuthorizationError(const std::string& msg)
      : std::runtime_error("authorization: " + msg) {}
};

struct RangeError : std::runtime_error {
  explicit RangeError(const std::string& msg) : std::runtime_error("range: " + msg) {}
};

struct DataFault : std::runtime_error {
  explicit DataFault(const std::string& msg) : std::runtime_error("data: " + msg) {}
};

// Raised when a multiplication chain would exceed the level budget.
struct DepthBudgetError : std::runtime_error {
  DepthBudgetError(const std::string& site_, int consumed_, int budget_)
      : std::runtime_error("depth budget exceeded at " + site_ + ": consumed " +
                           std::to_string(consumed_) + ", budget " + std::to_string(budget_)),
        site(site_),
        consumed(consumed_),
        budget(budget_) {}
  std::string site;
  int consumed;
  int budget;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. A single root seed fans out into named substreams
// so results are reproducible under any scheduling.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

class SeedStream {
 public:
  explicit SeedStream(std::uint64_t root) : state_(splitmix64(root)) {}

  SeedStream sub(std::string_view name) const { return SeedStream(state_ ^ fnv1a64(name)); }
  SeedStream sub(std::uint64_t idx) const { return SeedStream(hash_mix(state_, idx)); }

  std::uint64_t value() const { return state_; }
  std::mt19937_64 engine() const { return std::mt19937_64(state_); }

  // Cheap counter-based uniform draw in [0, 1); avoids engine seeding cost in
  // hot paths while staying deterministic per (stream, index).
  double uniform01(std::uint64_t i) const {
    return static_cast<double>(splitmix64(state_ ^ splitmix64(i)) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace pper
