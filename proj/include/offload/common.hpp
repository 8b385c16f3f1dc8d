#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace offload {

using NodeId = std::uint32_t;
using Seconds = double;
using Rng = std::mt19937_64;

inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// Raised when a configuration or input file violates its documented contract.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed trace or config files. Carries the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A caller broke a precondition (e.g. injecting a node that already holds the content).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// splitmix64 finalizer. Used to fan a master seed out to independent streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of run `run` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run, std::uint64_t stream = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(run + 1)) + stream);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace offload
