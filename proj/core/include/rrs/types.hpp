#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rrs {

using UserId = std::uint32_t;

// The two parties of the market. Lists for side A users hold B-side ids and
// vice versa.
enum class Side : std::uint8_t { A, B };

constexpr Side opposite(Side s) noexcept { return s == Side::A ? Side::B : Side::A; }
constexpr std::string_view to_string(Side s) noexcept { return s == Side::A ? "A" : "B"; }

// An (A-user, B-user) pair, always stored in that orientation.
struct Pair {
  UserId a = 0;
  UserId b = 0;

  friend constexpr auto operator<=>(const Pair&, const Pair&) = default;
};

struct PairHash {
  std::size_t operator()(const Pair& p) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.a) << 32) | p.b);
  }
};

// Error hierarchy. The CLI maps ConfigError/UsageError to exit code 2 and
// everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace rrs
