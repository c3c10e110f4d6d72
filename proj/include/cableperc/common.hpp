#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cableperc {

using u8 = std::uint8_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i8 = std::int8_t;
using i32 = std::int32_t;
using i64 = std::int64_t;

inline constexpr int kMaxDim = 7;

/// Error categories, mapped 1:1 onto CLI exit codes.
enum class ErrorKind {
  validation = 2,   // bad arguments / config / preconditions
  strict_check = 3, // a strict numeric identity failed
  resource = 4,     // memory or size budget exceeded
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline void require(bool ok, const std::string& msg,
                    ErrorKind kind = ErrorKind::validation) {
  if (!ok) throw Error(kind, msg);
}

}  // namespace cableperc
