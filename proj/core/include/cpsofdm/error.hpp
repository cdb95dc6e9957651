#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpsofdm {

enum class ErrorKind {
  kInvalidDimension,
  kInvalidArgument,
  kInvalidConfig,
  kSingularPrecoder,
  kSingularMatrix,
  kNotRankOne,
  kInfeasible,
  kNumeric,
  kConvergence,
  kResource,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Configuration problems map to CLI exit code 2, numeric ones to 3.
  bool is_config_error() const noexcept {
    return kind_ == ErrorKind::kInvalidConfig || kind_ == ErrorKind::kInvalidArgument ||
           kind_ == ErrorKind::kInvalidDimension || kind_ == ErrorKind::kIo;
  }

 private:
  ErrorKind kind_;
};

class SingularPrecoderError : public Error {
 public:
  SingularPrecoderError(std::size_t index, const std::string& what)
      : Error(ErrorKind::kSingularPrecoder, what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class NotRankOneError : public Error {
 public:
  NotRankOneError(double ratio, const std::string& what)
      : Error(ErrorKind::kNotRankOne, what), ratio_(ratio) {}
  double ratio() const noexcept { return ratio_; }

 private:
  double ratio_;
};

[[noreturn]] void throw_error(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw_error(kind, what);
}

}  // namespace cpsofdm
