#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace hpt {

/// Broad failure category; the CLI maps each category onto a stable exit code.
enum class ErrorKind {
  dimension,
  domain,
  contract,
  config,
  data,
  io,
  format,
  numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define HPT_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(Kind, what) {}      \
  };

HPT_DEFINE_ERROR(DimensionError, ErrorKind::dimension)
HPT_DEFINE_ERROR(DomainError, ErrorKind::domain)
HPT_DEFINE_ERROR(ContractError, ErrorKind::contract)
HPT_DEFINE_ERROR(ConfigError, ErrorKind::config)
HPT_DEFINE_ERROR(DataError, ErrorKind::data)
HPT_DEFINE_ERROR(IoError, ErrorKind::io)
HPT_DEFINE_ERROR(FormatError, ErrorKind::format)
HPT_DEFINE_ERROR(NumericalError, ErrorKind::numerical)

#undef HPT_DEFINE_ERROR

namespace detail {

template <class... Args>
std::string concat(Args&&... args) {
  std::ostringstream out;
  (out << ... << std::forward<Args>(args));
  return out.str();
}

}  // namespace detail

/// Exit code contract of the command line tool.
inline int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::format:
      return 3;
    case ErrorKind::numerical:
      return 4;
    default:
      return 2;
  }
}

}  // namespace hpt
