#pragma once

#include <stdexcept>
#include <string>

namespace tsgs {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorKind {
  parameter,          // bad argument to a constructor or operation
  contract,           // caller broke a documented precondition
  configuration,      // inconsistent or unusable configuration
  load,               // dataset validation / missing files
  corruption,         // malformed binary or text container
  numerical,          // NaN/Inf detected during optimization
  io,                 // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error parameter_error(const std::string& m) { return Error(ErrorKind::parameter, m); }
inline Error contract_violation(const std::string& m) { return Error(ErrorKind::contract, m); }
inline Error config_error(const std::string& m) { return Error(ErrorKind::configuration, m); }
inline Error load_error(const std::string& m) { return Error(ErrorKind::load, m); }
inline Error corruption_error(const std::string& m) { return Error(ErrorKind::corruption, m); }
inline Error io_error(const std::string& m) { return Error(ErrorKind::io, m); }

}  // namespace tsgs
