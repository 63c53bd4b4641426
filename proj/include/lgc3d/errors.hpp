#pragma once

#include <stdexcept>
#include <string>

namespace lgc3d {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/axis mismatches. Messages name the offending axis.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error("value: " + msg) {}
};

// Invalid model/patch configuration detected before any data flows.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

class FreezeError : public Error {
 public:
  explicit FreezeError(const std::string& msg) : Error("freeze: " + msg) {}
};

class CompileError : public Error {
 public:
  explicit CompileError(const std::string& msg) : Error("compile: " + msg) {}
};

class IoError : public Error {
 public:
  enum class Kind { bad_magic, bad_version, dim_overflow, truncated, parse, not_found, write };

  IoError(Kind kind, const std::string& msg)
      : Error(std::string("io: ") + kind_name(kind) + ": " + msg), kind_(kind) {}
  Kind kind() const { return kind_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::bad_magic: return "bad_magic";
      case Kind::bad_version: return "bad_version";
      case Kind::dim_overflow: return "dim_overflow";
      case Kind::truncated: return "truncated";
      case Kind::parse: return "parse";
      case Kind::not_found: return "not_found";
      case Kind::write: return "write";
    }
    return "unknown";
  }

 private:
  Kind kind_;
};

}  // namespace lgc3d
