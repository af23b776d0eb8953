#pragma once

#include <stdexcept>
#include <string>

namespace stnet {

// Error classes mirror the process exit codes: 1 usage, 2 data, 3 numeric.
enum class ErrorClass { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& msg) : std::runtime_error(msg), cls_(cls) {}
  ErrorClass cls() const { return cls_; }

 private:
  ErrorClass cls_;
};

[[noreturn]] inline void usage_error(const std::string& msg) { throw Error(ErrorClass::Usage, msg); }
[[noreturn]] inline void data_error(const std::string& msg) { throw Error(ErrorClass::Data, msg); }
[[noreturn]] inline void numeric_error(const std::string& msg) { throw Error(ErrorClass::Numeric, msg); }

}  // namespace stnet
