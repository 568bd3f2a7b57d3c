#pragma once

#include <stdexcept>
#include <string>

namespace bandgauge {

// Bad input: malformed file, wrong dimensions, violated precondition.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: NaN loss, non-finite samples, solver breakdown.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail_input(const std::string& what) { throw InputError(what); }
[[noreturn]] inline void fail_numeric(const std::string& what) { throw NumericError(what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail_input(what);
}

}  // namespace bandgauge
