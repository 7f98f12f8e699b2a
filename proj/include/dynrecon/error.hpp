#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dynrecon {

enum class ErrorCategory {
  kInput,       // malformed or inconsistent input data
  kConstraint,  // a constraint set that admits no feasible point
  kInfeasible,  // an instance that is ill-posed as a whole (e.g. one video)
  kNumerical,   // degenerate geometry or a singular system
  kIo,          // unreadable / unwritable files
};

std::string_view CategoryName(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

#define DYNRECON_CHECK(cond, category, msg)             \
  do {                                                  \
    if (!(cond)) throw ::dynrecon::Error((category), (msg)); \
  } while (false)

}  // namespace dynrecon
