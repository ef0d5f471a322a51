#pragma once

#include <stdexcept>
#include <string>

namespace leap {

// Domain error with a stable machine-readable code. The CLI maps these to
// error JSON + exit 1; anything else is a usage or internal error.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

#define LEAP_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                       \
  public:                                                           \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}    \
  }

LEAP_DEFINE_ERROR(UnreachableStance);
LEAP_DEFINE_ERROR(OutOfBounds);
LEAP_DEFINE_ERROR(DegenerateFit);
LEAP_DEFINE_ERROR(DimensionMismatch);
LEAP_DEFINE_ERROR(BadInitialState);
LEAP_DEFINE_ERROR(SingleClassData);
LEAP_DEFINE_ERROR(NotInside);
LEAP_DEFINE_ERROR(EmptyFeasibleSet);
LEAP_DEFINE_ERROR(NoPathFound);
LEAP_DEFINE_ERROR(StartInCollision);
LEAP_DEFINE_ERROR(GoalInCollision);
LEAP_DEFINE_ERROR(TubeTooNarrow);
LEAP_DEFINE_ERROR(PlanningFailed);
LEAP_DEFINE_ERROR(BadInput);

#undef LEAP_DEFINE_ERROR

}  // namespace leap
