#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace xfb {

// Error taxonomy shared by all modules. Each type corresponds to one
// documented failure mode of the public API; callers can catch the base
// xfb::Error or the concrete type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define XFB_DEFINE_ERROR(Name)                   \
  struct Name : Error {                          \
    using Error::Error;                          \
  }

// stages
XFB_DEFINE_ERROR(EmptyAfterFilter);
XFB_DEFINE_ERROR(NoSleepPeriod);
XFB_DEFINE_ERROR(EmptyInput);

// synthgen
XFB_DEFINE_ERROR(InvalidParams);
XFB_DEFINE_ERROR(TooFewSubjects);
XFB_DEFINE_ERROR(IoError);
XFB_DEFINE_ERROR(FormatError);

// signals
XFB_DEFINE_ERROR(InvalidRate);
XFB_DEFINE_ERROR(RateTooLow);

// scorer
XFB_DEFINE_ERROR(EmptySet);
XFB_DEFINE_ERROR(NonFiniteLoss);
XFB_DEFINE_ERROR(IncompatibleInputSpec);

// metrics
XFB_DEFINE_ERROR(LengthMismatch);
XFB_DEFINE_ERROR(EmptyMatrix);

// plan
XFB_DEFINE_ERROR(EmptyUniverse);

// transferscore
XFB_DEFINE_ERROR(DivisionByZero);
XFB_DEFINE_ERROR(NotAntisymmetric);
XFB_DEFINE_ERROR(NonPositiveEntry);

// ledger / study
XFB_DEFINE_ERROR(DuplicateRecord);

#undef XFB_DEFINE_ERROR

// Carries the full list of record keys that a computation required but the
// ledger did not contain.
struct MissingRecord : Error {
  explicit MissingRecord(std::string msg, std::vector<std::string> missing = {})
      : Error(std::move(msg)), keys(std::move(missing)) {}
  std::vector<std::string> keys;
};

}  // namespace xfb
