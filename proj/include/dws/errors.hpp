#pragma once

#include <stdexcept>
#include <string>

namespace dws {

// Every failure raised by the library derives from dws::Error so callers can
// catch one type; the subclasses name the contract that was broken.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DWS_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

DWS_DEFINE_ERROR(ShapeError);
DWS_DEFINE_ERROR(UsageError);
DWS_DEFINE_ERROR(NumericError);
DWS_DEFINE_ERROR(ParameterError);
DWS_DEFINE_ERROR(OrderingError);
DWS_DEFINE_ERROR(AvailabilityError);
DWS_DEFINE_ERROR(ContractError);
DWS_DEFINE_ERROR(CapabilityError);
DWS_DEFINE_ERROR(ModelError);
DWS_DEFINE_ERROR(DataError);
DWS_DEFINE_ERROR(InsufficientDataError);
DWS_DEFINE_ERROR(ParseError);
DWS_DEFINE_ERROR(ValidationError);
DWS_DEFINE_ERROR(CompatibilityError);
DWS_DEFINE_ERROR(RunError);

#undef DWS_DEFINE_ERROR

}  // namespace dws
