#pragma once

#include <stdexcept>
#include <string>

namespace sp3 {

// Base of every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define SP3_DEFINE_ERROR(Name)                                                 \
  struct Name : Error {                                                        \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {}      \
  }

SP3_DEFINE_ERROR(InvalidParameter);
SP3_DEFINE_ERROR(NonPositiveConductivity);
SP3_DEFINE_ERROR(DegenerateOpacity);
SP3_DEFINE_ERROR(DegenerateBox);
SP3_DEFINE_ERROR(MeshFormatError);
SP3_DEFINE_ERROR(UnsupportedDegree);
SP3_DEFINE_ERROR(UnsupportedExactness);
SP3_DEFINE_ERROR(PointOutsideMesh);
SP3_DEFINE_ERROR(SingularMass);
SP3_DEFINE_ERROR(SingularSystem);
SP3_DEFINE_ERROR(MaxIterationsExceeded);
SP3_DEFINE_ERROR(NonlinearDivergence);
SP3_DEFINE_ERROR(MissingSecondDerivatives);
SP3_DEFINE_ERROR(MissingReference);
SP3_DEFINE_ERROR(NonPositiveError);

#undef SP3_DEFINE_ERROR

}  // namespace sp3
