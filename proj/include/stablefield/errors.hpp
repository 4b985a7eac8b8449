#pragma once

#include <stdexcept>

// Typed failure modes thrown by the library. Catch sites that need to
// distinguish causes (CLI exit codes, tests) match on these; everything
// derives from std::runtime_error so generic handlers still work.

namespace stablefield {

#define STABLEFIELD_DEFINE_ERROR(NAME)                    \
  struct NAME : std::runtime_error {                      \
    using std::runtime_error::runtime_error;              \
  }

STABLEFIELD_DEFINE_ERROR(InvalidAlpha);
STABLEFIELD_DEFINE_ERROR(InvalidMomentOrder);
STABLEFIELD_DEFINE_ERROR(UnsupportedSkew);
STABLEFIELD_DEFINE_ERROR(DegenerateSample);
STABLEFIELD_DEFINE_ERROR(DimensionMismatch);
STABLEFIELD_DEFINE_ERROR(ZeroScale);
STABLEFIELD_DEFINE_ERROR(NotIsotropic);
STABLEFIELD_DEFINE_ERROR(EmptyComposite);
STABLEFIELD_DEFINE_ERROR(SingularSystem);
STABLEFIELD_DEFINE_ERROR(NotPSD);
STABLEFIELD_DEFINE_ERROR(SingularProblem);
STABLEFIELD_DEFINE_ERROR(NonConvergence);
STABLEFIELD_DEFINE_ERROR(ZeroCovariationVector);
STABLEFIELD_DEFINE_ERROR(ConfigError);
STABLEFIELD_DEFINE_ERROR(IoError);

#undef STABLEFIELD_DEFINE_ERROR

}  // namespace stablefield
