#pragma once

#include <stdexcept>
#include <string>

namespace csem {

/// Base class for all csem errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ram-core
struct SingularStructure : Error { using Error::Error; };
struct RankDeficientConstraints : Error { using Error::Error; };
struct DivisionByZero : Error { using Error::Error; };
struct SingularBlock : Error { using Error::Error; };

// composite builders
struct FreeWeightsUnsupported : Error { using Error::Error; };
struct FreeWeightsOnOutcome : Error { using Error::Error; };
struct ZeroPseudoWeight : Error { using Error::Error; };
struct ZeroWeight : Error { using Error::Error; };
struct IsolatedComposite : Error { using Error::Error; };
struct UnsupportedFixedValues : Error { using Error::Error; };

// estimator
struct NonPDImplied : Error { using Error::Error; };
struct NotConverged : Error { using Error::Error; };
struct SingularInformation : Error { using Error::Error; };
struct UndefinedAtOptimum : Error { using Error::Error; };

// fit metrics
struct NegativeDF : Error { using Error::Error; };
struct ZeroVariance : Error { using Error::Error; };

// population generator
struct NotPositiveDefinite : Error { using Error::Error; };

// data ingestion
struct MissingColumn : Error { using Error::Error; };
struct TooFewRows : Error { using Error::Error; };
struct NonNumericCell : Error { using Error::Error; };

}  // namespace csem
