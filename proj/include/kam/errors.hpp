#pragma once

#include <stdexcept>
#include <string>

namespace kam {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// series_algebra
struct DimensionMismatch : Error { using Error::Error; };
struct CompositionOverflow : Error { using Error::Error; };

// diophantine
struct ZeroMode : Error { using Error::Error; };
struct Resonant : Error { using Error::Error; };

// kolmogorov_step
struct ResonantMode : Error { using Error::Error; };
struct ShiftConditionFailed : Error { using Error::Error; };
struct ShiftDiverged : Error { using Error::Error; };
struct InversionDiverged : Error { using Error::Error; };
struct InjectivityFailed : Error { using Error::Error; };
struct DomainCollapsed : Error { using Error::Error; };

// driver / verifier
struct NotEnoughData : Error { using Error::Error; };
struct IntegrationFailed : Error { using Error::Error; };
struct OracleDiverged : Error { using Error::Error; };

// cli
struct ConfigError : Error { using Error::Error; };

// Raised when the initial applicability gates reject a run; carries the
// name of the first failed condition.
struct NotApplicable : Error {
  std::string condition;
  NotApplicable(const std::string& msg, std::string cond)
      : Error(msg), condition(std::move(cond)) {}
};

}  // namespace kam
