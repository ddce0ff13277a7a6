#pragma once

#include <stdexcept>

namespace ruio {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

/// A pivot fell below the singularity threshold during elimination.
struct SingularMatrix : Error {
  using Error::Error;
};

/// Input lacks the full column rank required by the operation.
struct RankDeficient : Error {
  using Error::Error;
};

/// An iterative kernel hit its sweep/iteration cap.
struct NoConvergence : Error {
  using Error::Error;
};

/// rank(CD) != rank(D): no decoupling observer exists for this plant.
struct RankCondition : Error {
  using Error::Error;
};

/// The supplied gain does not make the observer dynamics Hurwitz.
struct NotStabilizing : Error {
  using Error::Error;
};

/// A feasibility problem came back empty or a certificate failed validation.
struct Infeasible : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace ruio
