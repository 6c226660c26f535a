#pragma once

#include <stdexcept>
#include <string>

namespace scenopt {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A transition matrix row or an initial distribution does not sum to one,
/// or carries a negative entry.
struct NonStochasticMatrix : Error {
  using Error::Error;
};

/// A stage index lies outside [0, num_stages].
struct StageOutOfRange : Error {
  using Error::Error;
};

/// Matrix or vector dimensions are inconsistent with the instance.
struct DimensionMismatch : Error {
  using Error::Error;
};

/// A nonsmooth block spec names a kind the routine cannot handle.
struct UnsupportedSpec : Error {
  using Error::Error;
};

/// An eliminated input Hessian is not positive definite (min eigenvalue
/// below 1e-10), so the backward factorization cannot proceed.
struct NotStronglyConvex : Error {
  using Error::Error;
};

/// The problem's node count or dimensions changed since the cache was built.
struct ShapeChanged : Error {
  using Error::Error;
};

/// A factor cache is used with a problem it was not built from.
struct CacheMismatch : Error {
  using Error::Error;
};

/// The FBE line search could not find an admissible step above 2^-60.
struct LineSearchStalled : Error {
  using Error::Error;
};

/// Backtracking drove the dual step below 1e-14.
struct StepUnderflow : Error {
  using Error::Error;
};

/// A node or block probability is zero or negative where positive mass is
/// required.
struct ZeroProbability : Error {
  using Error::Error;
};

/// A configuration or generator parameter is out of its documented range.
struct InvalidParams : Error {
  using Error::Error;
};

/// g* evaluated to +inf where a finite value is required.
struct InfiniteConjugate : Error {
  using Error::Error;
};

/// A problem file is malformed or describes an invalid instance. The
/// message carries every violation found, one per line.
struct ParseError : Error {
  using Error::Error;
};

}  // namespace scenopt
