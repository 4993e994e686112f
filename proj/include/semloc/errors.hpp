#pragma once

#include <stdexcept>
#include <string>

namespace semloc {

/** \brief Base class of every error raised by the library. */
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/** \brief log_se3 was asked for a rotation within 1e-6 rad of pi. */
class NearPiRotation : public Error {
 public:
  using Error::Error;
};

/** \brief A point lies at or behind the camera near plane. */
class BehindCamera : public Error {
 public:
  using Error::Error;
};

class HorizontalLine : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnknownLandmark : public Error {
 public:
  using Error::Error;
};

/** \brief Normal equations too ill-conditioned to solve (unobservable setup). */
class SingularNormalEquations : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

}  // namespace semloc
