#pragma once

#include <stdexcept>
#include <string>

namespace rdlt {

/// Bad argument, shape mismatch or out-of-domain value.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Rank deficiency detected while orthonormalizing.
class SingularMatrixError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Eigen/SVD non-convergence or non-finite intermediate values.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File could not be read, written or parsed. Message carries the path.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File format version differs from the one this build understands.
class VersionMismatch : public IoError {
public:
  VersionMismatch(const std::string& what, unsigned found, unsigned expected)
      : IoError(what + ": found version " + std::to_string(found) + ", expected version " +
                std::to_string(expected)),
        found_(found), expected_(expected) {}
  unsigned found() const { return found_; }
  unsigned expected() const { return expected_; }

private:
  unsigned found_;
  unsigned expected_;
};

/// Corrupt or truncated bitstream.
class DecodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Two RD curves share no PSNR or rate interval.
class NoOverlapError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define RDLT_CHECK_ARG(cond, msg)                                                                  \
  do {                                                                                             \
    if (!(cond)) throw ::rdlt::InvalidArgument(msg);                                               \
  } while (0)

} // namespace rdlt
