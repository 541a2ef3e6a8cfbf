// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zoomsplat {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
  public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
  public:
    using Error::Error;
};

/// Layer ownership or lifecycle precondition violated.
class OwnershipError : public Error {
  public:
    using Error::Error;
};

class RoiUndefined : public Error {
  public:
    using Error::Error;
};

class UndefinedMetric : public Error {
  public:
    using Error::Error;
};

/// An internal invariant that must be unreachable did not hold.
class InvariantViolation : public Error {
  public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
  public:
    NonFiniteLoss(const std::string &what, std::size_t iteration)
        : Error(what), iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

  private:
    std::size_t iteration_;
};

// Super-resolution transport failures.
class TransportError : public Error {
  public:
    using Error::Error;
};

class ProtocolError : public Error {
  public:
    using Error::Error;
};

class ContractViolation : public Error {
  public:
    using Error::Error;
};

/// File load failure. `index` names the first offending primitive when
/// the problem is per-record, otherwise it is npos.
class LoadError : public Error {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    explicit LoadError(const std::string &what, std::size_t index = npos)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

  private:
    std::size_t index_;
};

} // namespace zoomsplat
