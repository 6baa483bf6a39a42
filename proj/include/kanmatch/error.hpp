// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <stdexcept>
#include <string>

namespace kanmatch
{

/// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A numeric input is outside the operation's domain (non-finite values,
/// coordinates outside the image).
class DomainError : public Error
{
public:
    using Error::Error;
};

/// A caller violated a precondition: mismatched dimensions, empty inputs,
/// invalid configuration values.
class ContractError : public Error
{
public:
    using Error::Error;
};

/// A solver could not produce a result (singular system, divergence).
class SolverError : public Error
{
public:
    using Error::Error;
};

/// A serialized file has the wrong magic, version, or is truncated.
class FormatError : public Error
{
public:
    using Error::Error;
};

/// A file could not be opened, read, or written.
class IoError : public Error
{
public:
    using Error::Error;
};

} // namespace kanmatch
