/* Copyright 2026 The zsplat Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ZSPLAT_ERRORS_HPP
#define ZSPLAT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zsplat {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf appeared where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid caller-supplied data (empty sets, non-positive depths, bad shapes).
class InputError : public Error {
public:
    using Error::Error;
};

/// A value falls outside its representable range (Morton coordinates, bit depths).
class RangeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (unknown keys, select_k out of range, width mismatch).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A Gaussian primitive violates its invariants.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A checkpoint does not match the configuration it is loaded against.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. `offset()` is the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// The file declares a dtype this library does not read.
class UnsupportedDtypeError : public FormatError {
public:
    UnsupportedDtypeError(const std::string& dtype, std::size_t offset)
        : FormatError("unsupported dtype '" + dtype + "'", offset) {}
};

}  // namespace zsplat

#endif  // ZSPLAT_ERRORS_HPP
