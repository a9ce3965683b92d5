// Copyright 2026 The GridTouch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace gridtouch {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure (missing file, unwritable path, short write).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Mismatched tensor / image dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain of a function (e.g. chromaticity of black).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (ranges, counts).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridtouch
