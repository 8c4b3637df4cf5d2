// Copyright 2026 The sais Authors
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

#ifndef SAIS_ERROR_HPP_
#define SAIS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace sais {

/// Base class for all library errors. `kind()` is a stable machine-readable
/// tag used by the CLI for exit codes and --json-errors output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

/// Invalid geometry (degenerate box, non-finite coordinate).
class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& msg) : Error("invalid-geometry", msg) {}
};

/// Mismatched dimensions between paired grids/vectors.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

/// Malformed input text (JSON syntax and schema violations).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};

/// Well-formed input violating a documented invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

/// Serialized data whose internal consistency checks fail (e.g. RLE counts).
class CorruptDataError : public Error {
 public:
  explicit CorruptDataError(const std::string& msg) : Error("corrupt-data", msg) {}
};

/// Bad module configuration (level ranges, model shapes, eval thresholds).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

/// Operation applied outside its mathematical domain.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error("domain", msg) {}
};

/// Internal invariant failure; never expected on valid inputs.
class InternalError : public Error {
 public:
  explicit InternalError(const std::string& msg) : Error("internal", msg) {}
};

}  // namespace sais

#endif  // SAIS_ERROR_HPP_
