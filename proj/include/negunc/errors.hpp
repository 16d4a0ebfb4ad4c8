/* Copyright 2026 The negunc Authors. All Rights Reserved.

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

// Error types shared across the library. Validation errors signal bad
// caller input (CLI exit code 1); everything else is a runtime failure.

#ifndef NEGUNC_ERRORS_HPP_
#define NEGUNC_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace negunc {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file record could not be parsed. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A record parsed but violates the schema (missing field, bad label, ...).
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace negunc

#endif  // NEGUNC_ERRORS_HPP_
