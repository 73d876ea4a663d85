/**
 * Copyright 2026 The iptdet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace iptdet {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV row, JSON, config syntax).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input that parses but does not fit the dataset schema (e.g. unknown technique).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Value outside its permitted range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Shape or precondition violation at an API boundary.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Encoder backend unavailable or its checkpoint is unusable.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and dataset disagree (class map, pitch range).
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace iptdet
