// Copyright 2026 The maskdet Authors. All Rights Reserved.
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

#ifndef MASKDET_ERRORS_H_
#define MASKDET_ERRORS_H_

#include <stdexcept>
#include <string>

namespace maskdet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-range hyper-parameters (dropout rate, scale factor, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, augmenting a test split, ...
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed caller-provided data (non one-hot targets, empty images, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid model / run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File decoding failures: PPM, checkpoints, cascades, manifests.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A metric whose denominator is structurally zero (e.g. accuracy of nothing).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskdet

#endif  // MASKDET_ERRORS_H_
