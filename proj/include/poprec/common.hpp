// Copyright 2026 The poprec Authors. All Rights Reserved.
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

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace poprec {

// Error categories map one-to-one onto CLI exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

using Rng = std::mt19937_64;

// Named, independent random sub-streams derived from one root seed, so that
// e.g. dropout masks can be reproduced without replaying negative sampling.
Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

std::uint64_t splitmix64(std::uint64_t x);

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::string& path);

// Writes "poprec: warning: <msg>" to stderr.
void warn(std::string_view msg);

// Build identification baked in at configure time.
std::string_view git_describe();

}  // namespace poprec
