// Copyright 2026 the pimann authors
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

namespace pimann {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kParameter,   // a precondition on a numeric argument was violated
  kConfig,      // unknown key, malformed value, inconsistent run configuration
  kFormat,      // file content does not follow the documented layout
  kIo,          // open/read/write failure or truncated input
  kDegenerate,  // zero-norm row, zero residual, ...
  kKernel,      // fixed-point scale cannot be represented
  kContract,    // objects built against different references were mixed
  kCorruption,  // index invariants broken (checksum, duplicate ids)
  kPlacement,   // clusters do not fit on the simulated PUs
  kRouting,     // a record targets a cluster with no PU
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define PIMANN_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(Kind, what) {}    \
  }

PIMANN_DEFINE_ERROR(ParameterError, ErrorKind::kParameter);
PIMANN_DEFINE_ERROR(ConfigError, ErrorKind::kConfig);
PIMANN_DEFINE_ERROR(FormatError, ErrorKind::kFormat);
PIMANN_DEFINE_ERROR(IoError, ErrorKind::kIo);
PIMANN_DEFINE_ERROR(DegenerateInputError, ErrorKind::kDegenerate);
PIMANN_DEFINE_ERROR(KernelError, ErrorKind::kKernel);
PIMANN_DEFINE_ERROR(ContractError, ErrorKind::kContract);
PIMANN_DEFINE_ERROR(CorruptionError, ErrorKind::kCorruption);
PIMANN_DEFINE_ERROR(PlacementError, ErrorKind::kPlacement);
PIMANN_DEFINE_ERROR(RoutingError, ErrorKind::kRouting);

#undef PIMANN_DEFINE_ERROR

}  // namespace pimann
