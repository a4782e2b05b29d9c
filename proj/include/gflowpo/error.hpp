// Copyright 2026 The gflowpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace gflowpo {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GFLOWPO_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

GFLOWPO_DEFINE_ERROR(EmptyBuffer)
GFLOWPO_DEFINE_ERROR(EmptyBatch)
GFLOWPO_DEFINE_ERROR(LengthMismatch)
GFLOWPO_DEFINE_ERROR(InvalidToken)
GFLOWPO_DEFINE_ERROR(TooLarge)
GFLOWPO_DEFINE_ERROR(NonPositiveCount)
GFLOWPO_DEFINE_ERROR(SupportMismatch)
GFLOWPO_DEFINE_ERROR(ConfigError)
GFLOWPO_DEFINE_ERROR(MissingArtifacts)
GFLOWPO_DEFINE_ERROR(ParseError)

#undef GFLOWPO_DEFINE_ERROR

}  // namespace gflowpo
