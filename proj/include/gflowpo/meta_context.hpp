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

#include <string>
#include <vector>

namespace gflowpo {

/// One displayed input/output pair of the meta-prompt.
struct Shot {
  std::string input;
  std::string output;

  bool operator==(const Shot&) const = default;
};

/**
 * The meta-prompt M: a fixed instruction template, k frozen shots, and the
 * reference set Z_ref that the dynamic memory update rewrites.
 */
template <typename Ref>
struct MetaContext {
  std::string instruction_template_id = "friend-instruction";
  std::vector<Shot> shots;
  std::vector<Ref> reference_set;

  bool operator==(const MetaContext&) const = default;
};

}  // namespace gflowpo
