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

// Criteria 1-9, compiled without any LM backend header.

#ifdef GFLOWPO_WITH_LMCLIENT
#error "the core acceptance binary must build without the LM backend"
#endif

#include <iostream>

#include "gflowpo/selftest.hpp"

int main() {
  bool ok = true;
  for (const auto& r : gflowpo::selftest::run_core_criteria()) {
    std::cout << gflowpo::selftest::format_line(r) << std::endl;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}
