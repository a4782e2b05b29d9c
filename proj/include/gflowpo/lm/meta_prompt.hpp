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

#include "gflowpo/meta_context.hpp"
#include "gflowpo/sequence.hpp"

namespace gflowpo::lm {

namespace detail {

inline std::string count_word(std::size_t n) {
  static const char* words[] = {"zero", "one", "two",   "three", "four", "five",
                                "six",  "seven", "eight", "nine",  "ten"};
  return n <= 10 ? words[n] : std::to_string(n);
}

/// Collapses line breaks so every displayed field stays on one line.
inline std::string one_line(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out += (c == '\n' || c == '\r') ? ' ' : c;
  return out;
}

inline std::string display_reference(const std::string& r) { return "\"" + one_line(r) + "\""; }
inline std::string display_reference(const TokenSequence& r) { return "\"" + to_string(r) + "\""; }

}  // namespace detail

/**
 * Renders the meta-prompt:
 *
 *   I gave a friend an instruction and five inputs. ...
 *
 *   Here are the input-output pairs:
 *
 *   Input: x_1 Output: y_1
 *   ...
 *
 *   Here are some reference instructions: "r_1", "r_2"   (only if Z_ref is nonempty)
 *
 *   The instruction is:
 */
template <typename Ref>
std::string render_meta_prompt(const MetaContext<Ref>& meta) {
  std::string out = "I gave a friend an instruction and " + detail::count_word(meta.shots.size()) +
                    " inputs. The friend read the instruction and wrote an output for every one of the inputs.\n\n";
  out += "Here are the input-output pairs:\n\n";
  for (const auto& s : meta.shots)
    out += "Input: " + detail::one_line(s.input) + " Output: " + detail::one_line(s.output) + "\n";
  if (!meta.reference_set.empty()) {
    out += "\nHere are some reference instructions: ";
    for (std::size_t i = 0; i < meta.reference_set.size(); ++i) {
      if (i) out += ", ";
      out += detail::display_reference(meta.reference_set[i]);
    }
    out += "\n";
  }
  out += "\nThe instruction is:";
  return out;
}

/// Target-model query for one example: "[prompt] Input: [input] Output:".
inline std::string render_eval_prompt(const std::string& prompt, const std::string& input) {
  return prompt + " Input: " + input + " Output:";
}

}  // namespace gflowpo::lm
