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

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflowpo/error.hpp"
#include "gflowpo/rng.hpp"
#include "gflowpo/sequence.hpp"

namespace gflowpo {

/// A candidate with its cached correct count A_D(z).
template <typename Seq>
struct ScoredItem {
  Seq sequence;
  double correct_count = 0.0;
  std::uint64_t insertion_step = 0;

  bool operator==(const ScoredItem&) const = default;
};

using ScoredSequence = ScoredItem<TokenSequence>;

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// How a sequence type is written to the first field of a buffer record.
template <typename Seq>
struct RecordCodec;

template <>
struct RecordCodec<TokenSequence> {
  static std::string encode(const TokenSequence& z) { return to_string(z); }
  static TokenSequence decode(const std::string& field) { return parse_token_sequence(field); }
};

/// Text prompts are stored as JSON string literals so tabs and newlines survive.
template <>
struct RecordCodec<std::string> {
  static std::string encode(const std::string& s) { return nlohmann::json(s).dump(); }
  static std::string decode(const std::string& field) {
    try {
      return nlohmann::json::parse(field).get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad text record: ") + e.what());
    }
  }
};

/// One line per entry: sequence, correct count and insertion step, tab separated.
template <typename Seq>
void write_records(std::ostream& out, const std::vector<ScoredItem<Seq>>& items) {
  for (const auto& it : items)
    out << RecordCodec<Seq>::encode(it.sequence) << '\t' << detail::format_real(it.correct_count)
        << '\t' << it.insertion_step << '\n';
}

template <typename Seq>
std::vector<ScoredItem<Seq>> read_records(std::istream& in) {
  std::vector<ScoredItem<Seq>> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t2 = line.rfind('\t');
    const auto t1 = t2 == std::string::npos ? t2 : line.rfind('\t', t2 - 1);
    if (t1 == std::string::npos)
      throw ParseError("buffer record line " + std::to_string(lineno) + ": expected 3 fields");
    ScoredItem<Seq> it;
    it.sequence = RecordCodec<Seq>::decode(line.substr(0, t1));
    try {
      it.correct_count = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      it.insertion_step = std::stoull(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw ParseError("buffer record line " + std::to_string(lineno) + ": bad number");
    }
    items.push_back(std::move(it));
  }
  return items;
}

/**
 * Replay buffer B. Bounded FIFO: once full, each insertion evicts the
 * oldest entry. Duplicate sequences are kept as separate entries.
 */
template <typename Seq>
class ReplayBuffer {
 public:
  using Item = ScoredItem<Seq>;

  explicit ReplayBuffer(std::size_t capacity = 1000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
  }

  void add(Item item) {
    entries_.push_back(std::move(item));
    if (entries_.size() > capacity_) entries_.pop_front();
  }

  const Item& sample_uniform(RngStream& rng) const {
    if (entries_.empty()) throw EmptyBuffer("replay buffer is empty; run the pre-step first");
    return entries_[rng.uniform_index(entries_.size())];
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Item& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<Item> snapshot() const { return {entries_.begin(), entries_.end()}; }

  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t capacity_;
  std::deque<Item> entries_;
};

/**
 * High-reward buffer Q: the top-`capacity` distinct sequences by correct
 * count. Entries are kept sorted best first; equal scores keep the earlier
 * insertion step ahead.
 */
template <typename Seq>
class HighRewardBuffer {
 public:
  using Item = ScoredItem<Seq>;

  explicit HighRewardBuffer(std::size_t capacity = 5) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("high-reward capacity must be positive");
  }

  /// Returns true when the item was admitted.
  bool offer(const Item& item) {
    for (const auto& e : entries_)
      if (e.sequence == item.sequence) return false;
    if (entries_.size() == capacity_ && !ranks_before(item, entries_.back())) return false;
    auto pos = std::find_if(entries_.begin(), entries_.end(),
                            [&](const Item& e) { return ranks_before(item, e); });
    entries_.insert(pos, item);
    if (entries_.size() > capacity_) entries_.pop_back();
    return true;
  }

  const Item& sample_uniform(RngStream& rng) const {
    if (entries_.empty()) throw EmptyBuffer("high-reward buffer is empty");
    return entries_[rng.uniform_index(entries_.size())];
  }

  std::optional<Item> best() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.front();
  }

  std::optional<double> min_score() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.back().correct_count;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Item& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const std::vector<Item>& snapshot() const { return entries_; }

  bool operator==(const HighRewardBuffer&) const = default;

  /// Strict ranking order: higher score first, then earlier discovery.
  static bool ranks_before(const Item& a, const Item& b) {
    if (a.correct_count != b.correct_count) return a.correct_count > b.correct_count;
    return a.insertion_step < b.insertion_step;
  }

 private:
  std::size_t capacity_;
  std::vector<Item> entries_;
};

}  // namespace gflowpo
