// Copyright 2026 The DGHM Authors. All Rights Reserved.
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

// Line-delimited corpus record file.
//
//   # dghm-corpus v1
//   scene <id> <AP|NP> <width> <height> <seed> <box count>
//   box <index> <cx> <cy> <w> <h> <annotated 0|1>
//
// One scene line followed by its box lines, scenes in id order. Reals are
// written in shortest round-trip form so a file reads back bit-exact.

#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "dghm/sim.hpp"

namespace dghm {

inline constexpr const char* kCorpusHeader = "# dghm-corpus v1";

void write_corpus(std::ostream& out, std::span<const Scene> scenes);
/// Throws std::runtime_error with the offending line number on malformed input.
std::vector<Scene> read_corpus(std::istream& in);

}  // namespace dghm
