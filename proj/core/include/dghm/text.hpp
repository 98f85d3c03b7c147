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

// Small text helpers shared by the CSV and record writers.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dghm {

/// Shortest representation that parses back to the same double.
std::string fmt_double(double v);

/// Throws std::invalid_argument when `s` is not entirely a number.
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
std::vector<std::string_view> split_whitespace(std::string_view s);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits by `hash_hex`.
std::uint64_t fnv1a64(std::string_view data);
std::string hash_hex(std::uint64_t h);

}  // namespace dghm
