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

#include "dghm/corpus_io.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "dghm/text.hpp"

namespace dghm {

void write_corpus(std::ostream& out, std::span<const Scene> scenes) {
  out << kCorpusHeader << '\n';
  for (const auto& s : scenes) {
    out << "scene " << s.id << ' ' << (s.is_ap() ? "AP" : "NP") << ' ' << fmt_double(s.width) << ' '
        << fmt_double(s.height) << ' ' << s.seed << ' ' << s.gt_boxes.size() << '\n';
    for (std::size_t i = 0; i < s.gt_boxes.size(); ++i) {
      const Box& b = s.gt_boxes[i];
      out << "box " << i << ' ' << fmt_double(b.cx) << ' ' << fmt_double(b.cy) << ' ' << fmt_double(b.w) << ' '
          << fmt_double(b.h) << ' ' << (s.annotated[i] ? 1 : 0) << '\n';
    }
  }
}

std::vector<Scene> read_corpus(std::istream& in) {
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_no = 0;
  std::size_t pending = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("corpus line " + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line) || line != kCorpusHeader) {
    throw std::runtime_error("corpus: missing '" + std::string(kCorpusHeader) + "' header");
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_whitespace(line);
    try {
      if (f[0] == "scene") {
        if (pending != 0) fail("scene has fewer boxes than declared");
        if (f.size() != 7) fail("scene record needs 6 fields");
        Scene s;
        s.id = static_cast<std::uint32_t>(parse_int(f[1]));
        if (f[2] == "AP") s.image_class = ImageClass::AP;
        else if (f[2] == "NP") s.image_class = ImageClass::NP;
        else fail("image class must be AP or NP");
        s.width = parse_double(f[3]);
        s.height = parse_double(f[4]);
        s.seed = std::stoull(std::string(f[5]));
        pending = static_cast<std::size_t>(parse_int(f[6]));
        scenes.push_back(std::move(s));
      } else if (f[0] == "box") {
        if (scenes.empty() || pending == 0) fail("box record outside a scene");
        if (f.size() != 7) fail("box record needs 6 fields");
        Scene& s = scenes.back();
        if (static_cast<std::size_t>(parse_int(f[1])) != s.gt_boxes.size()) fail("box index out of order");
        s.gt_boxes.push_back({parse_double(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5])});
        const auto a = parse_int(f[6]);
        if (a != 0 && a != 1) fail("annotated flag must be 0 or 1");
        s.annotated.push_back(a == 1);
        --pending;
      } else {
        fail("unknown record '" + std::string(f[0]) + "'");
      }
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (pending != 0) throw std::runtime_error("corpus: truncated final scene");
  return scenes;
}

}  // namespace dghm
