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

#pragma once

#include <array>

namespace dghm {

/// Axis-aligned box in scene units, centre/size form.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  double x0() const { return cx - 0.5 * w; }
  double x1() const { return cx + 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  bool operator==(const Box&) const = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// Clips to [0, width] x [0, height]. The result may be degenerate when the
/// box lies wholly outside.
Box clip(const Box& b, double width, double height);

/// Centre/size offsets of `target` relative to `anchor`:
/// ((tx - ax) / aw, (ty - ay) / ah, log(tw / aw), log(th / ah)).
std::array<double, 4> encode_offsets(const Box& anchor, const Box& target);
Box decode_offsets(const Box& anchor, const std::array<double, 4>& offsets);

}  // namespace dghm
