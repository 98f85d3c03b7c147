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

#include "dghm/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dghm {

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(inter / uni, 1.0) : 0.0;
}

Box clip(const Box& b, double width, double height) {
  const double x0 = std::clamp(b.x0(), 0.0, width);
  const double x1 = std::clamp(b.x1(), 0.0, width);
  const double y0 = std::clamp(b.y0(), 0.0, height);
  const double y1 = std::clamp(b.y1(), 0.0, height);
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

std::array<double, 4> encode_offsets(const Box& anchor, const Box& target) {
  return {(target.cx - anchor.cx) / anchor.w, (target.cy - anchor.cy) / anchor.h, std::log(target.w / anchor.w),
          std::log(target.h / anchor.h)};
}

Box decode_offsets(const Box& anchor, const std::array<double, 4>& offsets) {
  // Size offsets are bounded so an untrained head cannot produce inf boxes.
  constexpr double kMaxLogScale = 4.0;
  return {anchor.cx + offsets[0] * anchor.w, anchor.cy + offsets[1] * anchor.h,
          anchor.w * std::exp(std::clamp(offsets[2], -kMaxLogScale, kMaxLogScale)),
          anchor.h * std::exp(std::clamp(offsets[3], -kMaxLogScale, kMaxLogScale))};
}

}  // namespace dghm
