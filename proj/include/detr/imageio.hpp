/* Copyright 2026 The detr-kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Minimal netpbm codecs: binary P5 (grayscale) and P6 (RGB), maxval <= 255.

#include <cstdint>
#include <string>
#include <vector>

namespace detr {

struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(std::int64_t x, std::int64_t y) const {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
};

struct RgbImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB

  bool operator==(const RgbImage&) const = default;
};

GrayImage ParsePgm(const std::string& bytes);
GrayImage ReadPgm(const std::string& path);
void WritePgm(const std::string& path, const GrayImage& image);

RgbImage ParsePpm(const std::string& bytes);
RgbImage ReadPpm(const std::string& path);
void WritePpm(const std::string& path, const RgbImage& image);
std::string EncodePpm(const RgbImage& image);

// Width and height from a P5/P6 header without decoding pixels.
struct ImageSize {
  std::int64_t width = 0;
  std::int64_t height = 0;
};
ImageSize ReadNetpbmSize(const std::string& path);

std::string ReadFileBytes(const std::string& path);

}  // namespace detr
