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

#include "detr/imageio.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "detr/error.hpp"

namespace detr {
namespace {

struct Header {
  char kind = 0;  // '5' or '6'
  std::int64_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

// Parses "P5|P6 <ws> width <ws> height <ws> maxval <single ws>", skipping
// '#' comments between tokens.
Header ParseHeader(const std::string& bytes, const std::string& what) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    Fail(ErrorKind::kValidation, what + ": not a binary PGM/PPM (missing P5/P6 magic)");
  }
  Header h;
  h.kind = bytes[1];
  std::size_t pos = 2;
  auto next_number = [&]() -> std::int64_t {
    while (pos < bytes.size()) {
      const auto c = static_cast<unsigned char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      Fail(ErrorKind::kValidation, what + ": malformed header");
    }
    std::int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (std::int64_t{1} << 30)) Fail(ErrorKind::kValidation, what + ": header value too large");
      ++pos;
    }
    return v;
  };
  h.width = next_number();
  h.height = next_number();
  h.maxval = next_number();
  if (h.width <= 0 || h.height <= 0) Fail(ErrorKind::kValidation, what + ": non-positive image size");
  if (h.maxval <= 0 || h.maxval > 255) Fail(ErrorKind::kValidation, what + ": only 8-bit maxval is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    Fail(ErrorKind::kValidation, what + ": malformed header");
  }
  h.data_offset = pos + 1;
  return h;
}

void WriteBytes(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) Fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) Fail(ErrorKind::kIo, "failed writing " + path);
}

}  // namespace

std::string ReadFileBytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) Fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

GrayImage ParsePgm(const std::string& bytes) {
  const Header h = ParseHeader(bytes, "PGM");
  if (h.kind != '5') Fail(ErrorKind::kValidation, "PGM: expected P5, found P6");
  const auto n = static_cast<std::size_t>(h.width * h.height);
  if (bytes.size() < h.data_offset + n) Fail(ErrorKind::kValidation, "PGM: pixel data truncated");
  GrayImage img{h.width, h.height, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  return img;
}

GrayImage ReadPgm(const std::string& path) {
  try {
    return ParsePgm(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kValidation) Fail(ErrorKind::kValidation, path + ": " + e.what());
    throw;
  }
}

void WritePgm(const std::string& path, const GrayImage& image) {
  std::string bytes = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  bytes.append(image.pixels.begin(), image.pixels.end());
  WriteBytes(path, bytes);
}

RgbImage ParsePpm(const std::string& bytes) {
  const Header h = ParseHeader(bytes, "PPM");
  if (h.kind != '6') Fail(ErrorKind::kValidation, "PPM: expected P6, found P5");
  const auto n = static_cast<std::size_t>(3 * h.width * h.height);
  if (bytes.size() < h.data_offset + n) Fail(ErrorKind::kValidation, "PPM: pixel data truncated");
  RgbImage img{h.width, h.height, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  return img;
}

RgbImage ReadPpm(const std::string& path) {
  try {
    return ParsePpm(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kValidation) Fail(ErrorKind::kValidation, path + ": " + e.what());
    throw;
  }
}

std::string EncodePpm(const RgbImage& image) {
  std::string bytes = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  bytes.append(image.pixels.begin(), image.pixels.end());
  return bytes;
}

void WritePpm(const std::string& path, const RgbImage& image) { WriteBytes(path, EncodePpm(image)); }

ImageSize ReadNetpbmSize(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) Fail(ErrorKind::kIo, "cannot open " + path);
  std::string head(512, '\0');
  is.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(is.gcount()));
  const Header h = ParseHeader(head, path);
  return {h.width, h.height};
}

}  // namespace detr
