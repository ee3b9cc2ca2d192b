// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace retr::scenes {

/// Writes an 8-bit RGB PNG (color type 2, no interlace, filter 0 rows).
void write_png_rgb8(const std::string& path, int width, int height, const uint8_t* rgb);

}  // namespace retr::scenes
