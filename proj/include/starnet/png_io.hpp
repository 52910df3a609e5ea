#pragma once

#include <png.h>

#include <cmath>
#include <string>
#include <vector>

#include "starnet/errors.hpp"
#include "starnet/image.hpp"

namespace starnet {

// Reads any PNG libpng understands, converted to 8-bit RGB.
inline ImageRGB read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG " + path + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("corrupt PNG " + path + ": " + msg);
  }
  ImageRGB out(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels()[i] = buf[i] / 255.0f;
  return out;
}

// Writes 8-bit RGB, no alpha. Values are clamped and rounded to the nearest level.
inline void write_png(const ImageRGB& img, const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(img.pixels().size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(img.pixels()[i], 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path + ": " + image.message);
}

}  // namespace starnet
