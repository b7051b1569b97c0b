#pragma once

// PNG persistence for rasters, masks, and label maps (libpng simplified API).

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "neurograph/error.hpp"
#include "neurograph/raster.hpp"

namespace neurograph::png {

namespace detail {

struct ImageHandle {
  png_image image{};
  ImageHandle() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~ImageHandle() { png_image_free(&image); }
  ImageHandle(const ImageHandle&) = delete;
  ImageHandle& operator=(const ImageHandle&) = delete;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(what + ": " + image.message);
  }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::vector<std::uint8_t> encode(png_image& image, const void* buffer) {
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer, 0, nullptr))
    throw Error(std::string("png encode: ") + image.message);
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, buffer, 0, nullptr))
    throw Error(std::string("png encode: ") + image.message);
  bytes.resize(size);
  return bytes;
}

}  // namespace detail

/// Decodes 8-bit gray or RGB. Alpha is composited away and other depths are
/// normalized to 8 bits per channel.
inline Raster decode(const std::vector<std::uint8_t>& bytes) {
  detail::ImageHandle h;
  if (!png_image_begin_read_from_memory(&h.image, bytes.data(), bytes.size()))
    h.fail("png decode");
  const bool color = (h.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  h.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster out(static_cast<int>(h.image.width), static_cast<int>(h.image.height), color ? 3 : 1);
  if (!png_image_finish_read(&h.image, nullptr, out.data().data(), 0, nullptr))
    h.fail("png decode");
  return out;
}

inline std::vector<std::uint8_t> encode(const Raster& img) {
  detail::ImageHandle h;
  h.image.width = static_cast<png_uint_32>(img.width());
  h.image.height = static_cast<png_uint_32>(img.height());
  h.image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  return detail::encode(h.image, img.data().data());
}

inline Raster read(const std::filesystem::path& path) {
  try {
    return decode(detail::read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write(const std::filesystem::path& path, const Raster& img) {
  detail::write_file(path, encode(img));
}

// Masks are stored as {0, 255} gray images.
inline Raster mask_to_raster(const BitMask& mask) {
  Raster out(mask.width(), mask.height(), 1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) out(x, y) = mask(x, y) ? 255 : 0;
  return out;
}

// Any nonzero gray level (or nonzero luma for RGB) reads as set.
inline BitMask raster_to_mask(const Raster& img) {
  const Raster gray = ensure_gray(img);
  BitMask out(gray.width(), gray.height());
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x) out(x, y) = gray(x, y) != 0;
  return out;
}

inline std::vector<std::uint8_t> encode_mask(const BitMask& mask) {
  return encode(mask_to_raster(mask));
}
inline void write_mask(const std::filesystem::path& path, const BitMask& mask) {
  write(path, mask_to_raster(mask));
}
inline BitMask read_mask(const std::filesystem::path& path) { return raster_to_mask(read(path)); }

/// 16-bit gray PNG; fails when the map holds more than 65535 labels.
inline void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::uint32_t max_label = 0;
  for (auto v : labels.data()) max_label = std::max(max_label, v);
  if (max_label > 65535) throw Error("label map has more than 65535 labels");
  std::vector<png_uint_16> buffer(labels.data().begin(), labels.data().end());
  detail::ImageHandle h;
  h.image.width = static_cast<png_uint_32>(labels.width());
  h.image.height = static_cast<png_uint_32>(labels.height());
  h.image.format = PNG_FORMAT_LINEAR_Y;
  detail::write_file(path, detail::encode(h.image, buffer.data()));
}

inline LabelMap read_labels(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ImageHandle h;
  if (!png_image_begin_read_from_memory(&h.image, bytes.data(), bytes.size()))
    h.fail("png decode " + path.string());
  h.image.format = PNG_FORMAT_LINEAR_Y;
  std::vector<png_uint_16> buffer(static_cast<std::size_t>(h.image.width) * h.image.height);
  if (!png_image_finish_read(&h.image, nullptr, buffer.data(), 0, nullptr))
    h.fail("png decode " + path.string());
  LabelMap out(static_cast<int>(h.image.width), static_cast<int>(h.image.height));
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    out.data()[i] = buffer[i];
    max_label = std::max<std::uint32_t>(max_label, buffer[i]);
  }
  out.label_count = max_label;
  return out;
}

}  // namespace neurograph::png
