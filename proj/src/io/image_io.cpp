#include "lesion/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "lesion/errors.hpp"
#include "lesion/manifest.hpp"

namespace lesion::io {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

bool is_jpeg(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

struct DecodedPng {
  std::size_t height = 0, width = 0;
  bool color = false;
  std::vector<std::uint8_t> samples;
};

DecodedPng decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path, bool keep_gray) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  DecodedPng out;
  out.color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = (keep_gray && !out.color) ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  out.height = image.height;
  out.width = image.width;
  out.samples.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.samples.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

// Returns false and fills `message` on failure. No objects with destructors
// live across the setjmp.
bool decode_jpeg_raw(const std::uint8_t* data, std::size_t size, std::uint8_t* pixels, std::size_t capacity,
                     std::size_t* height, std::size_t* width, char* message) {
  jpeg_decompress_struct info;
  JpegErrorManager err;
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&info);
    return false;
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, data, static_cast<unsigned long>(size));
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  *height = info.output_height;
  *width = info.output_width;
  const std::size_t stride = static_cast<std::size_t>(info.output_width) * 3;
  if (pixels == nullptr || stride * info.output_height > capacity) {
    jpeg_destroy_decompress(&info);
    return true;
  }
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = pixels + static_cast<std::size_t>(info.output_scanline) * stride;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return true;
}

ImageRGB decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  char message[JMSG_LENGTH_MAX] = {0};
  std::size_t height = 0, width = 0;
  if (!decode_jpeg_raw(bytes.data(), bytes.size(), nullptr, 0, &height, &width, message)) {
    throw FormatError("cannot decode JPEG " + path.string() + ": " + message);
  }
  ImageRGB image(height, width);
  if (!decode_jpeg_raw(bytes.data(), bytes.size(), image.pixels.data(), image.pixels.size(), &height, &width,
                       message)) {
    throw FormatError("cannot decode JPEG " + path.string() + ": " + message);
  }
  return image;
}

std::vector<std::uint8_t> encode(const std::uint8_t* samples, std::size_t height, std::size_t width,
                                 png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, samples, 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, samples, 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  write_text_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace

ImageRGB read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (is_png(bytes)) {
    auto png = decode_png(bytes, path, false);
    ImageRGB image;
    image.height = png.height;
    image.width = png.width;
    image.pixels = std::move(png.samples);
    return image;
  }
  if (is_jpeg(bytes)) return decode_jpeg(bytes, path);
  throw FormatError("unrecognised image format: " + path.string());
}

std::vector<std::uint8_t> encode_png(const ImageRGB& image) {
  if (image.pixels.size() != image.height * image.width * 3 || image.height == 0) {
    throw DimensionError("encode_png: malformed image");
  }
  return encode(image.pixels.data(), image.height, image.width, PNG_FORMAT_RGB);
}

void write_png(const ImageRGB& image, const std::filesystem::path& path) { write_bytes(encode_png(image), path); }

std::vector<std::uint8_t> encode_png(const BitMask& mask) {
  if (mask.bits.size() != mask.height * mask.width || mask.height == 0) {
    throw DimensionError("encode_png: malformed mask");
  }
  std::vector<std::uint8_t> gray(mask.bits.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.bits[i] ? 255 : 0;
  return encode(gray.data(), mask.height, mask.width, PNG_FORMAT_GRAY);
}

void write_mask(const BitMask& mask, const std::filesystem::path& path) { write_bytes(encode_png(mask), path); }

BitMask read_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (!is_png(bytes)) throw FormatError("mask is not a PNG: " + path.string());
  const auto png = decode_png(bytes, path, true);
  BitMask mask(png.height, png.width);
  const std::size_t channels = png.color ? 3 : 1;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    bool on = false;
    for (std::size_t c = 0; c < channels; ++c) on = on || png.samples[i * channels + c] != 0;
    mask.bits[i] = on ? 1 : 0;
  }
  return mask;
}

}  // namespace lesion::io
