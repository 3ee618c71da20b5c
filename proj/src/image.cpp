#include "op3d/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <png.h>

#include "op3d/error.hpp"

namespace op3d {

Mask binarize(const GrayImage& img, float threshold) {
  Mask m(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), m.begin(),
                 [threshold](float v) { return static_cast<std::uint8_t>(v > threshold); });
  return m;
}

std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

double iou(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw Error(Errc::InvalidArgument, "mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
  throw Error(Errc::Io, std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0) throw Error(Errc::InvalidArgument, "empty image");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) row[static_cast<std::size_t>(x)] = to_byte(img.at(x, y));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  return out;
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(Errc::ParseError, "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  struct Cursor {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;
  } cursor{bytes};
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep out, png_size_t len) {
    auto* c = static_cast<Cursor*>(png_get_io_ptr(p));
    if (c->pos + len > c->data.size()) png_error(p, "truncated stream");
    std::memcpy(out, c->data.data() + c->pos, len);
    c->pos += len;
  });
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) img.at(x, y) = row[static_cast<std::size_t>(x)] / 255.0f;
  }
  return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  const auto bytes = encode_png(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

GrayImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

GrayImage quantize8(const GrayImage& img) {
  GrayImage out = img;
  for (auto& v : out.pixels) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace op3d
