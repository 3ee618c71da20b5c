#include <png.h>

#include "doctest.h"
#include "op3d/error.hpp"
#include "op3d/image.hpp"
#include "support.hpp"

using namespace op3d;

TEST_CASE("binarize, count and IoU") {
  GrayImage a(4, 1);
  a.pixels = {0.0f, 0.2f, 1.0f, 0.0f};
  const Mask m = binarize(a);
  CHECK(m == Mask{0, 1, 1, 0});
  CHECK(count(m) == 2);
  CHECK(binarize(a, 0.5f) == Mask{0, 0, 1, 0});
  CHECK(iou(m, Mask{0, 0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(m, m) == 1.0);
  CHECK(iou(Mask(4, 0), Mask(4, 0)) == 0.0);
  CHECK_THROWS_AS(iou(m, Mask(3, 0)), Error);
}

TEST_CASE("PNG round trip through 8 bits") {
  GrayImage img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i) / 14.0f;
  const auto bytes = encode_png(img);
  const auto back = decode_png(bytes);
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back == quantize8(img));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::lround(back.pixels[i] * 255.0f) == std::lround(img.pixels[i] * 255.0f));
  }
}

TEST_CASE("PNG header is 8-bit grayscale") {
  GrayImage img(7, 2, 0.5f);
  const auto bytes = encode_png(img);
  REQUIRE(bytes.size() > 26);
  CHECK(png_sig_cmp(bytes.data(), 0, 8) == 0);
  CHECK(bytes[24] == 8);                   // bit depth
  CHECK(bytes[25] == PNG_COLOR_TYPE_GRAY); // colour type
}

TEST_CASE("corrupt PNG streams are rejected") {
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(decode_png(junk), Error);
  auto bytes = encode_png(GrayImage(16, 16, 0.25f));
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_png(bytes), Error);
}

TEST_CASE("files") {
  op3d::testing::TempDir dir("image");
  GrayImage img(3, 3, 1.0f);
  write_png(dir / "sub/x.png", img);
  CHECK(read_png(dir / "sub/x.png") == img);
  CHECK_THROWS_AS(read_png(dir / "nope.png"), Error);
}
