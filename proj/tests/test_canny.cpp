#include <doctest.h>

#include <algorithm>

#include "inklab/canny.hpp"
#include "inklab/rng.hpp"
#include "support/canny_reference.hpp"

using namespace inklab;
using namespace inklab::vision;

namespace {

Image random_image(int h, int w, int c, Rng& rng, float lo = 0.0f, float hi = 1.0f) {
  Image img = Image::zeros(h, w, c);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

}  // namespace

TEST_CASE("constant images produce zero edges") {
  for (float level : {0.0f, 0.25f, 1.0f}) {
    Image img = Image::zeros(16, 16, 1);
    std::fill(img.pixels.begin(), img.pixels.end(), level);
    const EdgeMap edge = canny(img);
    CHECK(edge.density() == 0.0);
  }
}

TEST_CASE("threshold ordering is validated") {
  const Image img = Image::zeros(8, 8, 1);
  CHECK_THROWS_AS(canny(img, 0.5, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(canny(img, -0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(canny(img, 0.1, 1.2), std::invalid_argument);
}

TEST_CASE("a vertical step yields a single one-pixel vertical line") {
  Image img = Image::zeros(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x) img.at(y, x, 0) = 1.0f;

  const EdgeMap edge = canny(img);
  int line_col = -1;
  for (int y = 0; y < 16; ++y) {
    int count = 0, col = -1;
    for (int x = 0; x < 16; ++x)
      if (edge.at(y, x) == 1.0f) {
        ++count;
        col = x;
      }
    REQUIRE(count == 1);  // exactly one edge pixel per row
    if (line_col < 0) line_col = col;
    CHECK(col == line_col);  // all in the same column
  }
  CHECK(line_col >= 6);
  CHECK(line_col <= 9);
  // and the reference implementation agrees exactly
  const EdgeMap ref = testing::canny_reference(img, 0.1, 0.2);
  CHECK(edge.pixels == ref.pixels);
}

TEST_CASE("bit-exact agreement with the reference on random 16x16 images") {
  Rng rng(2024);
  for (int i = 0; i < 60; ++i) {
    const int channels = (i % 3 == 0) ? 3 : 1;
    const Image img = random_image(16, 16, channels, rng);
    const EdgeMap got = canny(img, 0.1, 0.2);
    const EdgeMap want = testing::canny_reference(img, 0.1, 0.2);
    REQUIRE(got.pixels == want.pixels);
  }
}

TEST_CASE("output is binary and invariant to a constant brightness shift") {
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    const Image img = random_image(16, 16, 1, rng, 0.0f, 0.8f);
    Image shifted = img;
    for (auto& p : shifted.pixels) p += 0.15f;

    const EdgeMap a = canny(img);
    const EdgeMap b = canny(shifted);
    for (float v : a.pixels) CHECK((v == 0.0f || v == 1.0f));
    CHECK(a.pixels == b.pixels);
  }
}

TEST_CASE("low threshold extends edges through hysteresis") {
  // ramp flanked by flat regions: lowering the low threshold can only add
  // weak pixels connected to strong ones
  Rng rng(8);
  const Image img = random_image(24, 24, 1, rng);
  const EdgeMap tight = canny(img, 0.19, 0.2);
  const EdgeMap loose = canny(img, 0.05, 0.2);
  double extra = 0.0;
  for (size_t i = 0; i < tight.pixels.size(); ++i) {
    CHECK(loose.pixels[i] >= tight.pixels[i]);  // superset
    extra += loose.pixels[i] - tight.pixels[i];
  }
  CHECK(extra >= 0.0);
}
