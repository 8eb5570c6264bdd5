#pragma once

#include <filesystem>
#include <vector>

namespace attnhtr {

// Grayscale word image, row-major, values in [0, 1] with 0 = ink and
// 1 = background.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 1.0f);

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return height <= 0 || width <= 0; }

  bool operator==(const GrayImage& other) const = default;
};

// Any format OpenCV can decode; converted to gray and scaled to [0, 1].
GrayImage load_image(const std::filesystem::path& path);
// 8-bit grayscale; format from the extension (.png recommended).
void save_image(const GrayImage& image, const std::filesystem::path& path);
// Writes an RGB image: the gray input with `heat` (same size, [0, 1])
// blended in red.
void save_heat_overlay(const GrayImage& image, const GrayImage& heat,
                       const std::filesystem::path& path);

GrayImage resize(const GrayImage& image, int height, int width);
// Aspect-preserving resize to the given height; width is at least 1.
GrayImage resize_to_height(const GrayImage& image, int height);
// Extends the canvas on the right to `width` with `fill`; no-op when already
// at least that wide.
GrayImage pad_right(const GrayImage& image, int width, float fill = 1.0f);

// Bilinear sample at continuous pixel coordinates (pixel centers at
// integers); positions outside the canvas read `border`.
float sample_bilinear(const GrayImage& image, double x, double y, float border = 1.0f);

double mean_abs_diff(const GrayImage& a, const GrayImage& b);
void clamp_unit(GrayImage& image);

}  // namespace attnhtr
