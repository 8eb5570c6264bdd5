#pragma once

#include <cstdint>
#include <vector>

#include "attnhtr/image.hpp"

namespace attnhtr {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Range&) const = default;
};

// Parameter ranges of the online augmentation pipeline. Every parameter is
// drawn uniformly from its range. Translation is a magnitude (fraction of
// the image size) applied with a random sign per axis.
struct AugmentConfig {
  Range blur_sigma{0.0, 1.5};
  Range sharpen_amount{0.0, 1.0};
  int elastic_cells_x = 4;
  int elastic_cells_y = 4;
  Range elastic_magnitude{0.0, 2.0};
  Range shear_deg{-15.0, 15.0};
  Range rotation_deg{-5.0, 5.0};
  Range translate{0.0, 0.02};
  Range scale{0.9, 1.1};
  Range gamma{0.5, 2.0};
  Range background_blend{0.0, 0.2};
  double apply_probability = 0.5;

  // Throws InvalidConfig for inverted ranges or values past the legibility
  // caps (blur <= 3 px, sharpen <= 2, elastic <= 5 px, |shear| <= 30 deg,
  // |rotation| <= 15 deg, translate <= 0.1, scale in [0.5, 2],
  // gamma in [0.2, 5], blend <= 0.6).
  void validate() const;

  // Neutral ranges (no blur/sharpen/warp, gamma 1, scale 1, no blend).
  static AugmentConfig neutral(double apply_probability = 1.0);

  bool operator==(const AugmentConfig&) const = default;
};

// Randomized pipeline: with probability apply_probability runs
// blur-or-sharpen, elastic warp, affine warp, gamma, background blend (in
// that order); otherwise returns the input unchanged. Deterministic in
// (image, config, seed).
GrayImage apply_pipeline(const GrayImage& image, const AugmentConfig& config, std::uint64_t seed);

// Control-point displacements of the elastic mesh: (cells_y + 1) rows of
// (cells_x + 1) points, row-major.
struct DisplacementGrid {
  int cells_x = 1;
  int cells_y = 1;
  std::vector<double> dx;
  std::vector<double> dy;
};

struct DisplacementField {
  int height = 0;
  int width = 0;
  std::vector<double> dx;
  std::vector<double> dy;
};

DisplacementGrid random_grid(int cells_x, int cells_y, double magnitude, std::uint64_t seed);
// Bilinear interpolation of the control displacements over the canvas;
// control points sit on a uniform lattice spanning the pixel centers.
DisplacementField dense_displacement(const DisplacementGrid& grid, int height, int width);
// out(p) = in(p - d(p)), bilinear, background fill outside the canvas.
GrayImage warp(const GrayImage& image, const DisplacementField& field);

GrayImage elastic_transform(const GrayImage& image, int cells_x, int cells_y, double magnitude,
                            std::uint64_t seed);

// One composed warp (scale, shear, rotation about the image center, then
// translation by fractions of the image size), bilinear sampling,
// background 1.0 at exposed borders. Positive rotation turns the content
// counter-clockwise as displayed.
GrayImage affine_transform(const GrayImage& image, double shear_deg, double rotation_deg,
                           double translate_x, double translate_y, double scale);

GrayImage gaussian_blur(const GrayImage& image, double sigma);
// Unsharp mask with a fixed 1 px gaussian.
GrayImage sharpen(const GrayImage& image, double amount);
GrayImage gamma_correct(const GrayImage& image, double gamma);
// Smooth texture in [0.55, 1] from a coarse random lattice.
GrayImage background_texture(int height, int width, std::uint64_t seed);

// clamp(blend * bg + (1 - blend) * filtered(image)^gamma), where filtered is
// a gaussian blur (blur_sigma) followed by the unsharp mask (sharpen). bg is
// resampled to the image size when needed.
GrayImage photometric_transform(const GrayImage& image, double gamma, double blur_sigma,
                                double sharpen_amount, const GrayImage& background, double blend);

}  // namespace attnhtr
