#include "attnhtr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "attnhtr/error.hpp"
#include "attnhtr/rng.hpp"

namespace attnhtr {

namespace {

void check_range(const Range& r, double min, double max, const char* name) {
  require(r.lo <= r.hi, ErrorCode::InvalidConfig, std::string(name) + ": lo > hi");
  require(r.lo >= min && r.hi <= max, ErrorCode::InvalidConfig,
          std::string(name) + " must stay within [" + std::to_string(min) + ", " +
              std::to_string(max) + "]");
}

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

void AugmentConfig::validate() const {
  check_range(blur_sigma, 0.0, 3.0, "blur_sigma");
  check_range(sharpen_amount, 0.0, 2.0, "sharpen_amount");
  require(elastic_cells_x >= 1 && elastic_cells_y >= 1, ErrorCode::InvalidConfig,
          "elastic grid needs at least one cell per axis");
  check_range(elastic_magnitude, 0.0, 5.0, "elastic_magnitude");
  check_range(shear_deg, -30.0, 30.0, "shear");
  check_range(rotation_deg, -15.0, 15.0, "rotation");
  check_range(translate, 0.0, 0.1, "translate");
  check_range(scale, 0.5, 2.0, "scale");
  check_range(gamma, 0.2, 5.0, "gamma");
  check_range(background_blend, 0.0, 0.6, "background_blend");
  require(apply_probability >= 0.0 && apply_probability <= 1.0, ErrorCode::InvalidConfig,
          "apply_probability must be in [0, 1]");
}

AugmentConfig AugmentConfig::neutral(double apply_probability) {
  AugmentConfig c;
  c.blur_sigma = {0.0, 0.0};
  c.sharpen_amount = {0.0, 0.0};
  c.elastic_magnitude = {0.0, 0.0};
  c.shear_deg = {0.0, 0.0};
  c.rotation_deg = {0.0, 0.0};
  c.translate = {0.0, 0.0};
  c.scale = {1.0, 1.0};
  c.gamma = {1.0, 1.0};
  c.background_blend = {0.0, 0.0};
  c.apply_probability = apply_probability;
  return c;
}

GrayImage apply_pipeline(const GrayImage& image, const AugmentConfig& config, std::uint64_t seed) {
  config.validate();
  require(!image.empty(), ErrorCode::InvalidConfig, "cannot augment an empty image");
  Rng rng(seed);
  if (uniform(rng, 0.0, 1.0) >= config.apply_probability) return image;

  const bool use_blur = std::bernoulli_distribution(0.5)(rng);
  const double blur = uniform(rng, config.blur_sigma.lo, config.blur_sigma.hi);
  const double sharp = uniform(rng, config.sharpen_amount.lo, config.sharpen_amount.hi);
  const double magnitude = uniform(rng, config.elastic_magnitude.lo, config.elastic_magnitude.hi);
  const std::uint64_t elastic_seed = rng();
  const double shear = uniform(rng, config.shear_deg.lo, config.shear_deg.hi);
  const double rotation = uniform(rng, config.rotation_deg.lo, config.rotation_deg.hi);
  const double tx = uniform(rng, config.translate.lo, config.translate.hi) *
                    (std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0);
  const double ty = uniform(rng, config.translate.lo, config.translate.hi) *
                    (std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0);
  const double scale = uniform(rng, config.scale.lo, config.scale.hi);
  const double gamma = uniform(rng, config.gamma.lo, config.gamma.hi);
  const double blend = uniform(rng, config.background_blend.lo, config.background_blend.hi);
  const std::uint64_t bg_seed = rng();

  GrayImage out = use_blur ? gaussian_blur(image, blur) : sharpen(image, sharp);
  out = elastic_transform(out, config.elastic_cells_x, config.elastic_cells_y, magnitude, elastic_seed);
  out = affine_transform(out, shear, rotation, tx, ty, scale);
  out = gamma_correct(out, gamma);
  if (blend > 0.0) {
    const GrayImage bg = background_texture(out.height, out.width, bg_seed);
    out = photometric_transform(out, 1.0, 0.0, 0.0, bg, blend);
  }
  clamp_unit(out);
  return out;
}

DisplacementGrid random_grid(int cells_x, int cells_y, double magnitude, std::uint64_t seed) {
  require(cells_x >= 1 && cells_y >= 1, ErrorCode::InvalidConfig, "elastic grid cells must be >= 1");
  require(magnitude >= 0.0, ErrorCode::InvalidConfig, "elastic magnitude must be >= 0");
  DisplacementGrid grid;
  grid.cells_x = cells_x;
  grid.cells_y = cells_y;
  const std::size_t points = static_cast<std::size_t>(cells_x + 1) * (cells_y + 1);
  Rng rng(seed);
  grid.dx.resize(points);
  grid.dy.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid.dx[i] = uniform(rng, -magnitude, magnitude);
    grid.dy[i] = uniform(rng, -magnitude, magnitude);
  }
  return grid;
}

DisplacementField dense_displacement(const DisplacementGrid& grid, int height, int width) {
  require(grid.cells_x >= 1 && grid.cells_y >= 1, ErrorCode::InvalidConfig,
          "elastic grid cells must be >= 1");
  const std::size_t stride = static_cast<std::size_t>(grid.cells_x) + 1;
  require(grid.dx.size() == stride * (grid.cells_y + 1) && grid.dy.size() == grid.dx.size(),
          ErrorCode::InvalidConfig, "displacement grid has wrong point count");
  DisplacementField field;
  field.height = height;
  field.width = width;
  field.dx.resize(static_cast<std::size_t>(height) * width);
  field.dy.resize(field.dx.size());
  for (int y = 0; y < height; ++y) {
    const double gy = height > 1 ? static_cast<double>(y) * grid.cells_y / (height - 1) : 0.0;
    const int j0 = std::min(static_cast<int>(gy), grid.cells_y - 1);
    const double ay = gy - j0;
    for (int x = 0; x < width; ++x) {
      const double gx = width > 1 ? static_cast<double>(x) * grid.cells_x / (width - 1) : 0.0;
      const int i0 = std::min(static_cast<int>(gx), grid.cells_x - 1);
      const double ax = gx - i0;
      auto lerp2 = [&](const std::vector<double>& v) {
        const double p00 = v[j0 * stride + i0];
        const double p01 = v[j0 * stride + i0 + 1];
        const double p10 = v[(j0 + 1) * stride + i0];
        const double p11 = v[(j0 + 1) * stride + i0 + 1];
        return (p00 * (1 - ax) + p01 * ax) * (1 - ay) + (p10 * (1 - ax) + p11 * ax) * ay;
      };
      const std::size_t idx = static_cast<std::size_t>(y) * width + x;
      field.dx[idx] = lerp2(grid.dx);
      field.dy[idx] = lerp2(grid.dy);
    }
  }
  return field;
}

GrayImage warp(const GrayImage& image, const DisplacementField& field) {
  require(field.height == image.height && field.width == image.width, ErrorCode::DimensionMismatch,
          "displacement field must match the image");
  GrayImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * image.width + x;
      out.pixels[idx] = sample_bilinear(image, x - field.dx[idx], y - field.dy[idx]);
    }
  }
  return out;
}

GrayImage elastic_transform(const GrayImage& image, int cells_x, int cells_y, double magnitude,
                            std::uint64_t seed) {
  const DisplacementGrid grid = random_grid(cells_x, cells_y, magnitude, seed);
  if (magnitude == 0.0) return image;
  return warp(image, dense_displacement(grid, image.height, image.width));
}

GrayImage affine_transform(const GrayImage& image, double shear_deg, double rotation_deg,
                           double translate_x, double translate_y, double scale) {
  require(scale > 0.0, ErrorCode::InvalidConfig, "scale must be positive");
  if (shear_deg == 0.0 && rotation_deg == 0.0 && translate_x == 0.0 && translate_y == 0.0 &&
      scale == 1.0) {
    return image;
  }
  // Forward map p' = R * Sh * S * (p - c) + c + t, in (x right, y down)
  // coordinates.
  const double th = radians(rotation_deg);
  const double c = std::cos(th);
  const double s = std::sin(th);
  const double k = std::tan(radians(shear_deg));
  // R = [[c, s], [-s, c]] turns content counter-clockwise on screen;
  // Sh = [[1, -k], [0, 1]] leans the top of the glyphs to the right.
  const double a00 = (c * 1.0 + s * 0.0) * scale;
  const double a01 = (c * -k + s * 1.0) * scale;
  const double a10 = (-s * 1.0 + c * 0.0) * scale;
  const double a11 = (-s * -k + c * 1.0) * scale;
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det;
  const double i01 = -a01 / det;
  const double i10 = -a10 / det;
  const double i11 = a00 / det;
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;
  const double tx = translate_x * image.width;
  const double ty = translate_y * image.height;
  GrayImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double qx = x - cx - tx;
      const double qy = y - cy - ty;
      const double sx = i00 * qx + i01 * qy + cx;
      const double sy = i10 * qx + i11 * qy + cy;
      out.at(y, x) = sample_bilinear(image, sx, sy);
    }
  }
  return out;
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  require(sigma >= 0.0, ErrorCode::InvalidConfig, "blur sigma must be >= 0");
  if (sigma == 0.0) return image;
  const std::vector<double> k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  GrayImage tmp(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int xx = std::clamp(x + i, 0, image.width - 1);
        acc += k[static_cast<std::size_t>(i + r)] * image.at(y, xx);
      }
      tmp.at(y, x) = static_cast<float>(acc);
    }
  }
  GrayImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yy = std::clamp(y + i, 0, image.height - 1);
        acc += k[static_cast<std::size_t>(i + r)] * tmp.at(yy, x);
      }
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  clamp_unit(out);
  return out;
}

GrayImage sharpen(const GrayImage& image, double amount) {
  require(amount >= 0.0, ErrorCode::InvalidConfig, "sharpen amount must be >= 0");
  if (amount == 0.0) return image;
  const GrayImage soft = gaussian_blur(image, 1.0);
  GrayImage out(image.height, image.width);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<float>(image.pixels[i] + amount * (image.pixels[i] - soft.pixels[i]));
  }
  clamp_unit(out);
  return out;
}

GrayImage gamma_correct(const GrayImage& image, double gamma) {
  require(gamma > 0.0, ErrorCode::InvalidConfig, "gamma must be positive");
  if (gamma == 1.0) return image;
  GrayImage out = image;
  for (float& v : out.pixels) v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
  return out;
}

GrayImage background_texture(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  const int gw = 6;
  const int gh = 3;
  std::vector<double> lattice(static_cast<std::size_t>(gw + 1) * (gh + 1));
  for (double& v : lattice) v = uniform(rng, 0.55, 1.0);
  GrayImage out(height, width);
  for (int y = 0; y < height; ++y) {
    const double fy = height > 1 ? static_cast<double>(y) * gh / (height - 1) : 0.0;
    const int j = std::min(static_cast<int>(fy), gh - 1);
    const double ay = fy - j;
    for (int x = 0; x < width; ++x) {
      const double fx = width > 1 ? static_cast<double>(x) * gw / (width - 1) : 0.0;
      const int i = std::min(static_cast<int>(fx), gw - 1);
      const double ax = fx - i;
      const auto at = [&](int jj, int ii) { return lattice[static_cast<std::size_t>(jj) * (gw + 1) + ii]; };
      const double v = (at(j, i) * (1 - ax) + at(j, i + 1) * ax) * (1 - ay) +
                       (at(j + 1, i) * (1 - ax) + at(j + 1, i + 1) * ax) * ay;
      out.at(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

GrayImage photometric_transform(const GrayImage& image, double gamma, double blur_sigma,
                                double sharpen_amount, const GrayImage& background, double blend) {
  require(gamma > 0.0, ErrorCode::InvalidConfig, "gamma must be positive");
  require(blend >= 0.0 && blend <= 1.0, ErrorCode::InvalidConfig, "blend must be in [0, 1]");
  require(!background.empty(), ErrorCode::InvalidConfig, "background texture is empty");
  GrayImage out = sharpen(gaussian_blur(image, blur_sigma), sharpen_amount);
  out = gamma_correct(out, gamma);
  if (blend == 0.0) return out;
  const GrayImage bg = (background.height == image.height && background.width == image.width)
                           ? background
                           : resize(background, image.height, image.width);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<float>(blend * bg.pixels[i] + (1.0 - blend) * out.pixels[i]);
  }
  clamp_unit(out);
  return out;
}

}  // namespace attnhtr
