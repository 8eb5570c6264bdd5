#include "attnhtr/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "attnhtr/error.hpp"

namespace attnhtr {

namespace {

cv::Mat to_mat(const GrayImage& image) {
  cv::Mat m(image.height, image.width, CV_32F);
  std::copy(image.pixels.begin(), image.pixels.end(), m.ptr<float>());
  return m;
}

GrayImage from_mat(const cv::Mat& m) {
  GrayImage out(m.rows, m.cols);
  cv::Mat f;
  m.convertTo(f, CV_32F);
  for (int y = 0; y < m.rows; ++y) {
    const float* row = f.ptr<float>(y);
    std::copy(row, row + m.cols, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * m.cols);
  }
  return out;
}

}  // namespace

GrayImage::GrayImage(int h, int w, float fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(std::max(h, 0)) * std::max(w, 0), fill) {}

GrayImage load_image(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  require(!raw.empty(), ErrorCode::IoError, "cannot read image " + path.string());
  cv::Mat scaled;
  raw.convertTo(scaled, CV_32F, 1.0 / 255.0);
  return from_mat(scaled);
}

void save_image(const GrayImage& image, const std::filesystem::path& path) {
  require(!image.empty(), ErrorCode::IoError, "cannot save an empty image");
  cv::Mat m = to_mat(image);
  cv::Mat bytes;
  m.convertTo(bytes, CV_8U, 255.0);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bytes);
  } catch (const cv::Exception&) {
    ok = false;
  }
  require(ok, ErrorCode::IoError, "cannot write image " + path.string());
}

void save_heat_overlay(const GrayImage& image, const GrayImage& heat,
                       const std::filesystem::path& path) {
  require(image.height == heat.height && image.width == heat.width, ErrorCode::DimensionMismatch,
          "overlay heat map must match the image size");
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const float g = image.at(y, x);
      const float h = std::clamp(heat.at(y, x), 0.0f, 1.0f);
      const float base = 0.6f * g + 0.2f;
      const auto b = static_cast<unsigned char>(std::lround(255.0f * base * (1.0f - h)));
      const auto r = static_cast<unsigned char>(std::lround(255.0f * (base * (1.0f - h) + h)));
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(b, b, r);
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception&) {
    ok = false;
  }
  require(ok, ErrorCode::IoError, "cannot write image " + path.string());
}

GrayImage resize(const GrayImage& image, int height, int width) {
  require(!image.empty() && height > 0 && width > 0, ErrorCode::InvalidConfig,
          "resize needs non-empty source and target");
  if (image.height == height && image.width == width) return image;
  cv::Mat dst;
  const bool shrinking = height < image.height && width < image.width;
  cv::resize(to_mat(image), dst, cv::Size(width, height), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  GrayImage out = from_mat(dst);
  clamp_unit(out);
  return out;
}

GrayImage resize_to_height(const GrayImage& image, int height) {
  const double ratio = static_cast<double>(height) / image.height;
  const int width = std::max(1, static_cast<int>(std::lround(image.width * ratio)));
  return resize(image, height, width);
}

GrayImage pad_right(const GrayImage& image, int width, float fill) {
  if (image.width >= width) return image;
  GrayImage out(image.height, width, fill);
  for (int y = 0; y < image.height; ++y) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(y) * image.width, image.width,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * width);
  }
  return out;
}

float sample_bilinear(const GrayImage& image, double x, double y, float border) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto px = [&](int yy, int xx) -> double {
    if (xx < 0 || yy < 0 || xx >= image.width || yy >= image.height) return border;
    return image.at(yy, xx);
  };
  const double top = px(y0, x0) * (1.0 - ax) + (ax == 0.0 ? 0.0 : px(y0, x0 + 1) * ax);
  if (ay == 0.0) return static_cast<float>(top);
  const double bottom = px(y0 + 1, x0) * (1.0 - ax) + (ax == 0.0 ? 0.0 : px(y0 + 1, x0 + 1) * ax);
  return static_cast<float>(top * (1.0 - ay) + bottom * ay);
}

double mean_abs_diff(const GrayImage& a, const GrayImage& b) {
  require(a.height == b.height && a.width == b.width, ErrorCode::DimensionMismatch,
          "mean_abs_diff: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) total += std::abs(a.pixels[i] - b.pixels[i]);
  return a.pixels.empty() ? 0.0 : total / static_cast<double>(a.pixels.size());
}

void clamp_unit(GrayImage& image) {
  for (float& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace attnhtr
