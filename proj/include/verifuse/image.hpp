#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "verifuse/common.hpp"

namespace verifuse {

inline constexpr int kImageSide = 299;

/// Closed interval the pixel values of an ImageArray are mapped into.
struct ValueRange {
  double lo = -1.0;
  double hi = 1.0;
  bool operator==(const ValueRange&) const = default;
};

/// 299x299x3 RGB image, row-major HWC, normalised into `range`.
struct ImageArray {
  int height = kImageSide;
  int width = kImageSide;
  ValueRange range;
  std::vector<float> pixels;

  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

enum class ImageFormat { unknown, png, jpeg };

inline ImageFormat sniff_image_format(std::string_view bytes) {
  if (bytes.size() >= 8 && bytes.substr(0, 8) == std::string_view("\x89PNG\r\n\x1A\n", 8)) return ImageFormat::png;
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF && static_cast<unsigned char>(bytes[1]) == 0xD8 &&
      static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageFormat::jpeg;
  }
  return ImageFormat::unknown;
}

inline std::string_view extension_for(ImageFormat f) {
  switch (f) {
    case ImageFormat::png: return "png";
    case ImageFormat::jpeg: return "jpg";
    default: return "bin";
  }
}

namespace detail {

inline cv::Mat decode_rgb(std::string_view bytes) {
  if (sniff_image_format(bytes) == ImageFormat::unknown) return {};
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<char*>(bytes.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(raw, cv::IMREAD_COLOR);  // grey -> 3 channels, alpha dropped
  } catch (const cv::Exception&) {
    return {};
  }
  if (bgr.empty()) return {};
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

}  // namespace detail

/// True when the payload is a PNG or JPEG that actually decodes.
inline bool is_decodable_image(std::string_view bytes) { return !detail::decode_rgb(bytes).empty(); }

/// Decode, force 3 channels, bilinear-resize the 8-bit image to 299x299 (no
/// aspect preservation) and map [0,255] linearly onto `range`.
inline ImageArray prepare_image(std::string_view bytes, ValueRange range = {}) {
  cv::Mat rgb = detail::decode_rgb(bytes);
  if (rgb.empty()) throw DataError("prepare_image: payload is not a decodable PNG/JPEG");
  cv::Mat resized8, resized;
  cv::resize(rgb, resized8, cv::Size(kImageSide, kImageSide), 0, 0, cv::INTER_LINEAR);
  resized8.convertTo(resized, CV_32FC3);

  ImageArray img;
  img.range = range;
  img.pixels.resize(static_cast<std::size_t>(kImageSide) * kImageSide * 3);
  const double span = range.hi - range.lo;
  std::size_t k = 0;
  for (int y = 0; y < kImageSide; ++y) {
    const auto* row = resized.ptr<float>(y);
    for (int x = 0; x < kImageSide * 3; ++x) {
      const double v = range.lo + span * static_cast<double>(row[x]) / 255.0;
      img.pixels[k++] = static_cast<float>(std::clamp(v, range.lo, range.hi));
    }
  }
  return img;
}

/// Encodes an 8-bit RGB buffer (HWC) as PNG. Used by the synthetic corpus and tests.
inline std::string encode_png(int height, int width, const std::vector<unsigned char>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) throw ShapeError("encode_png: buffer size mismatch");
  cv::Mat m(height, width, CV_8UC3, const_cast<unsigned char*>(rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(m, bgr, cv::COLOR_RGB2BGR);
  std::vector<unsigned char> buf;
  cv::imencode(".png", bgr, buf);
  return {buf.begin(), buf.end()};
}

}  // namespace verifuse
