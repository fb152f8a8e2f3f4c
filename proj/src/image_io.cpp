#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "apl/data.hpp"

namespace apl {

namespace {

Tensor from_mat_rgb(const cv::Mat& bgr) {
  Tensor t(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      t.at(0, y, x) = row[x][2] / 255.0;  // R
      t.at(1, y, x) = row[x][1] / 255.0;  // G
      t.at(2, y, x) = row[x][0] / 255.0;  // B
    }
  }
  return t;
}

}  // namespace

std::optional<Tensor> read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) return std::nullopt;
  return from_mat_rgb(m);
}

std::optional<Tensor> read_gray(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) return std::nullopt;
  Tensor t(1, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const uchar* row = m.ptr<uchar>(y);
    for (int x = 0; x < m.cols; ++x) t.at(0, y, x) = row[x] / 255.0;
  }
  return t;
}

void write_gray_png(const Tensor& map, const std::filesystem::path& path) {
  if (map.c != 1) throw ShapeError("write_gray_png: expected a single-channel map");
  cv::Mat m(map.h, map.w, CV_8UC1);
  for (int y = 0; y < map.h; ++y) {
    uchar* row = m.ptr<uchar>(y);
    for (int x = 0; x < map.w; ++x)
      row[x] = static_cast<uchar>(std::lround(std::clamp(map.at(0, y, x), 0.0, 1.0) * 255.0));
  }
  if (!cv::imwrite(path.string(), m)) throw ConfigError("failed to write " + path.string());
}

void write_rgb_png(const Tensor& image, const std::filesystem::path& path) {
  if (image.c != 3) throw ShapeError("write_rgb_png: expected a 3-channel image");
  cv::Mat m(image.h, image.w, CV_8UC3);
  for (int y = 0; y < image.h; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.w; ++x) {
      row[x][2] = static_cast<uchar>(std::lround(std::clamp(image.at(0, y, x), 0.0, 1.0) * 255.0));
      row[x][1] = static_cast<uchar>(std::lround(std::clamp(image.at(1, y, x), 0.0, 1.0) * 255.0));
      row[x][0] = static_cast<uchar>(std::lround(std::clamp(image.at(2, y, x), 0.0, 1.0) * 255.0));
    }
  }
  if (!cv::imwrite(path.string(), m)) throw ConfigError("failed to write " + path.string());
}

Tensor resize_image(const Tensor& image, int out_h, int out_w) {
  if (image.h == out_h && image.w == out_w) return image;
  Tensor out(image.c, out_h, out_w);
  for (int ci = 0; ci < image.c; ++ci) {
    cv::Mat src(image.h, image.w, CV_64FC1, const_cast<double*>(image.v.data()) + static_cast<size_t>(ci) * image.plane());
    cv::Mat dst(out_h, out_w, CV_64FC1, out.v.data() + static_cast<size_t>(ci) * out.plane());
    cv::resize(src, dst, {out_w, out_h}, 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

Tensor resize_mask_nearest(const Tensor& mask, int out_h, int out_w) {
  if (mask.h == out_h && mask.w == out_w) return mask;
  Tensor out(mask.c, out_h, out_w);
  for (int ci = 0; ci < mask.c; ++ci) {
    cv::Mat src(mask.h, mask.w, CV_64FC1, const_cast<double*>(mask.v.data()) + static_cast<size_t>(ci) * mask.plane());
    cv::Mat dst(out_h, out_w, CV_64FC1, out.v.data() + static_cast<size_t>(ci) * out.plane());
    cv::resize(src, dst, {out_w, out_h}, 0, 0, cv::INTER_NEAREST);
  }
  return out;
}

}  // namespace apl
