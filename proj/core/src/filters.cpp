#include "coordflow/filters.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace coordflow {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline float at(const std::vector<float>& img, int w, int h, int x, int y) {
  return img[size_t(clampi(y, 0, h - 1)) * w + clampi(x, 0, w - 1)];
}

}  // namespace

std::vector<float> gaussian_blur(const std::vector<float>& img, int w, int h,
                                 float sigma) {
  if (sigma <= 0.0f) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  float total = 0.0f;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5f * float(i) * float(i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (float& k : kernel) k /= total;

  std::vector<float> tmp(img.size()), out(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * at(img, w, h, x + i, y);
      tmp[size_t(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * at(tmp, w, h, x, y + i);
      out[size_t(y) * w + x] = acc;
    }
  return out;
}

std::vector<float> laplacian_abs(const std::vector<float>& img, int w, int h) {
  std::vector<float> out(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = at(img, w, h, x - 1, y) + at(img, w, h, x + 1, y) +
                      at(img, w, h, x, y - 1) + at(img, w, h, x, y + 1) -
                      4.0f * at(img, w, h, x, y);
      out[size_t(y) * w + x] = std::fabs(v);
    }
  return out;
}

std::vector<float> canny_mask(const std::vector<float>& img, int w, int h,
                              float sigma, float low_pct, float high_pct) {
  const std::vector<float> smooth = gaussian_blur(img, w, h, sigma);

  std::vector<float> gx(img.size()), gy(img.size()), mag(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float sx =
          (at(smooth, w, h, x + 1, y - 1) + 2.0f * at(smooth, w, h, x + 1, y) +
           at(smooth, w, h, x + 1, y + 1)) -
          (at(smooth, w, h, x - 1, y - 1) + 2.0f * at(smooth, w, h, x - 1, y) +
           at(smooth, w, h, x - 1, y + 1));
      const float sy =
          (at(smooth, w, h, x - 1, y + 1) + 2.0f * at(smooth, w, h, x, y + 1) +
           at(smooth, w, h, x + 1, y + 1)) -
          (at(smooth, w, h, x - 1, y - 1) + 2.0f * at(smooth, w, h, x, y - 1) +
           at(smooth, w, h, x + 1, y - 1));
      const size_t i = size_t(y) * w + x;
      gx[i] = sx;
      gy[i] = sy;
      mag[i] = std::hypot(sx, sy);
    }

  // non-maximum suppression with 4-way direction quantization
  std::vector<float> thin(img.size(), 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = size_t(y) * w + x;
      if (mag[i] == 0.0f) continue;
      const float angle = std::atan2(gy[i], gx[i]);
      // quantize to 0, 45, 90, 135 degrees
      float deg = angle * 180.0f / 3.14159265f;
      if (deg < 0) deg += 180.0f;
      float n1, n2;
      if (deg < 22.5f || deg >= 157.5f) {
        n1 = at(mag, w, h, x - 1, y);
        n2 = at(mag, w, h, x + 1, y);
      } else if (deg < 67.5f) {
        n1 = at(mag, w, h, x + 1, y - 1);
        n2 = at(mag, w, h, x - 1, y + 1);
      } else if (deg < 112.5f) {
        n1 = at(mag, w, h, x, y - 1);
        n2 = at(mag, w, h, x, y + 1);
      } else {
        n1 = at(mag, w, h, x - 1, y - 1);
        n2 = at(mag, w, h, x + 1, y + 1);
      }
      if (mag[i] >= n1 && mag[i] >= n2) thin[i] = mag[i];
    }

  // hysteresis thresholds from percentiles of the nonzero magnitudes
  std::vector<float> nonzero;
  nonzero.reserve(mag.size());
  for (float v : mag)
    if (v > 0.0f) nonzero.push_back(v);
  if (nonzero.empty()) return std::vector<float>(img.size(), 0.0f);
  auto pct = [&nonzero](float p) {
    size_t k = static_cast<size_t>(p * double(nonzero.size() - 1));
    std::nth_element(nonzero.begin(), nonzero.begin() + k, nonzero.end());
    return nonzero[k];
  };
  const float high = pct(high_pct);
  const float low = std::min(pct(low_pct), high);

  std::vector<float> out(img.size(), 0.0f);
  std::deque<size_t> queue;
  for (size_t i = 0; i < thin.size(); ++i)
    if (thin[i] >= high && thin[i] > 0.0f) {
      out[i] = 1.0f;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    const size_t i = queue.front();
    queue.pop_front();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const size_t j = size_t(ny) * w + nx;
        if (out[j] == 0.0f && thin[j] >= low && thin[j] > 0.0f) {
          out[j] = 1.0f;
          queue.push_back(j);
        }
      }
  }
  return out;
}

}  // namespace coordflow
