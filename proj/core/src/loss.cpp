#include "coordflow/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coordflow/filters.hpp"
#include "coordflow/parallel.hpp"

namespace coordflow {

namespace {

std::vector<float> frame_luma(const VideoVolume& v, int t) {
  std::vector<float> luma(size_t(v.width) * v.height);
  const float* p = v.rgb.data() + size_t(t) * v.width * v.height * 3;
  for (size_t i = 0; i < luma.size(); ++i)
    luma[i] = 0.299f * p[i * 3] + 0.587f * p[i * 3 + 1] + 0.114f * p[i * 3 + 2];
  return luma;
}

void normalize_to_unit(std::vector<float>& v) {
  float mx = 0.0f;
  for (float x : v) mx = std::max(mx, x);
  if (mx > 0.0f)
    for (float& x : v) x /= mx;
}

}  // namespace

WeightMap build_weight_map(const VideoVolume& video, const WeightMapCoeffs& coeffs) {
  if (video.empty()) throw std::invalid_argument("build_weight_map: empty video");
  if (coeffs.bias <= 0.0f)
    throw std::invalid_argument("build_weight_map: bias must be > 0");
  if (coeffs.a_lap < 0.0f || coeffs.a_canny < 0.0f || coeffs.a_tv < 0.0f)
    throw std::invalid_argument("build_weight_map: negative coefficient");

  const int w = video.width, h = video.height, frames = video.frames;
  const size_t frame_px = size_t(w) * h;

  std::vector<std::vector<float>> luma(static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t) luma[t] = frame_luma(video, t);

  std::vector<float> lap(frame_px * frames), canny(frame_px * frames),
      tvar(frame_px * frames, 0.0f);
  parallel_for(frames, [&](int64_t lo, int64_t hi) {
    for (int64_t t = lo; t < hi; ++t) {
      auto l = laplacian_abs(luma[t], w, h);
      std::copy(l.begin(), l.end(), lap.begin() + t * frame_px);
      auto c = canny_mask(luma[t], w, h);
      std::copy(c.begin(), c.end(), canny.begin() + t * frame_px);
      if (frames > 1) {
        // per-pixel luma variance over a +-2 frame window
        const int t0 = std::max<int>(0, static_cast<int>(t) - 2);
        const int t1 = std::min<int>(frames - 1, static_cast<int>(t) + 2);
        const int n = t1 - t0 + 1;
        for (size_t i = 0; i < frame_px; ++i) {
          double m = 0.0;
          for (int tt = t0; tt <= t1; ++tt) m += luma[tt][i];
          m /= n;
          double var = 0.0;
          for (int tt = t0; tt <= t1; ++tt) {
            const double d = luma[tt][i] - m;
            var += d * d;
          }
          tvar[t * frame_px + i] = static_cast<float>(var / n);
        }
      }
    }
  });

  normalize_to_unit(lap);
  normalize_to_unit(tvar);

  WeightMap map;
  map.width = w;
  map.height = h;
  map.frames = frames;
  map.coeffs = coeffs;
  map.w.resize(frame_px * frames);
  for (size_t i = 0; i < map.w.size(); ++i)
    map.w[i] = coeffs.bias + coeffs.a_lap * lap[i] + coeffs.a_canny * canny[i] +
               coeffs.a_tv * tvar[i];
  return map;
}

void attach_weight_map(VideoVolume& video, const WeightMap& map) {
  if (map.width != video.width || map.height != video.height ||
      map.frames != video.frames)
    throw std::invalid_argument("attach_weight_map: dimension mismatch");
  video.weights = map.w;
}

Tensor combined_loss(const Tensor& pred, const Tensor& gt, const Tensor& w,
                     float lambda) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("combined_loss: shape mismatch " +
                                shape_str(pred.shape()) + " vs " +
                                shape_str(gt.shape()));
  Tensor delta = sub(pred, gt);
  Tensor per = add(abs(delta), scale(square(delta), lambda));
  return mean(mul(w, per));
}

Tensor layer_loss(const Tensor& layer_rgb, const Tensor& gt, const Tensor& w,
                  const Tensor& softmax_alpha, float lambda) {
  if (layer_rgb.shape() != gt.shape())
    throw std::invalid_argument("layer_loss: shape mismatch " +
                                shape_str(layer_rgb.shape()) + " vs " +
                                shape_str(gt.shape()));
  Tensor delta = sub(layer_rgb, gt);
  Tensor per = add(abs(delta), scale(square(delta), lambda));
  return mean(mul(softmax_alpha, mul(w, per)));
}

LossReport total_loss(const CompositeOut& out, const Tensor& gt, const Tensor& w,
                      float lambda, float gamma) {
  LossReport report;
  report.lambda = lambda;
  report.gamma = gamma;
  report.combined = combined_loss(out.rgb, gt, w, lambda);
  Tensor layer_sum;
  for (size_t i = 0; i < out.layer_rgb.size(); ++i) {
    Tensor alpha_i = slice_cols(out.softmax_alpha, static_cast<int64_t>(i), 1);
    Tensor li = layer_loss(out.layer_rgb[i], gt, w, alpha_i, lambda);
    report.per_layer.push_back(li);
    layer_sum = i == 0 ? li : add(layer_sum, li);
  }
  report.total = out.layer_rgb.empty()
                     ? report.combined
                     : add(report.combined, scale(layer_sum, gamma));
  return report;
}

}  // namespace coordflow
