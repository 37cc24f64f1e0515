#pragma once

#include <vector>

#include "coordflow/model.hpp"
#include "coordflow/tensor.hpp"
#include "coordflow/video.hpp"

namespace coordflow {

struct WeightMapCoeffs {
  float a_lap = 1.0f;
  float a_canny = 1.0f;
  float a_tv = 1.0f;
  float bias = 0.5f;
};

// Per-pixel-per-frame loss weights, computed once from ground truth; never
// participates in the gradient tape.
struct WeightMap {
  int width = 0, height = 0, frames = 0;
  WeightMapCoeffs coeffs;
  std::vector<float> w;  // [t][y][x]
};

// w = bias + a_lap*|lap|_norm + a_canny*canny + a_tv*tvar_norm on Rec.601
// luma. Laplacian and temporal-variance maps are normalized to [0,1] over
// the whole video; the Canny mask already is. Single-frame videos get a zero
// temporal term.
WeightMap build_weight_map(const VideoVolume& video, const WeightMapCoeffs& coeffs);
void attach_weight_map(VideoVolume& video, const WeightMap& map);

struct LossReport {
  Tensor total;
  Tensor combined;
  std::vector<Tensor> per_layer;
  float lambda = 0.25f;
  float gamma = 0.1f;
};

// mean over the batch (and channels) of w * (|delta| + lambda*delta^2).
// pred/gt are [N,3]; w is a gradient-free [N,1] column.
Tensor combined_loss(const Tensor& pred, const Tensor& gt, const Tensor& w,
                     float lambda = 0.25f);

// Layer-specific term: softmax alpha scales the same weighted error, pulling
// a layer's alpha down wherever it reconstructs poorly.
Tensor layer_loss(const Tensor& layer_rgb, const Tensor& gt, const Tensor& w,
                  const Tensor& softmax_alpha, float lambda = 0.25f);

// total = combined(composite) + gamma * sum_i layer_loss(i)
LossReport total_loss(const CompositeOut& out, const Tensor& gt, const Tensor& w,
                      float lambda = 0.25f, float gamma = 0.1f);

}  // namespace coordflow
