#pragma once

#include <vector>

namespace coordflow {

// Single-channel float image ops used by the loss weighting. Images are
// row-major [h][w]; borders are clamped to the nearest pixel.

std::vector<float> gaussian_blur(const std::vector<float>& img, int w, int h,
                                 float sigma);

// |3x3 Laplacian| with kernel [0,1,0; 1,-4,1; 0,1,0].
std::vector<float> laplacian_abs(const std::vector<float>& img, int w, int h);

// Classic Canny: Gaussian smoothing, Sobel gradients, non-maximum
// suppression, hysteresis with thresholds at the given percentiles of the
// nonzero gradient magnitude. Returns a {0,1} mask.
std::vector<float> canny_mask(const std::vector<float>& img, int w, int h,
                              float sigma = 1.4f, float low_pct = 0.70f,
                              float high_pct = 0.90f);

}  // namespace coordflow
