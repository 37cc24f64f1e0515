#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coordflow/model.hpp"
#include "coordflow/video.hpp"

namespace coordflow {

// Per-frame similarity transforms for one layer.
using Trajectory = std::vector<SimilarityTransform>;

// Normalized times of the model's training frames.
std::vector<float> frame_times(int frames);

// Dense evaluation of the composite on a pixel-center grid. Pure function of
// (model, times, resolution).
VideoVolume render(const CoordFlowModel& model, const std::vector<float>& times,
                   int out_w, int out_h);
// Convenience: training times and resolution from the model header.
VideoVolume render(const CoordFlowModel& model);

// Same evaluation but each layer's flow output is replaced by the supplied
// per-frame transform (outer index: frame, inner: layer).
VideoVolume render_with_transforms(
    const CoordFlowModel& model,
    const std::vector<std::vector<SimilarityTransform>>& transforms,
    const std::vector<float>& times, int out_w, int out_h);

// Spatial scale renders W*scale_xy x H*scale_xy pixels at fractional grid
// positions of the original pixel lattice; temporal scale renders
// (T-1)*scale_t + 1 interpolated frame times. Scale 1 reproduces render().
VideoVolume upsample(const CoordFlowModel& model, int scale_xy, int scale_t);

struct SegmentationMap {
  int width = 0, height = 0, frames = 0, n_layers = 0;
  std::vector<uint8_t> index;  // [t][y][x] argmax layer
  std::vector<float> weights;  // [t][y][x][n] softmax alphas
};

SegmentationMap segment(const CoordFlowModel& model,
                        const std::vector<float>& times, int out_w, int out_h);

// Single layer's RGB with no compositing.
VideoVolume inpaint(const CoordFlowModel& model, int layer_index,
                    const std::vector<float>& times, int out_w, int out_h);

Trajectory extract_trajectory(const CoordFlowModel& model, int layer_index,
                              const std::vector<float>& times);

// Boxcar moving average in (s_raw, theta, dx, dy) parameter space; matrices
// are rebuilt afterwards so the similarity structure survives. Shrinking
// windows at the ends; window must be odd. Window 1 is the identity.
Trajectory smooth_trajectory(const Trajectory& traj, int window);

// Appendix stabilization: render with each layer's trajectory replaced by its
// smoothed version. Window 1 reproduces render() bit for bit.
VideoVolume stabilize(const CoordFlowModel& model, int window,
                      const std::vector<float>& times, int out_w, int out_h);

void save_segmentation(const SegmentationMap& map, const std::string& dir);
void save_trajectory_csv(const Trajectory& traj, const std::vector<float>& times,
                         const std::string& path);

}  // namespace coordflow
