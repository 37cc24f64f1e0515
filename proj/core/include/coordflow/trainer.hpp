#pragma once

#include <functional>
#include <string>
#include <vector>

#include "coordflow/loss.hpp"
#include "coordflow/model.hpp"
#include "coordflow/optim.hpp"
#include "coordflow/rng.hpp"
#include "coordflow/video.hpp"

namespace coordflow {

enum class Ablation { kFull, kNoLayers, kNoLayersNoFlow };

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct TrainConfig {
  int epochs = 53;
  float base_lr = 5e-4f;
  float min_lr = 0.0f;
  int batch_size = 65536;
  uint64_t seed = 0;
  std::string preset = "tiny";
  int n_layers = 2;
  Ablation ablation = Ablation::kFull;
  int stride = 1;    // train on every stride-th pixel in x and y
  int stride_t = 1;  // and every stride_t-th frame
  float lambda = 0.25f;
  float gamma = 0.1f;
  WeightMapCoeffs weight_map;
  AdamWConfig adamw;
  // points evaluated for the per-epoch PSNR; larger grids are subsampled
  int64_t validation_max_points = 262144;
  std::string checkpoint_path;
  int checkpoint_every = 0;  // epochs; 0 disables
  std::function<void(const struct EpochStats&)> on_epoch;  // progress hook
};

struct EpochStats {
  int epoch = 0;
  float lr = 0.0f;
  double loss = 0.0;
  double psnr = 0.0;
};

struct TrainResult {
  CoordFlowModel model;
  std::vector<EpochStats> log;
};

struct Batch {
  std::vector<float> x, y, t;  // normalized coordinates
  std::vector<float> gt;       // [N*3]
  std::vector<float> w;        // [N]
  std::vector<int64_t> px, py, pt;  // source pixel indices
};

// Uniform random draws over the strided pixel lattice. Requires an attached
// weight map.
Batch sample_batch(const VideoVolume& video, Rng& rng, int batch_size,
                   int stride = 1, int stride_t = 1);

// Full training run. Builds the weight map if the volume has none, picks the
// model per the ablation mode, runs epochs * ceil(pixels/batch) AdamW steps
// under the cosine schedule, and logs per-epoch PSNR on the training lattice.
// Throws with a diagnostic if the loss goes non-finite.
TrainResult train(const VideoVolume& video, const TrainConfig& cfg);

// Continues a checkpointed run up to cfg.epochs. Bit-identical to the
// uninterrupted run with the same thread settings.
TrainResult resume_training(const std::string& checkpoint_path,
                            const VideoVolume& video, const TrainConfig& cfg);

// PSNR of the model against the (strided) video lattice, 100 dB cap.
double evaluate_psnr(const CoordFlowModel& model, const VideoVolume& video,
                     int stride = 1, int stride_t = 1);

void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& log);

}  // namespace coordflow
