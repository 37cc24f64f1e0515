#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coordflow/rng.hpp"
#include "coordflow/serialize.hpp"
#include "coordflow/tensor.hpp"

namespace coordflow {

// Fourier positional-encoding configuration. Per encoded scalar the output is
// 2*num_bands values (+1 when the raw input is prepended).
struct PeConfig {
  int num_bands = 0;
  bool include_input = true;
  float base_frequency = 1.0f;

  int out_dim() const { return 2 * num_bands + (include_input ? 1 : 0); }
  bool operator==(const PeConfig&) const = default;
};

Tensor positional_encode(const Tensor& v, const PeConfig& cfg);
std::vector<float> positional_encode_value(float v, const PeConfig& cfg);

// Plain MLP: ReLU on hidden layers, linear output. Weights are [in,out]
// row-major, y = x*W + b.
struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  static Mlp create(const std::vector<int>& dims, Rng& rng, bool zero_init_last);
  static Mlp zeros(const std::vector<int>& dims, bool requires_grad);
  Tensor forward(const Tensor& x) const;
  int64_t param_count() const;
  std::vector<int> dims() const;
  bool empty() const { return weights.empty(); }
};

// 2x3 similarity matrix [[s cos t, -s sin t, dx], [s sin t, s cos t, dy]].
struct SimilarityTransform {
  float m[6] = {1, 0, 0, 0, 1, 0};

  static SimilarityTransform identity() { return {}; }
  static SimilarityTransform from_params(float s_raw, float theta, float dx,
                                         float dy);
  // Recovers (s_raw, theta, dx, dy); s_raw = log(scale).
  void to_params(float& s_raw, float& theta, float& dx, float& dy) const;
  std::pair<float, float> apply(float x, float y) const;
  bool finite() const;
};

// Flow network: encoded t -> (s_raw, theta, dx, dy). A frozen flow net keeps
// its parameters off the tape and always yields the identity transform.
struct FlowNet {
  Mlp mlp;
  PeConfig pe_t;
  bool frozen_identity = false;
};

// Color network: [PE(x'), PE(y'), PE(t)] -> (R, G, B, alpha_logit); the RGB
// triple passes through a sigmoid, the alpha logit stays raw.
struct ColorNet {
  Mlp mlp;
  PeConfig pe_spatial;
  PeConfig pe_temporal;
};

struct CoordFlowLayer {
  FlowNet flow;
  ColorNet color;

  int64_t param_count() const;
};

struct CoordFlowModel {
  std::vector<CoordFlowLayer> layers;
  std::string preset = "custom";
  // normalization metadata: source video dimensions
  int width = 0, height = 0, frames = 0;

  int n_layers() const { return static_cast<int>(layers.size()); }
  int64_t param_count() const;
  int64_t color_param_count() const;
  int64_t flow_param_count() const;
  // Canonical order: per layer, flow then color, each linear as w,b.
  // Frozen flow nets are excluded.
  std::vector<Tensor> trainable_params() const;
};

// Normalized coordinate for pixel/frame index i on an axis of n samples.
inline float norm_coord(int64_t i, int64_t n) {
  return n > 1 ? 2.0f * float(i) / float(n - 1) - 1.0f : 0.0f;
}
inline float norm_coord_f(double i, int64_t n) {
  return n > 1 ? static_cast<float>(2.0 * i / double(n - 1) - 1.0) : 0.0f;
}

// Evaluates the flow net at one time and forms the similarity matrix.
// Throws if the network output is not finite.
SimilarityTransform flow_transform(const CoordFlowLayer& layer, float t);

struct LayerBatchOut {
  Tensor rgb;          // [N,3], sigmoid applied
  Tensor alpha_logit;  // [N,1]
};

struct CompositeOut {
  Tensor rgb;                      // [N,3] softmax-weighted blend
  std::vector<Tensor> layer_rgb;   // per-layer [N,3]
  Tensor softmax_alpha;            // [N,n]
};

// Batched differentiable forward. x, y, t are [N,1] columns of normalized
// coordinates.
LayerBatchOut layer_forward(const CoordFlowLayer& layer, const Tensor& x,
                            const Tensor& y, const Tensor& t);
CompositeOut composite_forward(const CoordFlowModel& model, const Tensor& x,
                               const Tensor& y, const Tensor& t);

// Inference path shared by render/stabilize: each layer's flow output is
// replaced by an externally supplied transform for this frame time.
struct FrameEval {
  std::vector<float> rgb;                      // [N*3]
  std::vector<float> softmax_alpha;            // [N*n]
  std::vector<std::vector<float>> layer_rgb;   // n x [N*3]
};
FrameEval eval_frame_with_transforms(const CoordFlowModel& model,
                                     const std::vector<SimilarityTransform>& tfs,
                                     const std::vector<float>& x,
                                     const std::vector<float>& y, float t);

// Presets. "tiny" is the desk-scale default; "tiny_single" is the
// budget-matched single-layer variant the ablations use; S/M/L land within
// a few percent of 3.13M / 6.11M / 12.68M parameters at two layers.
CoordFlowModel make_preset(const std::string& name, int n_layers,
                           uint64_t seed = 0);
std::vector<std::string> preset_names();

// Checkpoint container (magic CFM1): header + raw little-endian f32 blobs in
// canonical order. The header alone describes the architecture; the codec
// reuses it and supplies the weights its own way.
void write_model_header(ByteWriter& w, const CoordFlowModel& m);
CoordFlowModel read_model_header(ByteReader& r);  // zero-weight skeleton
void write_model(ByteWriter& w, const CoordFlowModel& m);
CoordFlowModel read_model(ByteReader& r);
void save_model(const CoordFlowModel& m, const std::string& path);
CoordFlowModel load_model(const std::string& path);

}  // namespace coordflow
