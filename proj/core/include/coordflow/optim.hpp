#pragma once

#include <cstdint>
#include <vector>

#include "coordflow/serialize.hpp"
#include "coordflow/tensor.hpp"

namespace coordflow {

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// Decoupled-weight-decay Adam over a fixed parameter list. Moment buffers
// shape-match their parameters; the learning rate comes in per step so a
// schedule can drive it.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});

  void step(float lr);
  void zero_grad();
  int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

  void serialize(ByteWriter& w) const;
  void deserialize(ByteReader& r);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t t_ = 0;
  AdamWConfig cfg_;
};

struct CosineSchedule {
  float base_lr = 5e-4f;
  float min_lr = 0.0f;
  int total_epochs = 53;
};

// min_lr + 0.5*(base_lr - min_lr)*(1 + cos(pi*epoch/total_epochs)).
// epoch must lie in [0, total_epochs].
float lr_at(const CosineSchedule& s, int epoch);

}  // namespace coordflow
