#include "coordflow/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coordflow {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void AdamW::step(float lr) {
  ++t_;
  const float b1 = cfg_.beta1, b2 = cfg_.beta2;
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (!p.has_grad())
      throw std::runtime_error("adamw: missing grad for parameter " +
                               std::to_string(pi) + " shape " +
                               shape_str(p.shape()));
    const float* g = p.grad().data();
    float* w = p.mutable_data().data();
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                    cfg_.weight_decay * w[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void AdamW::serialize(ByteWriter& w) const {
  w.i64(t_);
  w.f32(cfg_.beta1);
  w.f32(cfg_.beta2);
  w.f32(cfg_.eps);
  w.f32(cfg_.weight_decay);
  w.u32(static_cast<uint32_t>(params_.size()));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    w.u64(m_[pi].size());
    w.f32_array(m_[pi].data(), m_[pi].size());
    w.f32_array(v_[pi].data(), v_[pi].size());
  }
}

void AdamW::deserialize(ByteReader& r) {
  t_ = r.i64();
  cfg_.beta1 = r.f32();
  cfg_.beta2 = r.f32();
  cfg_.eps = r.f32();
  cfg_.weight_decay = r.f32();
  const uint32_t count = r.u32();
  if (count != params_.size())
    throw std::runtime_error("adamw: checkpoint has " + std::to_string(count) +
                             " params, model has " +
                             std::to_string(params_.size()));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    const uint64_t n = r.u64();
    if (n != m_[pi].size())
      throw std::runtime_error("adamw: moment size mismatch at param " +
                               std::to_string(pi));
    r.f32_array(m_[pi].data(), n);
    r.f32_array(v_[pi].data(), n);
  }
}

float lr_at(const CosineSchedule& s, int epoch) {
  if (s.total_epochs < 1)
    throw std::invalid_argument("lr_at: total_epochs must be >= 1");
  if (s.min_lr < 0.0f || s.min_lr > s.base_lr)
    throw std::invalid_argument("lr_at: need 0 <= min_lr <= base_lr");
  if (epoch < 0 || epoch > s.total_epochs)
    throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) +
                                " outside [0," + std::to_string(s.total_epochs) + "]");
  const double phase = 3.14159265358979323846 * double(epoch) / double(s.total_epochs);
  return static_cast<float>(s.min_lr +
                            0.5 * (double(s.base_lr) - s.min_lr) * (1.0 + std::cos(phase)));
}

}  // namespace coordflow
