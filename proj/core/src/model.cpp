#include "coordflow/model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace coordflow {

Tensor positional_encode(const Tensor& v, const PeConfig& cfg) {
  return fourier_features(v, cfg.num_bands, cfg.include_input,
                          cfg.base_frequency);
}

std::vector<float> positional_encode_value(float v, const PeConfig& cfg) {
  NoGradScope ng;
  Tensor col = Tensor::from_data({1, 1}, {v});
  Tensor out = positional_encode(col, cfg);
  return std::vector<float>(out.data().begin(), out.data().end());
}

// ---- Mlp -------------------------------------------------------------------

Mlp Mlp::create(const std::vector<int>& dims, Rng& rng, bool zero_init_last) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need >= 2 dims");
  Mlp mlp;
  for (size_t li = 0; li + 1 < dims.size(); ++li) {
    const int fan_in = dims[li], fan_out = dims[li + 1];
    const bool last = (li + 2 == dims.size());
    std::vector<float> w(static_cast<size_t>(fan_in) * fan_out, 0.0f);
    if (!(last && zero_init_last)) {
      // He-uniform; the output layer starts small so RGB sits near mid-gray
      // and alpha logits near zero.
      float bound = std::sqrt(6.0f / float(fan_in));
      if (last) bound *= 0.1f;
      for (float& x : w) x = rng.uniform(-bound, bound);
    }
    mlp.weights.push_back(
        Tensor::from_data({fan_in, fan_out}, std::move(w), true));
    mlp.biases.push_back(Tensor::zeros({1, fan_out}, true));
  }
  return mlp;
}

Mlp Mlp::zeros(const std::vector<int>& dims, bool requires_grad) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need >= 2 dims");
  Mlp mlp;
  for (size_t li = 0; li + 1 < dims.size(); ++li) {
    mlp.weights.push_back(
        Tensor::zeros({dims[li], dims[li + 1]}, requires_grad));
    mlp.biases.push_back(Tensor::zeros({1, dims[li + 1]}, requires_grad));
  }
  return mlp;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (weights.empty()) throw std::runtime_error("Mlp::forward: empty network");
  Tensor h = x;
  for (size_t li = 0; li < weights.size(); ++li) {
    h = add(matmul(h, weights[li]), biases[li]);
    if (li + 1 < weights.size()) h = relu(h);
  }
  return h;
}

int64_t Mlp::param_count() const {
  int64_t n = 0;
  for (const Tensor& w : weights) n += w.numel();
  for (const Tensor& b : biases) n += b.numel();
  return n;
}

std::vector<int> Mlp::dims() const {
  std::vector<int> d;
  if (weights.empty()) return d;
  d.push_back(static_cast<int>(weights[0].shape()[0]));
  for (const Tensor& w : weights) d.push_back(static_cast<int>(w.shape()[1]));
  return d;
}

// ---- SimilarityTransform ----------------------------------------------------

SimilarityTransform SimilarityTransform::from_params(float s_raw, float theta,
                                                     float dx, float dy) {
  const float s = std::exp(s_raw);
  const float c = std::cos(theta);
  const float sn = std::sin(theta);
  SimilarityTransform t;
  t.m[0] = s * c;
  t.m[1] = -(s * sn);
  t.m[2] = dx;
  t.m[3] = s * sn;
  t.m[4] = s * c;
  t.m[5] = dy;
  return t;
}

void SimilarityTransform::to_params(float& s_raw, float& theta, float& dx,
                                    float& dy) const {
  const float s = std::hypot(m[0], m[3]);
  s_raw = std::log(s);
  theta = std::atan2(m[3], m[0]);
  dx = m[2];
  dy = m[5];
}

std::pair<float, float> SimilarityTransform::apply(float x, float y) const {
  return {(m[0] * x + m[1] * y) + m[2], (m[3] * x + m[4] * y) + m[5]};
}

bool SimilarityTransform::finite() const {
  for (float v : m)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- layer / model ----------------------------------------------------------

int64_t CoordFlowLayer::param_count() const {
  return flow.mlp.param_count() + color.mlp.param_count();
}

int64_t CoordFlowModel::param_count() const {
  int64_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

int64_t CoordFlowModel::color_param_count() const {
  int64_t n = 0;
  for (const auto& l : layers) n += l.color.mlp.param_count();
  return n;
}

int64_t CoordFlowModel::flow_param_count() const {
  return param_count() - color_param_count();
}

std::vector<Tensor> CoordFlowModel::trainable_params() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    if (!l.flow.frozen_identity) {
      for (size_t i = 0; i < l.flow.mlp.weights.size(); ++i) {
        out.push_back(l.flow.mlp.weights[i]);
        out.push_back(l.flow.mlp.biases[i]);
      }
    }
    for (size_t i = 0; i < l.color.mlp.weights.size(); ++i) {
      out.push_back(l.color.mlp.weights[i]);
      out.push_back(l.color.mlp.biases[i]);
    }
  }
  return out;
}

SimilarityTransform flow_transform(const CoordFlowLayer& layer, float t) {
  if (layer.flow.frozen_identity) return SimilarityTransform::identity();
  NoGradScope ng;
  Tensor tcol = Tensor::from_data({1, 1}, {t});
  Tensor out = layer.flow.mlp.forward(positional_encode(tcol, layer.flow.pe_t));
  const auto v = out.data();
  for (float x : v)
    if (!std::isfinite(x))
      throw std::runtime_error("flow_transform: non-finite network output at t=" +
                               std::to_string(t));
  return SimilarityTransform::from_params(v[0], v[1], v[2], v[3]);
}

LayerBatchOut layer_forward(const CoordFlowLayer& layer, const Tensor& x,
                            const Tensor& y, const Tensor& t) {
  Tensor xp = x, yp = y;
  if (!layer.flow.frozen_identity) {
    Tensor fout = layer.flow.mlp.forward(positional_encode(t, layer.flow.pe_t));
    Tensor s = exp(slice_cols(fout, 0, 1));
    Tensor th = slice_cols(fout, 1, 1);
    Tensor dx = slice_cols(fout, 2, 1);
    Tensor dy = slice_cols(fout, 3, 1);
    Tensor sct = mul(s, cos(th));
    Tensor sst = mul(s, sin(th));
    xp = add(sub(mul(sct, x), mul(sst, y)), dx);
    yp = add(add(mul(sst, x), mul(sct, y)), dy);
  }
  Tensor feats = concat_cols({positional_encode(xp, layer.color.pe_spatial),
                              positional_encode(yp, layer.color.pe_spatial),
                              positional_encode(t, layer.color.pe_temporal)});
  Tensor out = layer.color.mlp.forward(feats);
  return {sigmoid(slice_cols(out, 0, 3)), slice_cols(out, 3, 1)};
}

CompositeOut composite_forward(const CoordFlowModel& model, const Tensor& x,
                               const Tensor& y, const Tensor& t) {
  if (model.layers.empty())
    throw std::invalid_argument("composite_forward: model has no layers");
  std::vector<Tensor> rgbs, alphas;
  rgbs.reserve(model.layers.size());
  alphas.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    LayerBatchOut lo = layer_forward(layer, x, y, t);
    rgbs.push_back(lo.rgb);
    alphas.push_back(lo.alpha_logit);
  }
  Tensor logits = alphas.size() == 1 ? alphas[0] : concat_cols(alphas);
  Tensor w = softmax_lastdim(logits);
  Tensor acc;
  for (size_t i = 0; i < rgbs.size(); ++i) {
    Tensor term = mul(slice_cols(w, static_cast<int64_t>(i), 1), rgbs[i]);
    acc = i == 0 ? term : add(acc, term);
  }
  return {acc, std::move(rgbs), w};
}

FrameEval eval_frame_with_transforms(const CoordFlowModel& model,
                                     const std::vector<SimilarityTransform>& tfs,
                                     const std::vector<float>& x,
                                     const std::vector<float>& y, float t) {
  if (tfs.size() != model.layers.size())
    throw std::invalid_argument("eval_frame: expected one transform per layer");
  NoGradScope ng;
  const int64_t n = static_cast<int64_t>(x.size());
  Tensor tcol = Tensor::from_data({n, 1}, std::vector<float>(x.size(), t));

  std::vector<Tensor> rgbs, alphas;
  for (size_t li = 0; li < model.layers.size(); ++li) {
    const auto& layer = model.layers[li];
    const auto& M = tfs[li];
    std::vector<float> xp(x.size()), yp(x.size());
    for (size_t j = 0; j < x.size(); ++j) {
      xp[j] = (M.m[0] * x[j] + M.m[1] * y[j]) + M.m[2];
      yp[j] = (M.m[3] * x[j] + M.m[4] * y[j]) + M.m[5];
    }
    Tensor xcol = Tensor::from_data({n, 1}, std::move(xp));
    Tensor ycol = Tensor::from_data({n, 1}, std::move(yp));
    Tensor feats =
        concat_cols({positional_encode(xcol, layer.color.pe_spatial),
                     positional_encode(ycol, layer.color.pe_spatial),
                     positional_encode(tcol, layer.color.pe_temporal)});
    Tensor out = layer.color.mlp.forward(feats);
    rgbs.push_back(sigmoid(slice_cols(out, 0, 3)));
    alphas.push_back(slice_cols(out, 3, 1));
  }
  Tensor logits = alphas.size() == 1 ? alphas[0] : concat_cols(alphas);
  Tensor w = softmax_lastdim(logits);
  Tensor acc;
  for (size_t i = 0; i < rgbs.size(); ++i) {
    Tensor term = mul(slice_cols(w, static_cast<int64_t>(i), 1), rgbs[i]);
    acc = i == 0 ? term : add(acc, term);
  }

  FrameEval fe;
  fe.rgb.assign(acc.data().begin(), acc.data().end());
  fe.softmax_alpha.assign(w.data().begin(), w.data().end());
  fe.layer_rgb.reserve(rgbs.size());
  for (const Tensor& r : rgbs)
    fe.layer_rgb.emplace_back(r.data().begin(), r.data().end());
  return fe;
}

// ---- presets ----------------------------------------------------------------

namespace {

struct PresetSpec {
  PeConfig pe_spatial;
  PeConfig pe_temporal;
  PeConfig pe_flow;
  std::vector<int> color_hidden;
  std::vector<int> flow_hidden;
};

const std::map<std::string, PresetSpec>& preset_table() {
  static const std::map<std::string, PresetSpec> table = {
      {"tiny",
       {{8, true, 1.0f}, {4, true, 1.0f}, {4, true, 1.0f}, {56, 56, 56}, {24, 24}}},
      {"tiny_single",
       {{8, true, 1.0f}, {4, true, 1.0f}, {4, true, 1.0f}, {84, 84, 84}, {32, 32}}},
      {"small",
       {{9, true, 1.0f}, {5, true, 1.0f}, {4, true, 1.0f}, {160, 160, 160, 160}, {48, 48}}},
      {"S",
       {{10, true, 1.0f},
        {6, true, 1.0f},
        {4, true, 1.0f},
        {608, 608, 608, 608, 608},
        {96, 96, 96}}},
      {"M",
       {{10, true, 1.0f},
        {6, true, 1.0f},
        {4, true, 1.0f},
        {864, 864, 864, 864, 864},
        {96, 96, 96}}},
      {"L",
       {{10, true, 1.0f},
        {6, true, 1.0f},
        {4, true, 1.0f},
        {1248, 1248, 1248, 1248, 1248},
        {96, 96, 96}}},
  };
  return table;
}

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : preset_table()) names.push_back(k);
  return names;
}

CoordFlowModel make_preset(const std::string& name, int n_layers,
                           uint64_t seed) {
  auto it = preset_table().find(name);
  if (it == preset_table().end())
    throw std::invalid_argument("make_preset: unknown preset '" + name + "'");
  if (n_layers < 1)
    throw std::invalid_argument("make_preset: n_layers must be >= 1");
  const PresetSpec& spec = it->second;

  CoordFlowModel model;
  model.preset = name;
  Rng init_rng(seed + 0x5eed0000u);
  for (int li = 0; li < n_layers; ++li) {
    CoordFlowLayer layer;
    layer.flow.pe_t = spec.pe_flow;
    layer.flow.mlp = Mlp::create(
        with_io(spec.pe_flow.out_dim(), spec.flow_hidden, 4), init_rng, true);
    layer.color.pe_spatial = spec.pe_spatial;
    layer.color.pe_temporal = spec.pe_temporal;
    const int color_in = 2 * spec.pe_spatial.out_dim() + spec.pe_temporal.out_dim();
    layer.color.mlp =
        Mlp::create(with_io(color_in, spec.color_hidden, 4), init_rng, false);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

// ---- checkpoint io ----------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'C', 'F', 'M', '1'};
constexpr uint32_t kModelVersion = 1;

void write_pe(ByteWriter& w, const PeConfig& pe) {
  w.u32(static_cast<uint32_t>(pe.num_bands));
  w.u8(pe.include_input ? 1 : 0);
  w.f32(pe.base_frequency);
}

PeConfig read_pe(ByteReader& r) {
  PeConfig pe;
  pe.num_bands = static_cast<int>(r.u32());
  pe.include_input = r.u8() != 0;
  pe.base_frequency = r.f32();
  return pe;
}

void write_mlp_dims(ByteWriter& w, const Mlp& mlp) {
  const auto dims = mlp.dims();
  w.u32(static_cast<uint32_t>(dims.size()));
  for (int d : dims) w.u32(static_cast<uint32_t>(d));
}

std::vector<int> read_mlp_dims(ByteReader& r) {
  const uint32_t ndims = r.u32();
  std::vector<int> dims(ndims);
  for (auto& d : dims) d = static_cast<int>(r.u32());
  return dims;
}

}  // namespace

void write_model_header(ByteWriter& w, const CoordFlowModel& m) {
  w.raw(kModelMagic, 4);
  w.u32(kModelVersion);
  w.str(m.preset);
  w.u32(static_cast<uint32_t>(m.layers.size()));
  w.u32(static_cast<uint32_t>(m.width));
  w.u32(static_cast<uint32_t>(m.height));
  w.u32(static_cast<uint32_t>(m.frames));
  for (const auto& layer : m.layers) {
    w.u8(layer.flow.frozen_identity ? 1 : 0);
    write_pe(w, layer.flow.pe_t);
    write_mlp_dims(w, layer.flow.mlp);
    write_pe(w, layer.color.pe_spatial);
    write_pe(w, layer.color.pe_temporal);
    write_mlp_dims(w, layer.color.mlp);
  }
}

CoordFlowModel read_model_header(ByteReader& r) {
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("not a coordflow model (bad magic)");
  const uint32_t version = r.u32();
  if (version != kModelVersion)
    throw std::runtime_error("unsupported model version " + std::to_string(version));
  CoordFlowModel m;
  m.preset = r.str();
  const uint32_t n_layers = r.u32();
  m.width = static_cast<int>(r.u32());
  m.height = static_cast<int>(r.u32());
  m.frames = static_cast<int>(r.u32());
  for (uint32_t li = 0; li < n_layers; ++li) {
    CoordFlowLayer layer;
    layer.flow.frozen_identity = r.u8() != 0;
    layer.flow.pe_t = read_pe(r);
    layer.flow.mlp = Mlp::zeros(read_mlp_dims(r), !layer.flow.frozen_identity);
    layer.color.pe_spatial = read_pe(r);
    layer.color.pe_temporal = read_pe(r);
    layer.color.mlp = Mlp::zeros(read_mlp_dims(r), true);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

void write_model(ByteWriter& w, const CoordFlowModel& m) {
  write_model_header(w, m);
  for (const auto& layer : m.layers) {
    const Mlp* nets[2] = {&layer.flow.mlp, &layer.color.mlp};
    for (const Mlp* net : nets)
      for (size_t i = 0; i < net->weights.size(); ++i) {
        w.f32_array(net->weights[i].data().data(), net->weights[i].numel());
        w.f32_array(net->biases[i].data().data(), net->biases[i].numel());
      }
  }
}

CoordFlowModel read_model(ByteReader& r) {
  CoordFlowModel m = read_model_header(r);
  for (auto& layer : m.layers) {
    Mlp* nets[2] = {&layer.flow.mlp, &layer.color.mlp};
    for (Mlp* net : nets)
      for (size_t i = 0; i < net->weights.size(); ++i) {
        r.f32_array(net->weights[i].mutable_data().data(),
                    net->weights[i].numel());
        r.f32_array(net->biases[i].mutable_data().data(),
                    net->biases[i].numel());
      }
  }
  return m;
}

void save_model(const CoordFlowModel& m, const std::string& path) {
  ByteWriter w;
  write_model(w, m);
  write_file(path, w.bytes());
}

CoordFlowModel load_model(const std::string& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  return read_model(r);
}

}  // namespace coordflow
