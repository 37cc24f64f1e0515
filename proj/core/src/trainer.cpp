#include "coordflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "coordflow/apps.hpp"

namespace coordflow {

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::kFull;
  if (s == "no_layers") return Ablation::kNoLayers;
  if (s == "no_layers_no_flow") return Ablation::kNoLayersNoFlow;
  throw std::invalid_argument("unknown ablation mode '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoLayers: return "no_layers";
    default: return "no_layers_no_flow";
  }
}

namespace {

// Budget-matched single-layer preset for the no-layers ablations, mirroring
// the paper's "two layers S vs one layer M" pairing.
std::string single_layer_preset(const std::string& preset) {
  if (preset == "tiny") return "tiny_single";
  if (preset == "S") return "M";
  if (preset == "M") return "L";
  return preset;
}

void freeze_flow(CoordFlowModel& model) {
  for (auto& layer : model.layers) {
    layer.flow.frozen_identity = true;
    for (auto& w : layer.flow.mlp.weights) {
      auto d = w.mutable_data();
      std::fill(d.begin(), d.end(), 0.0f);
      w.node()->requires_grad = false;
    }
    for (auto& b : layer.flow.mlp.biases) {
      auto d = b.mutable_data();
      std::fill(d.begin(), d.end(), 0.0f);
      b.node()->requires_grad = false;
    }
  }
}

CoordFlowModel build_model(const TrainConfig& cfg) {
  CoordFlowModel model;
  switch (cfg.ablation) {
    case Ablation::kFull:
      model = make_preset(cfg.preset, cfg.n_layers, cfg.seed);
      break;
    case Ablation::kNoLayers:
      model = make_preset(single_layer_preset(cfg.preset), 1, cfg.seed);
      break;
    case Ablation::kNoLayersNoFlow:
      model = make_preset(single_layer_preset(cfg.preset), 1, cfg.seed);
      freeze_flow(model);
      break;
  }
  return model;
}

struct ValidationGrid {
  std::vector<std::vector<float>> xs, ys;  // per included frame
  std::vector<float> times;
  std::vector<std::vector<size_t>> gt_index;  // pixel index into the volume
  int64_t total_points = 0;
};

ValidationGrid make_validation_grid(const VideoVolume& video, int stride,
                                    int stride_t, int64_t max_points) {
  const int nx = (video.width + stride - 1) / stride;
  const int ny = (video.height + stride - 1) / stride;
  const int nt = (video.frames + stride_t - 1) / stride_t;
  const int64_t total = int64_t(nx) * ny * nt;
  int64_t step = 1;
  if (max_points > 0 && total > max_points) step = (total + max_points - 1) / max_points;

  ValidationGrid grid;
  grid.xs.resize(static_cast<size_t>(nt));
  grid.ys.resize(static_cast<size_t>(nt));
  grid.gt_index.resize(static_cast<size_t>(nt));
  grid.times.resize(static_cast<size_t>(nt));
  for (int it = 0; it < nt; ++it)
    grid.times[it] = norm_coord(int64_t(it) * stride_t, video.frames);

  for (int64_t flat = 0; flat < total; flat += step) {
    const int ix = static_cast<int>(flat % nx);
    const int iy = static_cast<int>((flat / nx) % ny);
    const int it = static_cast<int>(flat / (int64_t(nx) * ny));
    const int px = ix * stride, py = iy * stride, pt = it * stride_t;
    grid.xs[it].push_back(norm_coord(px, video.width));
    grid.ys[it].push_back(norm_coord(py, video.height));
    grid.gt_index[it].push_back(video.pixel_index(px, py, pt));
    ++grid.total_points;
  }
  return grid;
}

double grid_psnr(const CoordFlowModel& model, const VideoVolume& video,
                 const ValidationGrid& grid) {
  double se = 0.0;
  int64_t n = 0;
  for (size_t it = 0; it < grid.times.size(); ++it) {
    if (grid.xs[it].empty()) continue;
    std::vector<SimilarityTransform> tfs;
    tfs.reserve(model.layers.size());
    for (const auto& layer : model.layers)
      tfs.push_back(flow_transform(layer, grid.times[it]));
    FrameEval fe = eval_frame_with_transforms(model, tfs, grid.xs[it],
                                              grid.ys[it], grid.times[it]);
    for (size_t p = 0; p < grid.gt_index[it].size(); ++p) {
      const float* gt = video.rgb.data() + grid.gt_index[it][p] * 3;
      for (int c = 0; c < 3; ++c) {
        const double d = double(fe.rgb[p * 3 + c]) - double(gt[c]);
        se += d * d;
      }
      ++n;
    }
  }
  const double mse = se / double(n * 3);
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

constexpr char kCheckpointMagic[4] = {'C', 'F', 'T', '1'};
constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const CoordFlowModel& model,
                     const AdamW& opt, int epochs_done, const Rng& rng,
                     const std::vector<EpochStats>& log) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(epochs_done));
  w.str(rng.state_string());
  write_model(w, model);
  opt.serialize(w);
  w.u32(static_cast<uint32_t>(log.size()));
  for (const auto& e : log) {
    w.u32(static_cast<uint32_t>(e.epoch));
    w.f32(e.lr);
    w.f64(e.loss);
    w.f64(e.psnr);
  }
  write_file(path, w.bytes());
}

TrainResult run_epochs(const VideoVolume& video_in, const TrainConfig& cfg,
                       CoordFlowModel model, AdamW& opt, Rng& rng,
                       int start_epoch, std::vector<EpochStats> log) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (video_in.empty()) throw std::invalid_argument("train: empty video");

  VideoVolume video = video_in;
  if (video.weights.empty())
    attach_weight_map(video, build_weight_map(video, cfg.weight_map));

  model.width = video.width;
  model.height = video.height;
  model.frames = video.frames;

  const int nx = (video.width + cfg.stride - 1) / cfg.stride;
  const int ny = (video.height + cfg.stride - 1) / cfg.stride;
  const int nt = (video.frames + cfg.stride_t - 1) / cfg.stride_t;
  const int64_t train_pixels = int64_t(nx) * ny * nt;
  const int64_t steps_per_epoch =
      std::max<int64_t>(1, (train_pixels + cfg.batch_size - 1) / cfg.batch_size);

  const CosineSchedule sched{cfg.base_lr, cfg.min_lr, cfg.epochs};
  const ValidationGrid val = make_validation_grid(
      video, cfg.stride, cfg.stride_t, cfg.validation_max_points);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const float lr = lr_at(sched, epoch);
    double loss_acc = 0.0;
    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      Batch batch =
          sample_batch(video, rng, cfg.batch_size, cfg.stride, cfg.stride_t);
      const int64_t n = static_cast<int64_t>(batch.x.size());
      Tensor x = Tensor::from_data({n, 1}, std::move(batch.x));
      Tensor y = Tensor::from_data({n, 1}, std::move(batch.y));
      Tensor t = Tensor::from_data({n, 1}, std::move(batch.t));
      Tensor gt = Tensor::from_data({n, 3}, std::move(batch.gt));
      Tensor w = Tensor::from_data({n, 1}, std::move(batch.w));

      CompositeOut out = composite_forward(model, x, y, t);
      LossReport rep = total_loss(out, gt, w, cfg.lambda, cfg.gamma);
      const float loss_val = rep.total.scalar();
      if (!std::isfinite(loss_val)) {
        double gt_mean = 0.0;
        for (float v : gt.data()) gt_mean += v;
        gt_mean /= double(gt.numel());
        char msg[256];
        std::snprintf(msg, sizeof(msg),
                      "train: non-finite loss at epoch %d step %lld "
                      "(lr=%.6g, batch=%lld coords, gt mean=%.4f)",
                      epoch, static_cast<long long>(step), double(lr),
                      static_cast<long long>(n), gt_mean);
        throw std::runtime_error(msg);
      }
      backward(rep.total);
      opt.step(lr);
      opt.zero_grad();
      loss_acc += loss_val;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss = loss_acc / double(steps_per_epoch);
    stats.psnr = grid_psnr(model, video, val);
    log.push_back(stats);

    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      save_checkpoint(cfg.checkpoint_path, model, opt, epoch + 1, rng, log);
    }
    if (cfg.on_epoch) cfg.on_epoch(stats);
  }

  return {std::move(model), std::move(log)};
}

}  // namespace

Batch sample_batch(const VideoVolume& video, Rng& rng, int batch_size,
                   int stride, int stride_t) {
  if (video.empty()) throw std::invalid_argument("sample_batch: empty video");
  if (video.weights.empty())
    throw std::invalid_argument("sample_batch: no weight map attached");
  if (stride < 1 || stride_t < 1)
    throw std::invalid_argument("sample_batch: strides must be >= 1");

  const int nx = (video.width + stride - 1) / stride;
  const int ny = (video.height + stride - 1) / stride;
  const int nt = (video.frames + stride_t - 1) / stride_t;
  const int64_t total = int64_t(nx) * ny * nt;

  Batch b;
  b.x.reserve(batch_size);
  b.y.reserve(batch_size);
  b.t.reserve(batch_size);
  b.gt.reserve(size_t(batch_size) * 3);
  b.w.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const int64_t flat = rng.uniform_int(total);
    const int64_t px = (flat % nx) * stride;
    const int64_t py = ((flat / nx) % ny) * stride;
    const int64_t pt = (flat / (int64_t(nx) * ny)) * stride_t;
    b.x.push_back(norm_coord(px, video.width));
    b.y.push_back(norm_coord(py, video.height));
    b.t.push_back(norm_coord(pt, video.frames));
    const size_t idx = video.pixel_index(static_cast<int>(px),
                                         static_cast<int>(py),
                                         static_cast<int>(pt));
    b.gt.push_back(video.rgb[idx * 3]);
    b.gt.push_back(video.rgb[idx * 3 + 1]);
    b.gt.push_back(video.rgb[idx * 3 + 2]);
    b.w.push_back(video.weights[idx]);
    b.px.push_back(px);
    b.py.push_back(py);
    b.pt.push_back(pt);
  }
  return b;
}

TrainResult train(const VideoVolume& video, const TrainConfig& cfg) {
  CoordFlowModel model = build_model(cfg);
  AdamW opt(model.trainable_params(), cfg.adamw);
  Rng rng(cfg.seed);
  return run_epochs(video, cfg, std::move(model), opt, rng, 0, {});
}

TrainResult resume_training(const std::string& checkpoint_path,
                            const VideoVolume& video, const TrainConfig& cfg) {
  const auto bytes = read_file(checkpoint_path);
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a training checkpoint (bad magic)");
  if (r.u32() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version");
  const int epochs_done = static_cast<int>(r.u32());
  Rng rng;
  rng.set_state_string(r.str());
  CoordFlowModel model = read_model(r);
  AdamW opt(model.trainable_params(), cfg.adamw);
  opt.deserialize(r);
  std::vector<EpochStats> log(r.u32());
  for (auto& e : log) {
    e.epoch = static_cast<int>(r.u32());
    e.lr = r.f32();
    e.loss = r.f64();
    e.psnr = r.f64();
  }
  if (model.width != video.width || model.height != video.height ||
      model.frames != video.frames)
    throw std::runtime_error("resume: video dimensions do not match checkpoint");
  return run_epochs(video, cfg, std::move(model), opt, rng, epochs_done,
                    std::move(log));
}

double evaluate_psnr(const CoordFlowModel& model, const VideoVolume& video,
                     int stride, int stride_t) {
  const ValidationGrid grid = make_validation_grid(video, stride, stride_t, 0);
  return grid_psnr(model, video, grid);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& log) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write " + path);
  f << "epoch,lr,loss,psnr\n";
  char line[128];
  for (const auto& e : log) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.12g,%.12g\n", e.epoch,
                  double(e.lr), e.loss, e.psnr);
    f << line;
  }
}

}  // namespace coordflow
