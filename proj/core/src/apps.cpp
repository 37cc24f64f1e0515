#include "coordflow/apps.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "coordflow/parallel.hpp"
#include "coordflow/serialize.hpp"

namespace coordflow {

std::vector<float> frame_times(int frames) {
  std::vector<float> times(static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t) times[t] = norm_coord(t, frames);
  return times;
}

namespace {

void pixel_grid(int w, int h, std::vector<float>& xs, std::vector<float>& ys) {
  xs.resize(size_t(w) * h);
  ys.resize(size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      xs[size_t(y) * w + x] = norm_coord(x, w);
      ys[size_t(y) * w + x] = norm_coord(y, h);
    }
}

std::vector<std::vector<SimilarityTransform>> model_transforms(
    const CoordFlowModel& model, const std::vector<float>& times) {
  std::vector<std::vector<SimilarityTransform>> tfs(times.size());
  for (size_t fi = 0; fi < times.size(); ++fi) {
    tfs[fi].reserve(model.layers.size());
    for (const auto& layer : model.layers)
      tfs[fi].push_back(flow_transform(layer, times[fi]));
  }
  return tfs;
}

}  // namespace

VideoVolume render_with_transforms(
    const CoordFlowModel& model,
    const std::vector<std::vector<SimilarityTransform>>& transforms,
    const std::vector<float>& times, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw std::invalid_argument("render: resolution must be >= 1x1");
  if (transforms.size() != times.size())
    throw std::invalid_argument("render: one transform set per frame required");

  std::vector<float> xs, ys;
  pixel_grid(out_w, out_h, xs, ys);

  VideoVolume out;
  out.width = out_w;
  out.height = out_h;
  out.frames = static_cast<int>(times.size());
  out.rgb.resize(size_t(out_w) * out_h * times.size() * 3);
  out.source = "render";

  parallel_for(static_cast<int64_t>(times.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t fi = lo; fi < hi; ++fi) {
      FrameEval fe =
          eval_frame_with_transforms(model, transforms[fi], xs, ys, times[fi]);
      std::copy(fe.rgb.begin(), fe.rgb.end(),
                out.rgb.begin() + size_t(fi) * out_w * out_h * 3);
    }
  });
  return out;
}

VideoVolume render(const CoordFlowModel& model, const std::vector<float>& times,
                   int out_w, int out_h) {
  return render_with_transforms(model, model_transforms(model, times), times,
                                out_w, out_h);
}

VideoVolume render(const CoordFlowModel& model) {
  if (model.width < 1 || model.height < 1 || model.frames < 1)
    throw std::runtime_error("render: model has no video dimensions");
  return render(model, frame_times(model.frames), model.width, model.height);
}

VideoVolume upsample(const CoordFlowModel& model, int scale_xy, int scale_t) {
  if (scale_xy < 1 || scale_t < 1)
    throw std::invalid_argument("upsample: scales must be >= 1");
  if (model.width < 1 || model.frames < 1)
    throw std::runtime_error("upsample: model has no video dimensions");

  const int w = model.width * scale_xy;
  const int h = model.height * scale_xy;
  const int t_out = (model.frames - 1) * scale_t + 1;

  std::vector<float> times(static_cast<size_t>(t_out));
  for (int f = 0; f < t_out; ++f)
    times[f] = norm_coord_f(double(f) / double(scale_t), model.frames);

  if (scale_xy == 1) return render(model, times, w, h);

  // fractional positions on the original pixel lattice
  std::vector<float> xs(size_t(w) * h), ys(size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      xs[size_t(y) * w + x] = norm_coord_f(double(x) / scale_xy, model.width);
      ys[size_t(y) * w + x] = norm_coord_f(double(y) / scale_xy, model.height);
    }

  auto tfs = model_transforms(model, times);
  VideoVolume out;
  out.width = w;
  out.height = h;
  out.frames = t_out;
  out.rgb.resize(size_t(w) * h * t_out * 3);
  out.source = "upsample";
  parallel_for(t_out, [&](int64_t lo, int64_t hi) {
    for (int64_t fi = lo; fi < hi; ++fi) {
      FrameEval fe = eval_frame_with_transforms(model, tfs[fi], xs, ys, times[fi]);
      std::copy(fe.rgb.begin(), fe.rgb.end(),
                out.rgb.begin() + size_t(fi) * w * h * 3);
    }
  });
  return out;
}

SegmentationMap segment(const CoordFlowModel& model,
                        const std::vector<float>& times, int out_w, int out_h) {
  std::vector<float> xs, ys;
  pixel_grid(out_w, out_h, xs, ys);
  auto tfs = model_transforms(model, times);

  SegmentationMap map;
  map.width = out_w;
  map.height = out_h;
  map.frames = static_cast<int>(times.size());
  map.n_layers = model.n_layers();
  const size_t frame_px = size_t(out_w) * out_h;
  map.index.resize(frame_px * times.size());
  map.weights.resize(frame_px * times.size() * model.n_layers());

  parallel_for(static_cast<int64_t>(times.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t fi = lo; fi < hi; ++fi) {
      FrameEval fe = eval_frame_with_transforms(model, tfs[fi], xs, ys, times[fi]);
      const int n = model.n_layers();
      for (size_t p = 0; p < frame_px; ++p) {
        int best = 0;
        for (int li = 1; li < n; ++li)
          if (fe.softmax_alpha[p * n + li] > fe.softmax_alpha[p * n + best])
            best = li;
        map.index[fi * frame_px + p] = static_cast<uint8_t>(best);
        for (int li = 0; li < n; ++li)
          map.weights[(fi * frame_px + p) * n + li] = fe.softmax_alpha[p * n + li];
      }
    }
  });
  return map;
}

VideoVolume inpaint(const CoordFlowModel& model, int layer_index,
                    const std::vector<float>& times, int out_w, int out_h) {
  if (layer_index < 0 || layer_index >= model.n_layers())
    throw std::invalid_argument("inpaint: layer index " +
                                std::to_string(layer_index) + " out of range [0," +
                                std::to_string(model.n_layers()) + ")");
  std::vector<float> xs, ys;
  pixel_grid(out_w, out_h, xs, ys);
  auto tfs = model_transforms(model, times);

  VideoVolume out;
  out.width = out_w;
  out.height = out_h;
  out.frames = static_cast<int>(times.size());
  out.rgb.resize(size_t(out_w) * out_h * times.size() * 3);
  out.source = "inpaint";
  parallel_for(static_cast<int64_t>(times.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t fi = lo; fi < hi; ++fi) {
      FrameEval fe = eval_frame_with_transforms(model, tfs[fi], xs, ys, times[fi]);
      std::copy(fe.layer_rgb[layer_index].begin(),
                fe.layer_rgb[layer_index].end(),
                out.rgb.begin() + size_t(fi) * out_w * out_h * 3);
    }
  });
  return out;
}

Trajectory extract_trajectory(const CoordFlowModel& model, int layer_index,
                              const std::vector<float>& times) {
  if (layer_index < 0 || layer_index >= model.n_layers())
    throw std::invalid_argument("extract_trajectory: layer index out of range");
  Trajectory traj;
  traj.reserve(times.size());
  for (float t : times)
    traj.push_back(flow_transform(model.layers[layer_index], t));
  return traj;
}

Trajectory smooth_trajectory(const Trajectory& traj, int window) {
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("smooth_trajectory: window must be odd and >= 1");
  if (window == 1 || traj.empty()) return traj;

  const int n = static_cast<int>(traj.size());
  std::vector<std::array<float, 4>> params(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    traj[i].to_params(params[i][0], params[i][1], params[i][2], params[i][3]);

  const int half = window / 2;
  Trajectory out(traj.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc[4] = {0, 0, 0, 0};
    for (int j = lo; j <= hi; ++j)
      for (int k = 0; k < 4; ++k) acc[k] += params[j][k];
    const float count = float(hi - lo + 1);
    out[i] = SimilarityTransform::from_params(
        static_cast<float>(acc[0]) / count, static_cast<float>(acc[1]) / count,
        static_cast<float>(acc[2]) / count, static_cast<float>(acc[3]) / count);
  }
  return out;
}

VideoVolume stabilize(const CoordFlowModel& model, int window,
                      const std::vector<float>& times, int out_w, int out_h) {
  std::vector<Trajectory> per_layer;
  per_layer.reserve(model.layers.size());
  for (int li = 0; li < model.n_layers(); ++li)
    per_layer.push_back(
        smooth_trajectory(extract_trajectory(model, li, times), window));

  std::vector<std::vector<SimilarityTransform>> tfs(times.size());
  for (size_t fi = 0; fi < times.size(); ++fi) {
    tfs[fi].resize(model.layers.size());
    for (size_t li = 0; li < model.layers.size(); ++li)
      tfs[fi][li] = per_layer[li][fi];
  }
  return render_with_transforms(model, tfs, times, out_w, out_h);
}

void save_segmentation(const SegmentationMap& map, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const size_t frame_px = size_t(map.width) * map.height;
  for (int t = 0; t < map.frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "seg_%06d.png", t);
    save_indexed_png((fs::path(dir) / name).string(),
                     map.index.data() + size_t(t) * frame_px, map.width,
                     map.height, map.n_layers);
  }
  // raw softmax weight dump: small header + f32 data
  ByteWriter w;
  w.raw("CFW1", 4);
  w.u32(static_cast<uint32_t>(map.width));
  w.u32(static_cast<uint32_t>(map.height));
  w.u32(static_cast<uint32_t>(map.frames));
  w.u32(static_cast<uint32_t>(map.n_layers));
  w.f32_array(map.weights.data(), map.weights.size());
  write_file((fs::path(dir) / "weights.bin").string(), w.bytes());
}

void save_trajectory_csv(const Trajectory& traj, const std::vector<float>& times,
                         const std::string& path) {
  if (traj.size() != times.size())
    throw std::invalid_argument("save_trajectory_csv: size mismatch");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write " + path);
  f << "t,s,theta,dx,dy\n";
  char line[160];
  for (size_t i = 0; i < traj.size(); ++i) {
    float s_raw, theta, dx, dy;
    traj[i].to_params(s_raw, theta, dx, dy);
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  double(times[i]), double(std::exp(s_raw)), double(theta),
                  double(dx), double(dy));
    f << line;
  }
}

}  // namespace coordflow
