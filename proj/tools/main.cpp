// coordflow: encode videos into CoordFlow bitstreams and run the trained
// representation (decode, eval, upsample, segment, inpaint, stabilize, info).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "coordflow/apps.hpp"
#include "coordflow/codec.hpp"
#include "coordflow/loss.hpp"
#include "coordflow/model.hpp"
#include "coordflow/parallel.hpp"
#include "coordflow/trainer.hpp"
#include "coordflow/video.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coordflow;

namespace {

struct CommonOpts {
  int threads = 0;
  bool json_out = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--threads", opts.threads,
                  "Worker thread cap (0 = auto; 1 guarantees bit-reproducible output)")
      ->capture_default_str();
  cmd->add_flag("--json", opts.json_out, "Emit machine-readable JSON metrics");
  cmd->set_config("--config", "", "Config file (key=value); flags win");
}

CoordFlowModel load_representation(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  f.close();
  if (std::memcmp(magic, "CFV1", 4) == 0) return unpack(load_bitstream(path));
  if (std::memcmp(magic, "CFM1", 4) == 0) return load_model(path);
  throw std::runtime_error(path + " is neither a bitstream nor a model checkpoint");
}

void emit(const CommonOpts& opts, const json& j, const std::string& text) {
  if (opts.json_out)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
}

// ---- encode -----------------------------------------------------------------

struct EncodeArgs {
  CommonOpts common;
  std::string input, out;
  std::string metrics;
  std::string save_model_path;
  std::string resume;
  std::string debug_weightmap;
  TrainConfig cfg;
  std::string preset = "tiny";
  std::string ablation = "full";
  uint64_t seed = 0;
};

int run_encode(EncodeArgs& a) {
  set_num_threads(a.common.threads);
  a.cfg.preset = a.preset;
  a.cfg.ablation = ablation_from_string(a.ablation);
  a.cfg.seed = a.seed;

  VideoVolume video = load_video(a.input);
  WeightMap wm = build_weight_map(video, a.cfg.weight_map);
  attach_weight_map(video, wm);
  if (!a.debug_weightmap.empty()) {
    fs::create_directories(a.debug_weightmap);
    float maxw = 0.0f;
    for (float v : wm.w) maxw = std::max(maxw, v);
    std::vector<float> norm(wm.w.size());
    for (size_t i = 0; i < wm.w.size(); ++i) norm[i] = wm.w[i] / maxw;
    for (int t = 0; t < video.frames; ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "weight_%06d.png", t);
      save_gray_png((fs::path(a.debug_weightmap) / name).string(),
                    norm.data() + size_t(t) * video.width * video.height,
                    video.width, video.height);
    }
  }

  a.cfg.on_epoch = [](const EpochStats& e) {
    std::fprintf(stderr, "epoch %3d  lr %.3e  loss %.6f  psnr %6.2f dB\n",
                 e.epoch, double(e.lr), e.loss, e.psnr);
  };

  TrainResult result = a.resume.empty()
                           ? train(video, a.cfg)
                           : resume_training(a.resume, video, a.cfg);

  Bitstream bs = pack(result.model);
  save_bitstream(bs, a.out);
  const std::string metrics_path =
      a.metrics.empty() ? a.out + ".metrics.csv" : a.metrics;
  write_metrics_csv(metrics_path, result.log);
  if (!a.save_model_path.empty()) save_model(result.model, a.save_model_path);

  const double final_psnr = evaluate_psnr(result.model, video);
  const double rate = bpp(bs.bytes.size(), video.width, video.height, video.frames);

  json j{{"psnr_db", final_psnr},
         {"bpp", rate},
         {"bytes", bs.bytes.size()},
         {"params", result.model.param_count()},
         {"epochs", a.cfg.epochs},
         {"metrics_csv", metrics_path},
         {"bitstream", a.out}};
  char line[256];
  std::snprintf(line, sizeof(line), "psnr=%.4f dB  bpp=%.6f  bytes=%zu  -> %s\n",
                final_psnr, rate, bs.bytes.size(), a.out.c_str());
  emit(a.common, j, line);
  return 0;
}

// ---- decode / apps ------------------------------------------------------------

int run_decode(const CommonOpts& common, const std::string& input,
               const std::string& out, int scale, int scale_t) {
  set_num_threads(common.threads);
  CoordFlowModel model = load_representation(input);
  VideoVolume frames = (scale == 1 && scale_t == 1)
                           ? render(model)
                           : upsample(model, scale, scale_t);
  save_video(frames, out);
  json j{{"frames", frames.frames},
         {"width", frames.width},
         {"height", frames.height},
         {"out", out}};
  char line[160];
  std::snprintf(line, sizeof(line), "wrote %d frames (%dx%d) to %s\n",
                frames.frames, frames.width, frames.height, out.c_str());
  emit(common, j, line);
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& input,
             const std::string& video_path, int stride, int stride_t) {
  set_num_threads(common.threads);
  CoordFlowModel model = load_representation(input);
  VideoVolume video = load_video(video_path);
  const double v = evaluate_psnr(model, video, stride, stride_t);
  json j{{"psnr_db", v}, {"stride", stride}, {"stride_t", stride_t}};
  char line[96];
  std::snprintf(line, sizeof(line), "psnr=%.4f dB\n", v);
  emit(common, j, line);
  return 0;
}

int run_segment(const CommonOpts& common, const std::string& input,
                const std::string& out) {
  set_num_threads(common.threads);
  CoordFlowModel model = load_representation(input);
  if (model.n_layers() == 1)
    std::fprintf(stderr,
                 "segment: model has a single layer; the map is constant\n");
  SegmentationMap map =
      segment(model, frame_times(model.frames), model.width, model.height);
  save_segmentation(map, out);
  json j{{"frames", map.frames}, {"layers", map.n_layers}, {"out", out}};
  char line[128];
  std::snprintf(line, sizeof(line), "wrote %d segmentation maps (%d layers) to %s\n",
                map.frames, map.n_layers, out.c_str());
  emit(common, j, line);
  return 0;
}

int run_inpaint(const CommonOpts& common, const std::string& input, int layer,
                const std::string& out) {
  set_num_threads(common.threads);
  CoordFlowModel model = load_representation(input);
  VideoVolume frames =
      inpaint(model, layer, frame_times(model.frames), model.width, model.height);
  save_video(frames, out);
  json j{{"frames", frames.frames}, {"layer", layer}, {"out", out}};
  char line[128];
  std::snprintf(line, sizeof(line), "wrote layer-%d render (%d frames) to %s\n",
                layer, frames.frames, out.c_str());
  emit(common, j, line);
  return 0;
}

int run_stabilize(const CommonOpts& common, const std::string& input,
                  const std::string& out, int window, bool export_traj) {
  set_num_threads(common.threads);
  CoordFlowModel model = load_representation(input);
  const auto times = frame_times(model.frames);
  VideoVolume frames = stabilize(model, window, times, model.width, model.height);
  save_video(frames, out);
  if (export_traj) {
    for (int li = 0; li < model.n_layers(); ++li) {
      Trajectory raw = extract_trajectory(model, li, times);
      char name[64];
      std::snprintf(name, sizeof(name), "trajectory_layer%d.csv", li);
      save_trajectory_csv(raw, times, (fs::path(out) / name).string());
      std::snprintf(name, sizeof(name), "trajectory_layer%d_smoothed.csv", li);
      save_trajectory_csv(smooth_trajectory(raw, window), times,
                          (fs::path(out) / name).string());
    }
  }
  json j{{"frames", frames.frames}, {"window", window}, {"out", out}};
  char line[128];
  std::snprintf(line, sizeof(line), "wrote %d stabilized frames (window %d) to %s\n",
                frames.frames, window, out.c_str());
  emit(common, j, line);
  return 0;
}

int run_upsample(const CommonOpts& common, const std::string& input,
                 const std::string& out, int scale, int scale_t) {
  set_num_threads(common.threads);
  CoordFlowModel model = load_representation(input);
  VideoVolume frames = upsample(model, scale, scale_t);
  save_video(frames, out);
  json j{{"frames", frames.frames},
         {"width", frames.width},
         {"height", frames.height},
         {"out", out}};
  char line[160];
  std::snprintf(line, sizeof(line), "wrote %d frames (%dx%d) to %s\n",
                frames.frames, frames.width, frames.height, out.c_str());
  emit(common, j, line);
  return 0;
}

int run_info(const CommonOpts& common, const std::string& input) {
  CoordFlowModel model = load_representation(input);
  const int64_t total = model.param_count();
  const int64_t color = model.color_param_count();
  const double share = total > 0 ? 100.0 * double(color) / double(total) : 0.0;

  json j{{"preset", model.preset},
         {"layers", model.n_layers()},
         {"width", model.width},
         {"height", model.height},
         {"frames", model.frames},
         {"params_total", total},
         {"params_color", color},
         {"params_flow", model.flow_param_count()},
         {"color_share_pct", share}};

  std::string text;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "preset        %s\nlayers        %d\nvideo         %dx%dx%d\n",
                model.preset.c_str(), model.n_layers(), model.width,
                model.height, model.frames);
  text += buf;
  std::snprintf(buf, sizeof(buf),
                "params        %lld total, %lld color (%.2f%%), %lld flow\n",
                static_cast<long long>(total), static_cast<long long>(color),
                share, static_cast<long long>(model.flow_param_count()));
  text += buf;
  for (int li = 0; li < model.n_layers(); ++li) {
    const auto& layer = model.layers[li];
    std::string fd = "[", cd = "[";
    for (int d : layer.flow.mlp.dims()) fd += std::to_string(d) + " ";
    for (int d : layer.color.mlp.dims()) cd += std::to_string(d) + " ";
    std::snprintf(buf, sizeof(buf), "layer %d       flow %s] %s color %s]\n", li,
                  fd.c_str(),
                  layer.flow.frozen_identity ? "(frozen at identity)" : "",
                  cd.c_str());
    text += buf;
  }

  std::ifstream f(input, std::ios::binary);
  char magic[4] = {0};
  f.read(magic, 4);
  if (std::memcmp(magic, "CFV1", 4) == 0) {
    const Bitstream bs = load_bitstream(input);
    const BitstreamInfo info = inspect_bitstream(bs);
    const double rate = (info.width > 0 && info.height > 0 && info.frames > 0)
                            ? bpp(info.total_bytes, info.width, info.height,
                                  info.frames)
                            : 0.0;
    j["file_bytes"] = info.total_bytes;
    j["bpp"] = rate;
    j["flow_payload_bytes"] = info.flow_payload_bytes;
    j["color_payload_bytes"] = info.color_payload_bytes;
    j["color_raw_bytes"] = info.color_raw_bytes;
    std::snprintf(buf, sizeof(buf),
                  "file          %zu bytes (bpp %.6f)\npayload       %zu flow raw, "
                  "%zu color coded (%zu int8)\n",
                  info.total_bytes, rate, info.flow_payload_bytes,
                  info.color_payload_bytes, info.color_raw_bytes);
    text += buf;
  }
  emit(common, j, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoordFlow video codec"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "coordflow 0.1.0");

  // encode
  EncodeArgs enc;
  auto* encode = app.add_subcommand("encode", "Train on a video and write a bitstream");
  add_common(encode, enc.common);
  encode->add_option("--input,-i", enc.input, "Frame directory or raw RGB24 file")
      ->required();
  encode->add_option("--out,-o", enc.out, "Output bitstream path")->required();
  encode->add_option("--preset", enc.preset, "Model preset (tiny, tiny_single, small, S, M, L)")
      ->capture_default_str();
  encode->add_option("--layers", enc.cfg.n_layers, "CoordFlow layer count")
      ->capture_default_str();
  encode->add_option("--epochs", enc.cfg.epochs, "Training epochs")
      ->capture_default_str();
  encode->add_option("--lr", enc.cfg.base_lr, "Base learning rate")
      ->capture_default_str();
  encode->add_option("--min-lr", enc.cfg.min_lr, "Final learning rate of the cosine schedule")
      ->capture_default_str();
  encode->add_option("--batch", enc.cfg.batch_size, "Coordinates per step")
      ->capture_default_str();
  encode->add_option("--seed", enc.seed, "RNG seed")->capture_default_str();
  encode->add_option("--stride", enc.cfg.stride, "Train on every stride-th pixel")
      ->capture_default_str();
  encode->add_option("--stride-t", enc.cfg.stride_t, "Train on every stride-th frame")
      ->capture_default_str();
  encode->add_option("--ablation", enc.ablation,
                     "full, no_layers, or no_layers_no_flow")
      ->capture_default_str();
  encode->add_option("--lambda", enc.cfg.lambda, "L2 weight in the combined loss")
      ->capture_default_str();
  encode->add_option("--gamma", enc.cfg.gamma, "Layer-loss weight")
      ->capture_default_str();
  encode->add_option("--wm-lap", enc.cfg.weight_map.a_lap, "Weight map: Laplacian coefficient")
      ->capture_default_str();
  encode->add_option("--wm-canny", enc.cfg.weight_map.a_canny, "Weight map: Canny coefficient")
      ->capture_default_str();
  encode->add_option("--wm-tv", enc.cfg.weight_map.a_tv,
                     "Weight map: temporal variance coefficient")
      ->capture_default_str();
  encode->add_option("--wm-bias", enc.cfg.weight_map.bias, "Weight map: constant bias")
      ->capture_default_str();
  encode->add_option("--metrics", enc.metrics, "Metrics CSV path (default <out>.metrics.csv)");
  encode->add_option("--save-model", enc.save_model_path, "Also write an uncompressed checkpoint");
  encode->add_option("--checkpoint", enc.cfg.checkpoint_path, "Training checkpoint path");
  encode->add_option("--checkpoint-every", enc.cfg.checkpoint_every,
                     "Checkpoint period in epochs (0 = off)")
      ->capture_default_str();
  encode->add_option("--resume", enc.resume, "Resume from a training checkpoint");
  encode->add_option("--debug-weightmap", enc.debug_weightmap,
                     "Export the loss weight map as grayscale PNGs");

  // decode
  CommonOpts dec_common;
  std::string dec_in, dec_out;
  int dec_scale = 1, dec_scale_t = 1;
  auto* decode = app.add_subcommand("decode", "Render frames from a bitstream");
  add_common(decode, dec_common);
  decode->add_option("--input,-i", dec_in, "Bitstream or checkpoint")->required();
  decode->add_option("--out,-o", dec_out, "Output frame directory")->required();
  decode->add_option("--scale", dec_scale, "Spatial upsampling factor")
      ->capture_default_str();
  decode->add_option("--scale-t", dec_scale_t, "Temporal upsampling factor")
      ->capture_default_str();

  // eval
  CommonOpts eval_common;
  std::string eval_in, eval_video;
  int eval_stride = 1, eval_stride_t = 1;
  auto* eval = app.add_subcommand("eval", "PSNR of a representation against a video");
  add_common(eval, eval_common);
  eval->add_option("--input,-i", eval_in, "Bitstream or checkpoint")->required();
  eval->add_option("--video", eval_video, "Reference frames")->required();
  eval->add_option("--stride", eval_stride, "Evaluate every stride-th pixel")
      ->capture_default_str();
  eval->add_option("--stride-t", eval_stride_t, "Evaluate every stride-th frame")
      ->capture_default_str();

  // upsample
  CommonOpts up_common;
  std::string up_in, up_out;
  int up_scale = 2, up_scale_t = 1;
  auto* upsample_cmd = app.add_subcommand("upsample", "Render at higher resolution/frame rate");
  add_common(upsample_cmd, up_common);
  upsample_cmd->add_option("--input,-i", up_in, "Bitstream or checkpoint")->required();
  upsample_cmd->add_option("--out,-o", up_out, "Output frame directory")->required();
  upsample_cmd->add_option("--scale", up_scale, "Spatial factor")->capture_default_str();
  upsample_cmd->add_option("--scale-t", up_scale_t, "Temporal factor")
      ->capture_default_str();

  // segment
  CommonOpts seg_common;
  std::string seg_in, seg_out;
  auto* segment_cmd = app.add_subcommand("segment", "Export softmax segmentation maps");
  add_common(segment_cmd, seg_common);
  segment_cmd->add_option("--input,-i", seg_in, "Bitstream or checkpoint")->required();
  segment_cmd->add_option("--out,-o", seg_out, "Output directory")->required();

  // inpaint
  CommonOpts inp_common;
  std::string inp_in, inp_out;
  int inp_layer = 0;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "Render a single layer (no compositing)");
  add_common(inpaint_cmd, inp_common);
  inpaint_cmd->add_option("--input,-i", inp_in, "Bitstream or checkpoint")->required();
  inpaint_cmd->add_option("--layer", inp_layer, "Layer index")->required();
  inpaint_cmd->add_option("--out,-o", inp_out, "Output frame directory")->required();

  // stabilize
  CommonOpts stab_common;
  std::string stab_in, stab_out;
  int stab_window = 9;
  bool stab_traj = false;
  auto* stabilize_cmd = app.add_subcommand("stabilize", "Render with smoothed flow trajectories");
  add_common(stabilize_cmd, stab_common);
  stabilize_cmd->add_option("--input,-i", stab_in, "Bitstream or checkpoint")->required();
  stabilize_cmd->add_option("--out,-o", stab_out, "Output frame directory")->required();
  stabilize_cmd->add_option("--window", stab_window, "Odd smoothing window (1 = passthrough)")
      ->capture_default_str();
  stabilize_cmd->add_flag("--export-trajectories", stab_traj,
                          "Write raw and smoothed trajectory CSVs");

  // info
  CommonOpts info_common;
  std::string info_in;
  auto* info_cmd = app.add_subcommand("info", "Describe a bitstream or checkpoint");
  add_common(info_cmd, info_common);
  info_cmd->add_option("--input,-i", info_in, "Bitstream or checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (encode->parsed()) return run_encode(enc);
    if (decode->parsed())
      return run_decode(dec_common, dec_in, dec_out, dec_scale, dec_scale_t);
    if (eval->parsed())
      return run_eval(eval_common, eval_in, eval_video, eval_stride, eval_stride_t);
    if (upsample_cmd->parsed())
      return run_upsample(up_common, up_in, up_out, up_scale, up_scale_t);
    if (segment_cmd->parsed()) return run_segment(seg_common, seg_in, seg_out);
    if (inpaint_cmd->parsed())
      return run_inpaint(inp_common, inp_in, inp_layer, inp_out);
    if (stabilize_cmd->parsed())
      return run_stabilize(stab_common, stab_in, stab_out, stab_window, stab_traj);
    if (info_cmd->parsed()) return run_info(info_common, info_in);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
