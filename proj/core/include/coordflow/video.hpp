#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace coordflow {

// H x W x T x 3 frame stack, samples normalized to [0,1]. The weights array
// (same layout minus the channel axis) is empty until a weight map is
// attached.
struct VideoVolume {
  int width = 0, height = 0, frames = 0;
  std::vector<float> rgb;      // [t][y][x][3]
  std::vector<float> weights;  // [t][y][x]
  std::string source;

  size_t pixel_index(int x, int y, int t) const {
    return (size_t(t) * height + y) * width + x;
  }
  float sample(int x, int y, int t, int c) const {
    return rgb[pixel_index(x, y, t) * 3 + c];
  }
  float& sample(int x, int y, int t, int c) {
    return rgb[pixel_index(x, y, t) * 3 + c];
  }
  int64_t pixel_count() const { return int64_t(width) * height * frames; }
  bool empty() const { return rgb.empty(); }
};

// Loads either a directory of numbered .png/.ppm frames (numeric filename
// sort) or a raw RGB24 file with a `<path>.meta` sidecar carrying
// width/height/frames/fps key=value lines.
VideoVolume load_video(const std::string& path);

// Writes frame_%06d.png into dir (created if needed). Rounds half-up to
// 8 bit.
void save_video(const VideoVolume& v, const std::string& dir);
void save_frame_png(const std::string& path, const float* rgb, int w, int h);
void save_gray_png(const std::string& path, const float* gray, int w, int h);
// Indexed PNG with one palette entry per label.
void save_indexed_png(const std::string& path, const uint8_t* idx, int w,
                      int h, int n_labels);

// Raw RGB24 + sidecar metadata.
void save_video_raw(const VideoVolume& v, const std::string& path, float fps = 30.0f);

// 10*log10(1 / MSE) over normalized values, capped at 100 dB.
double psnr(const VideoVolume& a, const VideoVolume& b);
double psnr_flat(const std::vector<float>& a, const std::vector<float>& b);

// ---- synthetic oracle videos ------------------------------------------------

struct MotionPath {
  enum class Kind { none, constant, sinusoid, random_walk };
  Kind kind = Kind::none;
  float step_x = 0.0f, step_y = 0.0f;  // constant: pixels per frame
  float amp_x = 0.0f, amp_y = 0.0f;    // sinusoid: amplitude in pixels
  float cycles = 1.0f;                 // sinusoid cycles over the clip
  float walk_sigma = 0.0f;             // random walk step sigma (pixels)
};

struct SyntheticSpec {
  int width = 96, height = 96, frames = 60;
  uint64_t seed = 1;
  int texture_cells = 6;   // base value-noise lattice resolution
  int texture_octaves = 3;
  MotionPath background;
  float jitter_sigma = 0.0f;  // per-frame white camera jitter (pixels)
  bool sprite = false;
  int sprite_size = 24;
  MotionPath sprite_motion;
  float sprite_start_x = 0.25f, sprite_start_y = 0.25f;  // frame fraction
  float noise_sigma = 0.0f;
};

struct SyntheticVideo {
  VideoVolume video;  // with noise, if any
  VideoVolume clean;  // before noise
  // realized per-frame background shift in pixels (path + jitter)
  std::vector<std::array<float, 2>> background_shift;
  std::vector<std::array<float, 2>> sprite_center;  // pixels
  std::vector<uint8_t> sprite_mask;                 // [t][y][x], 0/1
};

// Deterministic under spec.seed. Background texture translates by the path
// (wrapping); an optional textured square sprite moves independently and is
// composited on top; optional per-frame jitter shifts the whole scene;
// optional additive Gaussian noise (clamped) fills `video`.
SyntheticVideo make_synthetic(const SyntheticSpec& spec);

}  // namespace coordflow
