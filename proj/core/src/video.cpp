#include "coordflow/video.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "coordflow/parallel.hpp"
#include "coordflow/rng.hpp"

namespace fs = std::filesystem;

namespace coordflow {

namespace {

uint8_t to_byte(float v) {
  if (v <= 0.0f) return 0;
  if (v >= 1.0f) return 255;
  return static_cast<uint8_t>(std::floor(v * 255.0f + 0.5f));
}

struct PngCloser {
  FILE* f = nullptr;
  ~PngCloser() {
    if (f) std::fclose(f);
  }
};

void read_png_rgb8(const std::string& path, int& w, int& h,
                   std::vector<uint8_t>& rgb) {
  PngCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  if (!fc.f) throw std::runtime_error("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode " + path);
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);

  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  rgb.assign(size_t(w) * h * 3, 0);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = rgb.data() + size_t(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

void write_png_impl(const std::string& path, const uint8_t* data, int w, int h,
                    int color_type, int bit_depth,
                    const std::vector<std::array<uint8_t, 3>>* palette) {
  PngCloser fc;
  fc.f = std::fopen(path.c_str(), "wb");
  if (!fc.f) throw std::runtime_error("cannot open for write " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> pal;
  if (palette) {
    for (const auto& c : *palette) pal.push_back({c[0], c[1], c[2]});
    png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
  }
  png_write_info(png, info);

  const int stride = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<uint8_t*>(data) + size_t(y) * w * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_ppm_rgb8(const std::string& path, int& w, int& h,
                   std::vector<uint8_t>& rgb) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  auto next_token = [&f, &path]() {
    std::string tok;
    while (f) {
      f >> tok;
      if (!tok.empty() && tok[0] == '#') {
        std::string rest;
        std::getline(f, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("truncated ppm header: " + path);
  };
  if (next_token() != "P6") throw std::runtime_error("not a P6 ppm: " + path);
  w = std::stoi(next_token());
  h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255)
    throw std::runtime_error("unsupported ppm maxval " + std::to_string(maxval));
  f.get();  // single whitespace after maxval
  rgb.assign(size_t(w) * h * 3, 0);
  f.read(reinterpret_cast<char*>(rgb.data()),
         static_cast<std::streamsize>(rgb.size()));
  if (!f) throw std::runtime_error("truncated ppm data: " + path);
}

// numeric filename sort: by trailing digit run in the stem, then by name
int64_t filename_number(const fs::path& p) {
  const std::string stem = p.stem().string();
  int64_t value = -1;
  size_t end = stem.size();
  while (end > 0 && !std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
  size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  if (begin < end) {
    try {
      value = std::stoll(stem.substr(begin, end - begin));
    } catch (...) {
      value = -1;
    }
  }
  return value;
}

VideoVolume load_frame_dir(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  if (files.empty()) throw std::runtime_error("no .png/.ppm frames in " + dir);
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    const int64_t na = filename_number(a), nb = filename_number(b);
    if (na != nb) return na < nb;
    return a.filename().string() < b.filename().string();
  });

  VideoVolume v;
  v.frames = static_cast<int>(files.size());
  v.source = dir;
  std::vector<std::vector<uint8_t>> frame_bytes(files.size());
  std::vector<std::array<int, 2>> dims(files.size());
  parallel_for(static_cast<int64_t>(files.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      int w = 0, h = 0;
      std::string ext = files[i].extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (ext == ".png")
        read_png_rgb8(files[i].string(), w, h, frame_bytes[i]);
      else
        read_ppm_rgb8(files[i].string(), w, h, frame_bytes[i]);
      dims[i] = {w, h};
    }
  });
  v.width = dims[0][0];
  v.height = dims[0][1];
  for (size_t i = 0; i < dims.size(); ++i)
    if (dims[i][0] != v.width || dims[i][1] != v.height)
      throw std::runtime_error("inconsistent frame size at " + files[i].string());

  v.rgb.resize(size_t(v.width) * v.height * v.frames * 3);
  for (int t = 0; t < v.frames; ++t) {
    const auto& bytes = frame_bytes[static_cast<size_t>(t)];
    float* dst = v.rgb.data() + size_t(t) * v.width * v.height * 3;
    for (size_t i = 0; i < bytes.size(); ++i) dst[i] = float(bytes[i]) / 255.0f;
  }
  return v;
}

VideoVolume load_raw(const std::string& path) {
  const std::string meta_path = path + ".meta";
  std::ifstream meta(meta_path);
  if (!meta) throw std::runtime_error("missing metadata sidecar " + meta_path);
  int w = 0, h = 0, t = 0;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "width") w = std::stoi(val);
    else if (key == "height") h = std::stoi(val);
    else if (key == "frames") t = std::stoi(val);
  }
  if (w <= 0 || h <= 0 || t <= 0)
    throw std::runtime_error("bad metadata in " + meta_path);

  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes(size_t(w) * h * t * 3);
  f.read(reinterpret_cast<char*>(bytes.data()),
         static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("raw file shorter than metadata implies: " + path);

  VideoVolume v;
  v.width = w;
  v.height = h;
  v.frames = t;
  v.source = path;
  v.rgb.resize(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) v.rgb[i] = float(bytes[i]) / 255.0f;
  return v;
}

}  // namespace

VideoVolume load_video(const std::string& path) {
  if (fs::is_directory(path)) return load_frame_dir(path);
  if (fs::is_regular_file(path)) return load_raw(path);
  throw std::runtime_error("no such video input: " + path);
}

void save_frame_png(const std::string& path, const float* rgb, int w, int h) {
  std::vector<uint8_t> bytes(size_t(w) * h * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(rgb[i]);
  write_png_impl(path, bytes.data(), w, h, PNG_COLOR_TYPE_RGB, 8, nullptr);
}

void save_gray_png(const std::string& path, const float* gray, int w, int h) {
  std::vector<uint8_t> bytes(size_t(w) * h);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(gray[i]);
  write_png_impl(path, bytes.data(), w, h, PNG_COLOR_TYPE_GRAY, 8, nullptr);
}

void save_indexed_png(const std::string& path, const uint8_t* idx, int w,
                      int h, int n_labels) {
  // fixed palette, distinct hues
  static const std::array<uint8_t, 3> base[8] = {
      {{66, 135, 245}}, {{52, 168, 83}},  {{234, 67, 53}},  {{251, 188, 5}},
      {{171, 71, 188}}, {{0, 172, 193}},  {{255, 112, 67}}, {{158, 157, 36}}};
  std::vector<std::array<uint8_t, 3>> palette;
  for (int i = 0; i < std::max(1, n_labels); ++i) palette.push_back(base[i % 8]);
  write_png_impl(path, idx, w, h, PNG_COLOR_TYPE_PALETTE, 8, &palette);
}

void save_video(const VideoVolume& v, const std::string& dir) {
  if (v.empty()) throw std::runtime_error("save_video: empty volume");
  fs::create_directories(dir);
  parallel_for(v.frames, [&](int64_t lo, int64_t hi) {
    for (int64_t t = lo; t < hi; ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%06d.png", static_cast<int>(t));
      save_frame_png((fs::path(dir) / name).string(),
                     v.rgb.data() + size_t(t) * v.width * v.height * 3, v.width,
                     v.height);
    }
  });
}

void save_video_raw(const VideoVolume& v, const std::string& path, float fps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write " + path);
  std::vector<uint8_t> bytes(v.rgb.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(v.rgb[i]);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  std::ofstream meta(path + ".meta");
  meta << "width=" << v.width << "\nheight=" << v.height
       << "\nframes=" << v.frames << "\nfps=" << fps << "\n";
}

double psnr_flat(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("psnr: size mismatch " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double psnr(const VideoVolume& a, const VideoVolume& b) {
  if (a.width != b.width || a.height != b.height || a.frames != b.frames)
    throw std::invalid_argument("psnr: dimension mismatch");
  return psnr_flat(a.rgb, b.rgb);
}

// ---- synthetic generator ----------------------------------------------------

namespace {

// Value noise on a torus: per-octave random lattices, bilinear interpolation.
struct ToroidalTexture {
  int cells = 6;
  int octaves = 3;
  std::vector<std::vector<float>> lattice;  // per octave, [3][side*side] packed

  ToroidalTexture(int base_cells, int n_octaves, Rng& rng)
      : cells(base_cells), octaves(n_octaves) {
    for (int o = 0; o < octaves; ++o) {
      const int side = cells << o;
      std::vector<float> l(size_t(side) * side * 3);
      for (float& v : l) v = rng.next_float();
      lattice.push_back(std::move(l));
    }
  }

  void sample(float u, float v, float* rgb_out) const {
    float r = 0, g = 0, b = 0, wsum = 0;
    float w = 1.0f;
    for (int o = 0; o < octaves; ++o, w *= 0.55f) {
      const int side = cells << o;
      const float fu = u * float(side), fv = v * float(side);
      const int iu = static_cast<int>(std::floor(fu));
      const int iv = static_cast<int>(std::floor(fv));
      const float au = fu - float(iu), av = fv - float(iv);
      const int u0 = ((iu % side) + side) % side;
      const int v0 = ((iv % side) + side) % side;
      const int u1 = (u0 + 1) % side;
      const int v1 = (v0 + 1) % side;
      const std::vector<float>& l = lattice[static_cast<size_t>(o)];
      for (int c = 0; c < 3; ++c) {
        const float x00 = l[(size_t(v0) * side + u0) * 3 + c];
        const float x10 = l[(size_t(v0) * side + u1) * 3 + c];
        const float x01 = l[(size_t(v1) * side + u0) * 3 + c];
        const float x11 = l[(size_t(v1) * side + u1) * 3 + c];
        const float val = (1 - av) * ((1 - au) * x00 + au * x10) +
                          av * ((1 - au) * x01 + au * x11);
        if (c == 0) r += w * val;
        if (c == 1) g += w * val;
        if (c == 2) b += w * val;
      }
      wsum += w;
    }
    rgb_out[0] = r / wsum;
    rgb_out[1] = g / wsum;
    rgb_out[2] = b / wsum;
  }
};

std::vector<std::array<float, 2>> path_positions(const MotionPath& p, int frames,
                                                 Rng& rng) {
  std::vector<std::array<float, 2>> pos(static_cast<size_t>(frames), {0.0f, 0.0f});
  float wx = 0.0f, wy = 0.0f;
  for (int t = 0; t < frames; ++t) {
    switch (p.kind) {
      case MotionPath::Kind::none:
        break;
      case MotionPath::Kind::constant:
        pos[t] = {p.step_x * float(t), p.step_y * float(t)};
        break;
      case MotionPath::Kind::sinusoid: {
        const float phase = 6.2831853f * p.cycles * float(t) / float(frames);
        pos[t] = {p.amp_x * std::sin(phase), p.amp_y * std::sin(phase * 0.5f + 1.0f)};
        break;
      }
      case MotionPath::Kind::random_walk:
        pos[t] = {wx, wy};
        wx += rng.normal(0.0f, p.walk_sigma);
        wy += rng.normal(0.0f, p.walk_sigma);
        break;
    }
  }
  return pos;
}

}  // namespace

SyntheticVideo make_synthetic(const SyntheticSpec& spec) {
  if (spec.width < 1 || spec.height < 1 || spec.frames < 1)
    throw std::invalid_argument("make_synthetic: bad dimensions");
  if (spec.sprite &&
      (spec.sprite_size > spec.width || spec.sprite_size > spec.height))
    throw std::invalid_argument("make_synthetic: sprite larger than frame");

  Rng tex_rng(spec.seed);
  ToroidalTexture bg_tex(spec.texture_cells, spec.texture_octaves, tex_rng);
  ToroidalTexture sprite_tex(std::max(2, spec.texture_cells / 2), spec.texture_octaves,
                             tex_rng);

  Rng motion_rng(spec.seed + 17);
  auto bg_path = path_positions(spec.background, spec.frames, motion_rng);
  auto sprite_path = path_positions(spec.sprite_motion, spec.frames, motion_rng);

  SyntheticVideo out;
  out.background_shift.resize(static_cast<size_t>(spec.frames));
  out.sprite_center.resize(static_cast<size_t>(spec.frames));
  for (int t = 0; t < spec.frames; ++t) {
    float jx = 0.0f, jy = 0.0f;
    if (spec.jitter_sigma > 0.0f) {
      jx = motion_rng.normal(0.0f, spec.jitter_sigma);
      jy = motion_rng.normal(0.0f, spec.jitter_sigma);
    }
    out.background_shift[t] = {bg_path[t][0] + jx, bg_path[t][1] + jy};
    out.sprite_center[t] = {spec.sprite_start_x * float(spec.width) +
                                sprite_path[t][0] + jx,
                            spec.sprite_start_y * float(spec.height) +
                                sprite_path[t][1] + jy};
  }

  VideoVolume clean;
  clean.width = spec.width;
  clean.height = spec.height;
  clean.frames = spec.frames;
  clean.source = "synthetic";
  clean.rgb.resize(size_t(spec.width) * spec.height * spec.frames * 3);
  out.sprite_mask.assign(size_t(spec.width) * spec.height * spec.frames, 0);

  const float inv_w = 1.0f / float(spec.width);
  const float inv_h = 1.0f / float(spec.height);
  const float ssize = float(spec.sprite_size);

  for (int t = 0; t < spec.frames; ++t) {
    const float sx = out.background_shift[t][0];
    const float sy = out.background_shift[t][1];
    const float cx = out.sprite_center[t][0];
    const float cy = out.sprite_center[t][1];
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        float* px = clean.rgb.data() + (clean.pixel_index(x, y, t)) * 3;
        // wrap in pixel space first so integer shifts reuse exact texel
        // coordinates
        float pxw = float(x) - sx;
        float pyw = float(y) - sy;
        pxw -= float(spec.width) * std::floor(pxw / float(spec.width));
        pyw -= float(spec.height) * std::floor(pyw / float(spec.height));
        bg_tex.sample(pxw * inv_w, pyw * inv_h, px);

        if (spec.sprite) {
          // offset from sprite's top-left corner, wrapped to the frame
          float ox = float(x) - (cx - ssize * 0.5f);
          float oy = float(y) - (cy - ssize * 0.5f);
          ox -= float(spec.width) * std::floor(ox / float(spec.width));
          oy -= float(spec.height) * std::floor(oy / float(spec.height));
          if (ox >= 0.0f && ox < ssize && oy >= 0.0f && oy < ssize) {
            float su = ox / ssize, sv = oy / ssize;
            float srgb[3];
            sprite_tex.sample(su, sv, srgb);
            // darken to make the sprite visually distinct from background
            px[0] = srgb[0] * 0.75f;
            px[1] = srgb[1] * 0.55f;
            px[2] = srgb[2] * 0.9f;
            out.sprite_mask[clean.pixel_index(x, y, t)] = 1;
          }
        }
      }
    }
  }

  out.clean = clean;
  out.video = std::move(clean);
  if (spec.noise_sigma > 0.0f) {
    Rng noise_rng(spec.seed + 977);
    for (float& v : out.video.rgb) {
      v += noise_rng.normal(0.0f, spec.noise_sigma);
      v = std::min(1.0f, std::max(0.0f, v));
    }
  }
  return out;
}

}  // namespace coordflow
