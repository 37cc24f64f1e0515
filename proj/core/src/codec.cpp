#include "coordflow/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "coordflow/serialize.hpp"

namespace coordflow {

// ---- quantization -----------------------------------------------------------

QuantizedTensor quantize(const Tensor& t) {
  QuantizedTensor q;
  q.shape = t.shape();
  q.values.resize(static_cast<size_t>(t.numel()));
  float maxabs = 0.0f;
  for (float v : t.data()) {
    if (!std::isfinite(v))
      throw std::invalid_argument("quantize: non-finite value");
    maxabs = std::max(maxabs, std::fabs(v));
  }
  // all-zero tensors keep scale 1 so the round trip stays exact
  q.scale = maxabs > 0.0f ? maxabs / 127.0f : 1.0f;
  const auto d = t.data();
  for (size_t i = 0; i < q.values.size(); ++i) {
    const long r = std::lroundf(d[i] / q.scale);
    q.values[i] = static_cast<int8_t>(std::clamp<long>(r, -127, 127));
  }
  return q;
}

std::vector<float> dequantize(const QuantizedTensor& q) {
  std::vector<float> out(q.values.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = q.scale * float(q.values[i]);
  return out;
}

// ---- adaptive order-0 range coder --------------------------------------------

namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;

// Carryless range coder (Subbotin style).
class RangeEncoder {
 public:
  explicit RangeEncoder(std::vector<uint8_t>& out) : out_(out) {}

  void encode(uint32_t cum, uint32_t freq, uint32_t tot) {
    low_ += cum * (range_ /= tot);
    range_ *= freq;
    normalize();
  }
  void flush() {
    for (int i = 0; i < 4; ++i) {
      out_.push_back(static_cast<uint8_t>(low_ >> 24));
      low_ <<= 8;
    }
  }

 private:
  void normalize() {
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
      out_.push_back(static_cast<uint8_t>(low_ >> 24));
      low_ <<= 8;
      range_ <<= 8;
    }
  }
  std::vector<uint8_t>& out_;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* p, size_t n) : p_(p), end_(p + n) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }

  uint32_t decode_freq(uint32_t tot) {
    const uint32_t f = (code_ - low_) / (range_ /= tot);
    if (f >= tot) throw std::runtime_error("entropy_decode: corrupt stream");
    return f;
  }
  void decode_update(uint32_t cum, uint32_t freq) {
    low_ += cum * range_;
    range_ *= freq;
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
      code_ = (code_ << 8) | next_byte();
      low_ <<= 8;
      range_ <<= 8;
    }
  }

 private:
  uint8_t next_byte() { return p_ < end_ ? *p_++ : 0; }
  const uint8_t* p_;
  const uint8_t* end_;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

// Adaptive byte frequencies in a Fenwick tree. Total stays below 2^16 to
// match the coder's precision.
class ByteModel {
 public:
  ByteModel() {
    freq_.assign(256, 1);
    rebuild();
  }

  uint32_t total() const { return total_; }
  uint32_t freq(int s) const { return freq_[static_cast<size_t>(s)]; }

  uint32_t cum_below(int s) const {
    uint32_t acc = 0;
    for (int j = s; j > 0; j -= j & -j) acc += tree_[static_cast<size_t>(j)];
    return acc;
  }

  // symbol with cum_below(s) <= target < cum_below(s+1)
  int find(uint32_t target, uint32_t& cum_lo) const {
    int pos = 0;
    uint32_t rem = target;
    for (int pw = 256; pw > 0; pw >>= 1) {
      const int next = pos + pw;
      if (next <= 256 && tree_[static_cast<size_t>(next)] <= rem) {
        pos = next;
        rem -= tree_[static_cast<size_t>(pos)];
      }
    }
    cum_lo = target - rem;
    return pos;
  }

  void update(int s) {
    add(s, kInc);
    freq_[static_cast<size_t>(s)] += kInc;
    total_ += kInc;
    if (total_ + kInc > kBot) rescale();
  }

 private:
  static constexpr uint32_t kInc = 32;

  void add(int s, uint32_t d) {
    for (int j = s + 1; j <= 256; j += j & -j) tree_[static_cast<size_t>(j)] += d;
  }
  void rebuild() {
    tree_.assign(257, 0);
    total_ = 0;
    for (int s = 0; s < 256; ++s) {
      add(s, freq_[static_cast<size_t>(s)]);
      total_ += freq_[static_cast<size_t>(s)];
    }
  }
  void rescale() {
    for (auto& f : freq_) f = (f + 1) >> 1;
    rebuild();
  }

  std::vector<uint32_t> freq_;
  std::vector<uint32_t> tree_;
  uint32_t total_ = 0;
};

uint32_t crc_of(const uint8_t* p, size_t n) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

}  // namespace

std::vector<uint8_t> entropy_encode(std::span<const uint8_t> raw) {
  ByteWriter header;
  header.u64(raw.size());
  header.u32(crc_of(raw.data(), raw.size()));
  std::vector<uint8_t> out = std::move(header.bytes());
  if (raw.empty()) return out;

  RangeEncoder enc(out);
  ByteModel model;
  for (uint8_t byte : raw) {
    enc.encode(model.cum_below(byte), model.freq(byte), model.total());
    model.update(byte);
  }
  enc.flush();
  return out;
}

std::vector<uint8_t> entropy_decode(std::span<const uint8_t> coded) {
  ByteReader r(coded.data(), coded.size());
  const uint64_t raw_len = r.u64();
  const uint32_t expect_crc = r.u32();
  std::vector<uint8_t> raw(static_cast<size_t>(raw_len));
  if (raw_len > 0) {
    RangeDecoder dec(r.cursor(), r.remaining());
    ByteModel model;
    for (uint64_t i = 0; i < raw_len; ++i) {
      const uint32_t target = dec.decode_freq(model.total());
      uint32_t cum_lo = 0;
      const int sym = model.find(target, cum_lo);
      if (sym > 255) throw std::runtime_error("entropy_decode: corrupt stream");
      dec.decode_update(cum_lo, model.freq(sym));
      model.update(sym);
      raw[static_cast<size_t>(i)] = static_cast<uint8_t>(sym);
    }
  }
  if (crc_of(raw.data(), raw.size()) != expect_crc)
    throw std::runtime_error("entropy_decode: checksum mismatch (corrupt stream)");
  return raw;
}

// ---- bitstream container ------------------------------------------------------

namespace {

constexpr char kBitstreamMagic[4] = {'C', 'F', 'V', '1'};
constexpr uint32_t kBitstreamVersion = 1;

struct TensorRef {
  std::string id;
  Tensor tensor;
  bool is_color;
};

std::vector<TensorRef> tensor_refs(const CoordFlowModel& m) {
  std::vector<TensorRef> refs;
  for (size_t li = 0; li < m.layers.size(); ++li) {
    const auto& layer = m.layers[li];
    const std::string base = "layer" + std::to_string(li);
    for (size_t i = 0; i < layer.flow.mlp.weights.size(); ++i) {
      refs.push_back({base + "/flow/w" + std::to_string(i),
                      layer.flow.mlp.weights[i], false});
      refs.push_back({base + "/flow/b" + std::to_string(i),
                      layer.flow.mlp.biases[i], false});
    }
    for (size_t i = 0; i < layer.color.mlp.weights.size(); ++i) {
      refs.push_back({base + "/color/w" + std::to_string(i),
                      layer.color.mlp.weights[i], true});
      refs.push_back({base + "/color/b" + std::to_string(i),
                      layer.color.mlp.biases[i], true});
    }
  }
  return refs;
}

}  // namespace

Bitstream pack(const CoordFlowModel& model) {
  ByteWriter w;
  w.raw(kBitstreamMagic, 4);
  w.u32(kBitstreamVersion);
  write_model_header(w, model);

  const auto refs = tensor_refs(model);

  // payload regions
  std::vector<uint8_t> flow_region;
  std::vector<int8_t> color_stream;
  struct Rec {
    std::string id;
    uint8_t dtype;
    Shape shape;
    float scale;
    uint64_t offset;
    uint64_t length;
  };
  std::vector<Rec> records;
  for (const auto& ref : refs) {
    Rec rec;
    rec.id = ref.id;
    rec.shape = ref.tensor.shape();
    if (ref.is_color) {
      QuantizedTensor q = quantize(ref.tensor);
      rec.dtype = 1;
      rec.scale = q.scale;
      rec.offset = color_stream.size();
      rec.length = q.values.size();
      color_stream.insert(color_stream.end(), q.values.begin(), q.values.end());
    } else {
      rec.dtype = 0;
      rec.scale = 0.0f;
      rec.offset = flow_region.size();
      rec.length = size_t(ref.tensor.numel()) * 4;
      const uint8_t* p =
          reinterpret_cast<const uint8_t*>(ref.tensor.data().data());
      flow_region.insert(flow_region.end(), p, p + rec.length);
    }
    records.push_back(std::move(rec));
  }

  w.u32(static_cast<uint32_t>(records.size()));
  for (const auto& rec : records) {
    w.str(rec.id);
    w.u8(rec.dtype);
    w.u32(static_cast<uint32_t>(rec.shape.size()));
    for (int64_t d : rec.shape) w.u64(static_cast<uint64_t>(d));
    w.f32(rec.scale);
    w.u64(rec.offset);
    w.u64(rec.length);
  }

  const auto coded = entropy_encode(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(color_stream.data()),
      color_stream.size()));
  w.u64(flow_region.size());
  w.raw(flow_region.data(), flow_region.size());
  w.u64(coded.size());
  w.raw(coded.data(), coded.size());

  const uint32_t crc = crc_of(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return {std::move(w.bytes())};
}

CoordFlowModel unpack(const Bitstream& bs) {
  if (bs.bytes.size() < 12) throw std::runtime_error("bitstream truncated");
  const uint32_t stored_crc = [&] {
    ByteReader tail(bs.bytes.data() + bs.bytes.size() - 4, 4);
    return tail.u32();
  }();
  if (crc_of(bs.bytes.data(), bs.bytes.size() - 4) != stored_crc)
    throw std::runtime_error("bitstream checksum mismatch");

  ByteReader r(bs.bytes.data(), bs.bytes.size() - 4);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kBitstreamMagic, 4) != 0)
    throw std::runtime_error("not a coordflow bitstream (bad magic)");
  const uint32_t version = r.u32();
  if (version != kBitstreamVersion)
    throw std::runtime_error("unsupported bitstream version " +
                             std::to_string(version));

  CoordFlowModel model = read_model_header(r);

  struct Rec {
    std::string id;
    uint8_t dtype;
    Shape shape;
    float scale;
    uint64_t offset;
    uint64_t length;
  };
  const uint32_t n_records = r.u32();
  std::vector<Rec> records(n_records);
  for (auto& rec : records) {
    rec.id = r.str();
    rec.dtype = r.u8();
    const uint32_t nd = r.u32();
    rec.shape.resize(nd);
    for (auto& d : rec.shape) d = static_cast<int64_t>(r.u64());
    rec.scale = r.f32();
    rec.offset = r.u64();
    rec.length = r.u64();
  }

  const uint64_t flow_len = r.u64();
  if (r.remaining() < flow_len) throw std::runtime_error("bitstream truncated");
  const uint8_t* flow_region = r.cursor();
  r.skip(flow_len);
  const uint64_t coded_len = r.u64();
  if (r.remaining() < coded_len) throw std::runtime_error("bitstream truncated");
  const auto color_stream =
      entropy_decode(std::span<const uint8_t>(r.cursor(), coded_len));

  auto refs = tensor_refs(model);
  if (refs.size() != records.size())
    throw std::runtime_error("bitstream record count does not match header");
  for (size_t i = 0; i < refs.size(); ++i) {
    const Rec& rec = records[i];
    Tensor t = refs[i].tensor;
    if (rec.shape != t.shape())
      throw std::runtime_error("bitstream shape mismatch for " + rec.id);
    float* dst = t.mutable_data().data();
    if (rec.dtype == 0) {
      if (rec.offset + rec.length > flow_len)
        throw std::runtime_error("bitstream flow payload out of range");
      std::memcpy(dst, flow_region + rec.offset, rec.length);
    } else if (rec.dtype == 1) {
      if (rec.offset + rec.length > color_stream.size())
        throw std::runtime_error("bitstream color payload out of range");
      for (uint64_t j = 0; j < rec.length; ++j)
        dst[j] = rec.scale *
                 float(static_cast<int8_t>(color_stream[rec.offset + j]));
    } else {
      throw std::runtime_error("bitstream: unknown dtype");
    }
  }
  return model;
}

void quantize_model_inplace(CoordFlowModel& model) {
  for (auto& layer : model.layers) {
    Mlp& mlp = layer.color.mlp;
    for (size_t i = 0; i < mlp.weights.size(); ++i) {
      for (Tensor* t : {&mlp.weights[i], &mlp.biases[i]}) {
        const auto deq = dequantize(quantize(*t));
        std::copy(deq.begin(), deq.end(), t->mutable_data().begin());
      }
    }
  }
}

void save_bitstream(const Bitstream& bs, const std::string& path) {
  write_file(path, bs.bytes);
}

Bitstream load_bitstream(const std::string& path) { return {read_file(path)}; }

double bpp(size_t total_file_bytes, int width, int height, int frames) {
  if (width < 1 || height < 1 || frames < 1)
    throw std::invalid_argument("bpp: dimensions must be positive");
  return 8.0 * double(total_file_bytes) /
         (double(width) * double(height) * double(frames));
}

BitstreamInfo inspect_bitstream(const Bitstream& bs) {
  BitstreamInfo info;
  info.total_bytes = bs.bytes.size();
  ByteReader r(bs.bytes.data(), bs.bytes.size());
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kBitstreamMagic, 4) != 0)
    throw std::runtime_error("not a coordflow bitstream (bad magic)");
  info.version = r.u32();
  CoordFlowModel skeleton = read_model_header(r);
  info.preset = skeleton.preset;
  info.n_layers = skeleton.n_layers();
  info.width = skeleton.width;
  info.height = skeleton.height;
  info.frames = skeleton.frames;

  const uint32_t n_records = r.u32();
  uint64_t color_raw = 0;
  for (uint32_t i = 0; i < n_records; ++i) {
    r.str();
    const uint8_t dtype = r.u8();
    const uint32_t nd = r.u32();
    for (uint32_t d = 0; d < nd; ++d) r.u64();
    r.f32();
    r.u64();
    const uint64_t length = r.u64();
    if (dtype == 1) color_raw += length;
  }
  const uint64_t flow_len = r.u64();
  r.skip(flow_len);
  const uint64_t coded_len = r.u64();
  info.header_bytes = bs.bytes.size() - 4 - flow_len - coded_len - 16;
  info.flow_payload_bytes = flow_len;
  info.color_payload_bytes = coded_len;
  info.color_raw_bytes = color_raw;
  return info;
}

}  // namespace coordflow
