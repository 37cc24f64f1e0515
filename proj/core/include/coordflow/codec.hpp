#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coordflow/model.hpp"

namespace coordflow {

// Symmetric per-tensor int8 quantization: scale = max|w|/127, zero point 0,
// dequantized value = scale * int_value.
struct QuantizedTensor {
  std::vector<int8_t> values;
  float scale = 1.0f;
  Shape shape;
};

QuantizedTensor quantize(const Tensor& t);
std::vector<float> dequantize(const QuantizedTensor& q);

// Order-0 adaptive byte-wise range coder. Lossless; the coded stream carries
// the raw length and a CRC32 of the raw bytes, so decode detects corruption.
std::vector<uint8_t> entropy_encode(std::span<const uint8_t> raw);
std::vector<uint8_t> entropy_decode(std::span<const uint8_t> coded);

// Compressed container (magic CFV1): header, per-tensor records, raw
// flow-net floats, one range-coded blob holding every quantized color-net
// tensor, trailing CRC32 over all preceding bytes.
struct Bitstream {
  std::vector<uint8_t> bytes;
};

Bitstream pack(const CoordFlowModel& model);
CoordFlowModel unpack(const Bitstream& bs);

// Replaces every color-net weight with its quantize->dequantize image, i.e.
// the exact values a decoder reconstructs.
void quantize_model_inplace(CoordFlowModel& model);

void save_bitstream(const Bitstream& bs, const std::string& path);
Bitstream load_bitstream(const std::string& path);

// 8 * file bytes / (W*H*T)
double bpp(size_t total_file_bytes, int width, int height, int frames);

// Size breakdown for reporting.
struct BitstreamInfo {
  uint32_t version = 0;
  std::string preset;
  int n_layers = 0;
  int width = 0, height = 0, frames = 0;
  size_t header_bytes = 0;
  size_t flow_payload_bytes = 0;
  size_t color_payload_bytes = 0;   // coded
  size_t color_raw_bytes = 0;       // decoded int8 count
  size_t total_bytes = 0;
};
BitstreamInfo inspect_bitstream(const Bitstream& bs);

}  // namespace coordflow
