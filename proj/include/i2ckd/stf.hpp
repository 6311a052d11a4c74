#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "i2ckd/tensor.hpp"

namespace i2ckd {

// STF1 binary tensor file:
//   bytes 0..3   magic "STF1"
//   bytes 4..7   little-endian u32 header length
//   header       UTF-8 JSON {"dtype":"f32"|"f64"|"u8","shape":[...]}
//   payload      raw little-endian values, row-major
enum class StfDtype { F32, F64, U8 };

struct StfData {
  StfDtype dtype;
  std::vector<std::size_t> dims;
  std::vector<double> f64;        // filled for f64
  std::vector<float> f32;         // filled for f32
  std::vector<std::uint8_t> u8;   // filled for u8
};

void write_stf_f64(const std::filesystem::path& path, const Tensor& t);
// f32 is an export encoding; values are narrowed from the f64 tensor.
void write_stf_f32(const std::filesystem::path& path, const Tensor& t);
void write_stf_u8(const std::filesystem::path& path, const LabelMap& m);

StfData read_stf(const std::filesystem::path& path);

// Reads an f32 or f64 file into an f64 tensor.
Tensor read_stf_tensor(const std::filesystem::path& path);
// Reads a u8 rank-2 file.
LabelMap read_stf_labelmap(const std::filesystem::path& path);

}  // namespace i2ckd
