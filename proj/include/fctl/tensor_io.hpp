#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fctl/tensor.hpp"

namespace fctl {

// ".ten" files: "TNSR", u8 dtype, u8 rank, rank x u32 LE dims, row-major LE payload.
enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

struct RawTensor {
  DType dtype = DType::F32;
  Shape shape;
  std::vector<std::uint8_t> payload;  // little-endian element bytes
};

std::string encode_tensor(const RawTensor& t);
RawTensor decode_tensor(std::span<const std::uint8_t> bytes);

RawTensor to_raw(const Tensor<float>& t);
RawTensor to_raw(const Tensor<double>& t);
RawTensor to_raw(const Shape& shape, std::span<const std::uint8_t> values);

/// Converts a raw f32/f64 tensor; the dtype must match T exactly.
template <typename T>
Tensor<T> from_raw(const RawTensor& raw);

void save_tensor(const std::filesystem::path& path, const RawTensor& t);
RawTensor load_tensor(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace fctl
