#include "fctl/tensor_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "fctl/binary.hpp"

namespace fctl {

namespace {

std::size_t element_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  throw IoError("unknown dtype");
}

template <typename T>
RawTensor to_raw_impl(const Tensor<T>& t, DType dtype) {
  RawTensor raw;
  raw.dtype = dtype;
  raw.shape = t.shape();
  std::string bytes;
  bytes.reserve(t.data().size() * sizeof(T));
  for (T v : t.data()) binary::put_float(bytes, v);
  raw.payload.assign(bytes.begin(), bytes.end());
  return raw;
}

}  // namespace

std::string encode_tensor(const RawTensor& t) {
  if (t.shape.size() > 255) throw IoError("tensor rank exceeds 255");
  const Index n = numel(t.shape);
  if (static_cast<std::size_t>(n) * element_size(t.dtype) != t.payload.size()) {
    throw IoError("payload size does not match shape " + to_string(t.shape));
  }
  std::string out = "TNSR";
  out.push_back(static_cast<char>(t.dtype));
  out.push_back(static_cast<char>(t.shape.size()));
  for (Index d : t.shape) {
    if (d <= 0 || d > std::numeric_limits<std::uint32_t>::max()) throw IoError("dimension out of u32 range");
    binary::put_uint(out, static_cast<std::uint32_t>(d));
  }
  out.append(t.payload.begin(), t.payload.end());
  return out;
}

RawTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes);
  const auto magic = r.take(4);
  if (std::string(magic.begin(), magic.end()) != "TNSR") throw IoError("bad tensor magic");
  RawTensor t;
  const auto dtype = r.uint<std::uint8_t>();
  if (dtype > 2) throw IoError("unknown tensor dtype " + std::to_string(dtype));
  t.dtype = static_cast<DType>(dtype);
  const auto rank = r.uint<std::uint8_t>();
  for (int i = 0; i < rank; ++i) {
    const auto d = r.uint<std::uint32_t>();
    if (d == 0) throw IoError("zero tensor dimension");
    t.shape.push_back(d);
  }
  const std::size_t expect = static_cast<std::size_t>(numel(t.shape)) * element_size(t.dtype);
  const auto payload = r.take(expect);
  if (!r.done()) throw IoError("trailing bytes after tensor payload");
  t.payload.assign(payload.begin(), payload.end());
  return t;
}

RawTensor to_raw(const Tensor<float>& t) { return to_raw_impl(t, DType::F32); }
RawTensor to_raw(const Tensor<double>& t) { return to_raw_impl(t, DType::F64); }

RawTensor to_raw(const Shape& shape, std::span<const std::uint8_t> values) {
  if (numel(shape) != static_cast<Index>(values.size())) throw IoError("u8 payload does not match shape");
  return {DType::U8, shape, std::vector<std::uint8_t>(values.begin(), values.end())};
}

template <typename T>
Tensor<T> from_raw(const RawTensor& raw) {
  const DType want = sizeof(T) == 4 ? DType::F32 : DType::F64;
  if (raw.dtype != want) throw IoError("tensor dtype mismatch");
  binary::Reader r(raw.payload);
  std::vector<T> data(static_cast<std::size_t>(numel(raw.shape)));
  for (T& v : data) v = r.real<T>();
  return Tensor<T>(raw.shape, std::move(data));
}

template Tensor<float> from_raw(const RawTensor&);
template Tensor<double> from_raw(const RawTensor&);

void save_tensor(const std::filesystem::path& path, const RawTensor& t) {
  write_file_atomic(path, encode_tensor(t));
}

RawTensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace fctl
