#include "i2ckd/stf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "STF1 writer assumes a little-endian host");

namespace i2ckd {

namespace {

const char kMagic[4] = {'S', 'T', 'F', '1'};

std::string dtype_name(StfDtype d) {
  switch (d) {
    case StfDtype::F32: return "f32";
    case StfDtype::F64: return "f64";
    case StfDtype::U8: return "u8";
  }
  return "?";
}

void write_file(const std::filesystem::path& path, StfDtype dtype,
                const std::vector<std::size_t>& dims, const void* payload, std::size_t payload_bytes) {
  nlohmann::json header;
  header["dtype"] = dtype_name(dtype);
  header["shape"] = dims;
  std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("STF1: cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  os.write(reinterpret_cast<const char*>(&hlen), 4);
  os.write(hs.data(), hs.size());
  os.write(reinterpret_cast<const char*>(payload), payload_bytes);
  if (!os) throw std::runtime_error("STF1: write failed for " + path.string());
}

}  // namespace

void write_stf_f64(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, StfDtype::F64, t.shape().dims(), t.data(), t.numel() * sizeof(double));
}

void write_stf_f32(const std::filesystem::path& path, const Tensor& t) {
  std::vector<float> narrow(t.numel());
  for (std::size_t i = 0; i < narrow.size(); ++i) narrow[i] = static_cast<float>(t[i]);
  write_file(path, StfDtype::F32, t.shape().dims(), narrow.data(), narrow.size() * sizeof(float));
}

void write_stf_u8(const std::filesystem::path& path, const LabelMap& m) {
  std::vector<std::size_t> dims{m.height(), m.width()};
  write_file(path, StfDtype::U8, dims, m.values().data(), m.numel());
}

StfData read_stf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("STF1: cannot open " + path.string());

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("STF1: bad magic in " + path.string());

  std::uint32_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 4);
  if (!is) throw std::runtime_error("STF1: truncated header length in " + path.string());
  if (hlen == 0 || hlen > (1u << 20))
    throw std::runtime_error("STF1: implausible header length in " + path.string());

  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw std::runtime_error("STF1: truncated header in " + path.string());

  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw std::runtime_error("STF1: header is not valid JSON in " + path.string());
  if (!header.contains("dtype") || !header["dtype"].is_string())
    throw std::runtime_error("STF1: missing or non-string field 'dtype' in " + path.string());
  if (!header.contains("shape") || !header["shape"].is_array())
    throw std::runtime_error("STF1: missing or non-array field 'shape' in " + path.string());

  StfData out;
  std::string dname = header["dtype"].get<std::string>();
  if (dname == "f32") out.dtype = StfDtype::F32;
  else if (dname == "f64") out.dtype = StfDtype::F64;
  else if (dname == "u8") out.dtype = StfDtype::U8;
  else throw std::runtime_error("STF1: unknown dtype '" + dname + "' in " + path.string());

  std::size_t numel = 1;
  for (const auto& d : header["shape"]) {
    if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0)
      throw std::runtime_error("STF1: field 'shape' has a non-positive extent in " + path.string());
    out.dims.push_back(d.get<std::size_t>());
    numel *= out.dims.back();
  }

  auto read_payload = [&](void* dst, std::size_t bytes) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (!is || is.gcount() != static_cast<std::streamsize>(bytes))
      throw std::runtime_error("STF1: truncated payload in " + path.string());
  };
  switch (out.dtype) {
    case StfDtype::F64:
      out.f64.resize(numel);
      read_payload(out.f64.data(), numel * sizeof(double));
      break;
    case StfDtype::F32:
      out.f32.resize(numel);
      read_payload(out.f32.data(), numel * sizeof(float));
      break;
    case StfDtype::U8:
      out.u8.resize(numel);
      read_payload(out.u8.data(), numel);
      break;
  }
  return out;
}

Tensor read_stf_tensor(const std::filesystem::path& path) {
  StfData d = read_stf(path);
  Shape shape(d.dims);
  if (d.dtype == StfDtype::F64) return Tensor(shape, std::move(d.f64));
  if (d.dtype == StfDtype::F32) {
    std::vector<double> wide(d.f32.begin(), d.f32.end());
    return Tensor(shape, std::move(wide));
  }
  throw std::runtime_error("STF1: " + path.string() + " holds u8 data, expected float tensor");
}

LabelMap read_stf_labelmap(const std::filesystem::path& path) {
  StfData d = read_stf(path);
  if (d.dtype != StfDtype::U8)
    throw std::runtime_error("STF1: " + path.string() + " is not u8 label data");
  if (d.dims.size() != 2)
    throw std::runtime_error("STF1: " + path.string() + " label map must be rank 2");
  return LabelMap(d.dims[0], d.dims[1], std::move(d.u8));
}

}  // namespace i2ckd
