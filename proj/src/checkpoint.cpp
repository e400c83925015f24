#include "ctcn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ctcn {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'C', 'N'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint64_t uint(std::size_t width) {
    auto s = take(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  double f64() { return std::bit_cast<double>(uint(8)); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<const Parameter> params) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto e : p.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : p.tensor.data()) put_f64(out, v);
  }
  return out;
}

std::vector<Parameter> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) throw std::runtime_error("not a CTCN checkpoint");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<Parameter> out;
  while (!in.done()) {
    Parameter p;
    p.name = std::string(in.take(in.u32()));
    Shape shape(in.u32());
    for (auto& e : shape) e = in.u32();
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = in.f64();
    p.tensor = Tensor::parameter(std::move(shape), std::move(values));
    out.push_back(std::move(p));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto bytes = encode_checkpoint(params);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Parameter> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_checkpoint(ss.str());
}

void assign_parameters(std::span<Parameter> dst, std::span<const Parameter> src) {
  std::unordered_map<std::string, const Parameter*> by_name;
  for (const auto& p : src) by_name[p.name] = &p;
  for (auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint is missing parameter " + p.name);
    const Tensor& from = it->second->tensor;
    if (from.shape() != p.tensor.shape()) {
      throw std::runtime_error("parameter " + p.name + " has shape " + shape_str(from.shape()) +
                               " in checkpoint, expected " + shape_str(p.tensor.shape()));
    }
    std::copy(from.data().begin(), from.data().end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace ctcn
