#include "talforge/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "talforge/binary.hpp"

namespace talforge {

namespace binary {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace binary

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& arrays) {
  std::vector<std::uint8_t> out{'T', 'A', 'L', 'W'};
  binary::put_u32(out, kCheckpointVersion);
  for (const auto& a : arrays) {
    if (shape_numel(a.shape) != a.values.size()) {
      throw std::invalid_argument("checkpoint entry " + a.name + " has inconsistent shape");
    }
    binary::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    binary::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto extent : a.shape) binary::put_u32(out, static_cast<std::uint32_t>(extent));
    for (double v : a.values) binary::put_f64(out, v);
  }
  return out;
}

std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binary::Reader in(bytes);
  if (in.remaining() < 4 || in.str(4) != "TALW") throw std::runtime_error("bad magic: not a TALW checkpoint");
  const auto version = in.u32();
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported TALW version " + std::to_string(version));
  std::vector<NamedArray> arrays;
  while (!in.at_end()) {
    NamedArray a;
    a.name = in.str(in.u32());
    const auto rank = in.u32();
    for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(in.u32());
    const auto n = shape_numel(a.shape);
    in.require(n * 8);
    a.values.resize(n);
    for (auto& v : a.values) v = in.f64();
    arrays.push_back(std::move(a));
  }
  return arrays;
}

std::vector<NamedArray> snapshot(const ParameterSet& params) {
  std::vector<NamedArray> arrays;
  for (const auto& e : params.entries()) {
    arrays.push_back({e.name, e.tensor.shape(), {e.tensor.data().begin(), e.tensor.data().end()}});
  }
  return arrays;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  binary::write_file(path, encode_checkpoint(snapshot(params)));
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binary::read_file(path));
}

void restore(ParameterSet& params, const std::vector<NamedArray>& arrays, const std::string& prefix) {
  for (auto& e : params.entries()) {
    const std::string wanted = prefix + e.name;
    const NamedArray* found = nullptr;
    for (const auto& a : arrays) {
      if (a.name == wanted) {
        found = &a;
        break;
      }
    }
    if (!found) throw std::runtime_error("checkpoint lacks parameter " + wanted);
    if (found->shape != e.tensor.shape()) {
      throw std::runtime_error("checkpoint parameter " + wanted + " has shape " + shape_to_string(found->shape) +
                               ", model expects " + shape_to_string(e.tensor.shape()));
    }
    std::copy(found->values.begin(), found->values.end(), e.tensor.mutable_data().begin());
  }
}

}  // namespace talforge
