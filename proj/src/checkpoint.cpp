// SPDX-License-Identifier: Apache-2.0
#include "cspan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "cspan/error.hpp"

namespace cspan {

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ParseError("checkpoint truncated while reading " + what);
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("parameter name too long: " + p.name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (!out) throw IoError("error writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic) - 1];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not a CSPAN1 checkpoint");
  }
  const auto count = get_le<std::uint32_t>(in, "parameter count");
  std::map<std::string, Tensor> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ParseError("checkpoint truncated in a name");
    if (!params.contains(name)) throw ParseError("checkpoint has unknown parameter '" + name + "'");
    const auto rank = get_le<std::uint8_t>(in, "rank of " + name);
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(get_le<std::uint32_t>(in, "dims of " + name));
    const Tensor& expected = params.value(name);
    if (shape != expected.shape()) {
      throw ParseError("checkpoint parameter '" + name + "' has dims " + shape_str(shape) +
                       ", model expects " + shape_str(expected.shape()));
    }
    Tensor t(shape);
    for (auto& v : t.data()) v = std::bit_cast<float>(get_le<std::uint32_t>(in, "values of " + name));
    if (!loaded.emplace(name, std::move(t)).second) {
      throw ParseError("checkpoint repeats parameter '" + name + "'");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint has trailing bytes");
  for (const Parameter& p : params) {
    if (!loaded.count(p.name)) throw ParseError("checkpoint is missing parameter '" + p.name + "'");
  }
  for (auto& [name, t] : loaded) params.value(name) = std::move(t);
}

void round_to_float(ParameterSet& params) {
  for (Parameter& p : params) {
    for (auto& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace cspan
