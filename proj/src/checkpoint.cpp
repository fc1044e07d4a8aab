#include "flsim/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "flsim/errors.hpp"

namespace flsim::nn {

namespace {

constexpr char kMagic[8] = {'F', 'P', 'S', 'I', 'M', 'P', 'V', '1'};

void put_u32_le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64_le(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void save_params(const std::string& path, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 8);
  put_u32_le(out, static_cast<std::uint32_t>(params.size()));
  for (double v : params) put_f64_le(out, v);
  if (!out) throw InputError("write failure on checkpoint: " + path);
}

ParamVector load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("bad checkpoint magic in " + path, 0);
  unsigned char lb[4];
  in.read(reinterpret_cast<char*>(lb), 4);
  if (in.gcount() != 4) throw ParseError("truncated checkpoint length in " + path, 8);
  const std::uint32_t len = static_cast<std::uint32_t>(lb[0]) |
                            (static_cast<std::uint32_t>(lb[1]) << 8) |
                            (static_cast<std::uint32_t>(lb[2]) << 16) |
                            (static_cast<std::uint32_t>(lb[3]) << 24);
  ParamVector params(len);
  for (std::uint32_t i = 0; i < len; ++i) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8)
      throw ParseError("truncated checkpoint payload in " + path,
                       12 + static_cast<std::size_t>(i) * 8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    double v;
    std::memcpy(&v, &bits, 8);
    params[i] = v;
  }
  return params;
}

}  // namespace flsim::nn
