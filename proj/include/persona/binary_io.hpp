#pragma once

// Little-endian primitives for the binary model files.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "persona/errors.hpp"

namespace persona::bin {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

inline void write_f64s(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ValidationError("model file truncated");
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  read_exact(in, reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  read_exact(in, reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

inline void read_f64s(std::istream& in, double* dst, std::size_t n) {
  read_exact(in, reinterpret_cast<char*>(dst), n * sizeof(double));
}

inline std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  if (n > (1u << 26)) throw ValidationError("model file: implausible string length");
  std::string s(n, '\0');
  if (n) read_exact(in, s.data(), n);
  return s;
}

}  // namespace persona::bin
