#include "trajattn/binary_io.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace trajattn {

namespace {

void put_bytes(std::ostream& out, const unsigned char* bytes, size_t n) {
  out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("binary write failed");
}

void get_bytes(std::istream& in, unsigned char* bytes, size_t n) {
  in.read(reinterpret_cast<char*>(bytes), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw std::runtime_error("binary read failed: unexpected end of stream");
  }
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  put_bytes(out, b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  put_bytes(out, b, 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  if (!s.empty()) put_bytes(out, reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

void write_f64_array(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) write_f64(out, x);
}

void write_u8_array(std::ostream& out, const std::vector<std::uint8_t>& v) {
  if (!v.empty()) put_bytes(out, v.data(), v.size());
}

std::uint8_t read_u8(std::istream& in) {
  unsigned char b;
  get_bytes(in, &b, 1);
  return b;
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

std::string read_string(std::istream& in, std::uint32_t max_length) {
  const std::uint32_t n = read_u32(in);
  if (n > max_length) throw std::runtime_error("binary read failed: string length out of range");
  std::string s(n, '\0');
  if (n > 0) get_bytes(in, reinterpret_cast<unsigned char*>(s.data()), n);
  return s;
}

void read_f64_array(std::istream& in, std::vector<double>& v, size_t count) {
  v.resize(count);
  for (size_t i = 0; i < count; ++i) v[i] = read_f64(in);
}

void read_u8_array(std::istream& in, std::vector<std::uint8_t>& v, size_t count) {
  v.resize(count);
  if (count > 0) get_bytes(in, v.data(), count);
}

void write_magic(std::ostream& out, const char magic[8]) {
  put_bytes(out, reinterpret_cast<const unsigned char*>(magic), 8);
}

void expect_magic(std::istream& in, const char magic[8], const std::string& what) {
  char got[8];
  get_bytes(in, reinterpret_cast<unsigned char*>(got), 8);
  if (std::memcmp(got, magic, 8) != 0) {
    throw std::runtime_error(what + ": bad magic, not a recognized file");
  }
}

}  // namespace trajattn
