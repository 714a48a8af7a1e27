#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace trajattn {

// Byte-order-explicit primitives; everything on disk is little-endian.
void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);  // u32 length prefix
void write_f64_array(std::ostream& out, const std::vector<double>& v);
void write_u8_array(std::ostream& out, const std::vector<std::uint8_t>& v);

std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in, std::uint32_t max_length = 1u << 20);
void read_f64_array(std::istream& in, std::vector<double>& v, size_t count);
void read_u8_array(std::istream& in, std::vector<std::uint8_t>& v, size_t count);

// Reads/validates a fixed 8-byte magic tag at the current position.
void write_magic(std::ostream& out, const char magic[8]);
void expect_magic(std::istream& in, const char magic[8], const std::string& what);

}  // namespace trajattn
