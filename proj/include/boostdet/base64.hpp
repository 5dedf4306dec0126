#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "boostdet/errors.hpp"

namespace boostdet {

inline std::string base64_encode(const unsigned char* data, std::size_t len) {
  static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < len; i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(table[(v >> 6) & 63]);
    out.push_back(table[v & 63]);
  }
  if (i + 1 == len) {
    const std::uint32_t v = data[i] << 16;
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.append("==");
  } else if (i + 2 == len) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(table[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value_of(c);
    if (v < 0) throw IoError("base64_decode: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

inline std::string doubles_to_base64(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * sizeof(double));
  // little-endian on all supported targets
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return base64_encode(bytes.data(), bytes.size());
}

inline std::vector<double> base64_to_doubles(const std::string& text) {
  const std::vector<unsigned char> bytes = base64_decode(text);
  if (bytes.size() % sizeof(double) != 0) {
    throw IoError("base64_to_doubles: payload is not a whole number of doubles");
  }
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace boostdet
