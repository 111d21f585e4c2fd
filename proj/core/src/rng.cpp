#include "igan/rng.hpp"

#include <cstdio>
#include <cstring>

namespace igan {

namespace {

std::uint64_t parse_u64_hex(const std::string& s) {
  if (s.empty() || s.size() > 16) throw DataError("rng state: bad hex field '" + s + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw DataError("rng state: bad hex field '" + s + "'");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

std::string u64_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// Fixed-width hex fields joined by ':'. The cached Box-Muller draw is part of
// the state, so a stream restored mid-pair continues bit-identically.
std::string Rng::serialize() const {
  std::uint64_t gauss_bits;
  static_assert(sizeof(gauss_bits) == sizeof(gauss_));
  std::memcpy(&gauss_bits, &gauss_, sizeof(gauss_bits));
  std::string out;
  for (auto s : state_) out += u64_hex(s) + ":";
  out += has_gauss_ ? "1" : "0";
  out += ":" + u64_hex(gauss_bits);
  return out;
}

Rng Rng::deserialize(const std::string& hex) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : hex) {
    if (c == ':') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  if (fields.size() != 6) throw DataError("rng state: expected 6 fields, got '" + hex + "'");
  Rng r;
  for (int i = 0; i < 4; ++i) r.state_[static_cast<std::size_t>(i)] = parse_u64_hex(fields[static_cast<std::size_t>(i)]);
  if (fields[4] == "1") r.has_gauss_ = true;
  else if (fields[4] == "0") r.has_gauss_ = false;
  else throw DataError("rng state: bad flag field '" + fields[4] + "'");
  const std::uint64_t gauss_bits = parse_u64_hex(fields[5]);
  std::memcpy(&r.gauss_, &gauss_bits, sizeof(r.gauss_));
  return r;
}

}  // namespace igan
