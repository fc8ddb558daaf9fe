#include "uqasr/common.hpp"
#include "uqasr/rng.hpp"

#include <sstream>

namespace uqasr {

std::string format_transcript(const Transcript& digits) {
  std::string out;
  for (size_t i = 0; i < digits.size(); ++i) {
    if (i) out += ' ';
    out += static_cast<char>('0' + digits[i]);
  }
  return out;
}

Transcript parse_transcript(std::string_view text) {
  Transcript digits;
  std::istringstream in{std::string(text)};
  std::string token;
  while (in >> token) {
    if (token.size() != 1 || token[0] < '0' || token[0] > '9') {
      throw ParseError("invalid transcript token '" + token + "'");
    }
    digits.push_back(token[0] - '0');
  }
  return digits;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view data, uint64_t basis) {
  uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t derive_seed(uint64_t parent, std::string_view tag, uint64_t index) {
  return splitmix64(splitmix64(parent ^ fnv1a64(tag)) + index);
}

}  // namespace uqasr
