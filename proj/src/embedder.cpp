#include "pdr/embedder.hpp"

#include <cctype>
#include <cmath>

#include "pdr/errors.hpp"

namespace pdr {

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

HashingEmbedder::HashingEmbedder(int dim) : dim_(dim) {
  if (dim <= 0) throw Error(Errc::precondition, "embedding dim must be positive");
}

std::string HashingEmbedder::id() const { return "hash-" + std::to_string(dim_); }

std::vector<float> HashingEmbedder::embed(const std::string& text) const {
  if (text.empty()) throw Error(Errc::precondition, "cannot embed empty text");
  std::vector<float> vec(static_cast<std::size_t>(dim_), 0.0f);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    vec[fnv1a64(token) % static_cast<std::uint64_t>(dim_)] += 1.0f;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm_sq = 0.0;
  for (float v : vec) norm_sq += static_cast<double>(v) * v;
  if (norm_sq > 0.0) {
    float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
    for (float& v : vec) v *= inv;
  }
  return vec;
}

}  // namespace pdr
