#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace pdr {

/// Text-to-vector backend. Implementations must be deterministic and return
/// L2-normalized vectors (or the zero vector when the text has no tokens).
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual std::string id() const = 0;
  virtual std::vector<float> embed(const std::string& text) const = 0;
};

std::uint64_t fnv1a64(std::string_view data);

/// Feature-hashing bag-of-tokens embedder: lowercase, split on
/// non-alphanumeric, bucket each token by hash, accumulate, L2-normalize.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(int dim = 384);

  int dim() const override { return dim_; }
  std::string id() const override;
  std::vector<float> embed(const std::string& text) const override;

 private:
  int dim_;
};

}  // namespace pdr
