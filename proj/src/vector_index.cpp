#include "pdr/vector_index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

constexpr char kCacheMagic[6] = {'P', 'D', 'R', 'I', 'X', '1'};

double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

template <typename T>
void write_le(std::ofstream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::ifstream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return true;
}

void write_f32_le(std::ofstream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  write_le(out, bits);
}

bool read_f32_le(std::ifstream& in, float& value) {
  std::uint32_t bits;
  if (!read_le(in, bits)) return false;
  std::memcpy(&value, &bits, sizeof(bits));
  return true;
}

}  // namespace

VectorIndex VectorIndex::build(const CorpusHandle& corpus,
                               std::shared_ptr<const Embedder> embedder) {
  if (!embedder) throw Error(Errc::precondition, "index build needs an embedder");
  VectorIndex index;
  index.embedder_ = std::move(embedder);
  index.origin_ = corpus.kind;
  index.entries_.reserve(corpus.chunks.size());
  for (const auto& chunk : corpus.chunks)
    index.entries_.push_back({chunk, index.embedder_->embed(chunk.text)});
  return index;
}

VectorIndex VectorIndex::build_cached(const CorpusHandle& corpus,
                                      std::shared_ptr<const Embedder> embedder,
                                      const std::filesystem::path& cache_path) {
  if (!embedder) throw Error(Errc::precondition, "index build needs an embedder");
  auto fallback = [&] { return build(corpus, embedder); };

  std::ifstream in(cache_path, std::ios::binary);
  if (!in) return fallback();
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kCacheMagic, 6) != 0) return fallback();
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  if (!read_le(in, dim) || !read_le(in, count)) return fallback();
  if (dim != static_cast<std::uint32_t>(embedder->dim()) || count != corpus.chunks.size())
    return fallback();

  VectorIndex index;
  index.embedder_ = embedder;  // keep `embedder` alive for the fallback path
  index.origin_ = corpus.kind;
  index.entries_.reserve(corpus.chunks.size());
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t id_len = 0;
    if (!read_le(in, id_len)) return fallback();
    std::string chunk_id(id_len, '\0');
    if (!in.read(chunk_id.data(), id_len)) return fallback();
    if (chunk_id != corpus.chunks[i].chunk_id) return fallback();
    std::vector<float> vec(dim);
    for (auto& v : vec)
      if (!read_f32_le(in, v)) return fallback();
    index.entries_.push_back({corpus.chunks[i], std::move(vec)});
  }
  return index;
}

std::vector<ScoredChunk> VectorIndex::search(const std::string& query, int k) const {
  if (k < 1) throw Error(Errc::precondition, "search k must be >= 1");
  search_count_.fetch_add(1);
  auto query_vec = embedder_->embed(query);

  std::vector<ScoredChunk> scored;
  scored.reserve(entries_.size());
  for (const auto& entry : entries_)
    scored.push_back({entry.chunk, dot(query_vec, entry.vec), origin_});
  std::sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk.chunk_id < b.chunk.chunk_id;
  });
  if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

void VectorIndex::save_cache(const std::filesystem::path& path) const {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::config_error, "cannot write index cache: " + path.string());
    out.write(kCacheMagic, 6);
    write_le(out, static_cast<std::uint32_t>(embedder_->dim()));
    write_le(out, static_cast<std::uint64_t>(entries_.size()));
    for (const auto& entry : entries_) {
      write_le(out, static_cast<std::uint32_t>(entry.chunk.chunk_id.size()));
      out.write(entry.chunk.chunk_id.data(),
                static_cast<std::streamsize>(entry.chunk.chunk_id.size()));
      for (float v : entry.vec) write_f32_le(out, v);
    }
    if (!out) throw Error(Errc::config_error, "short write on index cache: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace pdr
