#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "pdr/embedder.hpp"
#include "pdr/vector_index.hpp"
#include "support/fixtures.hpp"

using namespace pdr;

namespace {

CorpusHandle corpus_from_texts(const std::vector<std::string>& texts,
                               Origin kind = Origin::Private) {
  CorpusHandle corpus;
  corpus.corpus_id = "test";
  corpus.kind = kind;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    char id[8];
    std::snprintf(id, sizeof(id), "c%02zu", i);
    Chunk chunk;
    chunk.chunk_id = id;
    chunk.doc_id = id;
    chunk.seq = 0;
    chunk.text = texts[i];
    chunk.span_end = texts[i].size();
    corpus.chunks.push_back(std::move(chunk));
  }
  return corpus;
}

// Independent ranking: embeds everything itself, scores with its own loop and
// applies a full sort over all chunks.
std::vector<std::pair<std::string, double>> oracle_topk(const CorpusHandle& corpus,
                                                        const Embedder& embedder,
                                                        const std::string& query, int k) {
  const auto query_vec = embedder.embed(query);
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& chunk : corpus.chunks) {
    const auto vec = embedder.embed(chunk.text);
    double sum = 0.0;
    for (std::size_t i = 0; i < vec.size(); ++i)
      sum += static_cast<double>(query_vec[i]) * vec[i];
    scored.emplace_back(chunk.chunk_id, sum);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

double norm_of(const std::vector<float>& vec) {
  double sum = 0.0;
  for (float v : vec) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

template <typename T>
void put_le(std::ofstream& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

}  // namespace

TEST_SUITE("vector_index") {

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("hashing embedder is a normalized bag of words") {
  HashingEmbedder embedder(64);
  CHECK(embedder.dim() == 64);
  CHECK(embedder.id() == "hash-64");

  auto vec = embedder.embed("alpha beta gamma");
  CHECK(norm_of(vec) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(embedder.embed("alpha beta gamma") == vec);          // deterministic
  CHECK(embedder.embed("gamma  beta alpha") == vec);         // order-free
  CHECK(embedder.embed("Alpha, BETA; gamma!") == vec);       // case and punctuation
  CHECK(embedder.embed("alpha beta delta") != vec);

  auto zero = embedder.embed("!!! ---");
  CHECK(norm_of(zero) == 0.0);

  CHECK_THROWS_AS(embedder.embed(""), Error);
  CHECK_THROWS_AS(HashingEmbedder(0), Error);
  CHECK(HashingEmbedder().dim() == 384);
}

TEST_CASE("search matches a full-sort oracle on seeded queries with ties") {
  const std::vector<std::string> vocab = {"ant",  "bee",  "cat",  "dog", "elk",
                                          "fox",  "gnu",  "hen",  "ibis", "jay",
                                          "koi",  "lark", "mole", "newt", "owl"};
  std::mt19937 rng(20260814);
  std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);

  std::vector<std::string> texts;
  for (int i = 0; i < 50; ++i) {
    if (i % 10 == 1) {
      texts.push_back(texts.back());  // exact duplicate forces score ties
      continue;
    }
    std::string text;
    for (int w = 0; w < 5; ++w) {
      if (w > 0) text += ' ';
      text += vocab[word(rng)];
    }
    texts.push_back(std::move(text));
  }
  auto corpus = corpus_from_texts(texts);
  auto embedder = std::make_shared<HashingEmbedder>(96);
  auto index = VectorIndex::build(corpus, embedder);
  REQUIRE(index.size() == 50);

  for (int q = 0; q < 20; ++q) {
    std::string query = vocab[word(rng)];
    const int extra = q % 3;
    for (int w = 0; w < extra; ++w) query += ' ' + vocab[word(rng)];
    const int k = 1 + q % 10;

    auto got = index.search(query, k);
    auto want = oracle_topk(corpus, *embedder, query, k);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].chunk.chunk_id == want[i].first);
      CHECK(std::fabs(got[i].score - want[i].second) <= 1e-12);
      CHECK(got[i].origin == Origin::Private);
    }
  }
  CHECK(index.search_count() == 20);
}

TEST_CASE("searching a chunk's own text scores 1.0") {
  auto corpus = corpus_from_texts({"unique marsupial treatise", "different words entirely",
                                   "third chunk marsupial adjacent"});
  auto index = VectorIndex::build(corpus, std::make_shared<HashingEmbedder>(128));
  auto hits = index.search("unique marsupial treatise", 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].chunk.chunk_id == "c00");
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("search clamps k to the index size and rejects k < 1") {
  auto corpus = corpus_from_texts({"one", "two"}, Origin::Public);
  auto index = VectorIndex::build(corpus, std::make_shared<HashingEmbedder>(32));
  auto hits = index.search("one", 10);
  CHECK(hits.size() == 2);
  CHECK(hits[0].origin == Origin::Public);
  CHECK(index.origin() == Origin::Public);
  CHECK_THROWS_AS(index.search("one", 0), Error);
}

TEST_CASE("empty corpus yields an empty index") {
  CorpusHandle corpus;
  auto index = VectorIndex::build(corpus, std::make_shared<HashingEmbedder>(32));
  CHECK(index.size() == 0);
  CHECK(index.search("anything", 3).empty());
}

TEST_CASE("moved index keeps entries and counters") {
  auto corpus = corpus_from_texts({"alpha", "beta"});
  auto index = VectorIndex::build(corpus, std::make_shared<HashingEmbedder>(32));
  index.search("alpha", 1);
  VectorIndex moved = std::move(index);
  CHECK(moved.size() == 2);
  CHECK(moved.search_count() == 1);
  CHECK(moved.search("alpha", 1)[0].chunk.chunk_id == "c00");
}

TEST_CASE("cache round-trip reproduces search results exactly") {
  fixtures::TempDir dir;
  auto cache = dir.path / "index.bin";
  auto corpus = corpus_from_texts({"ant bee", "cat dog", "elk fox", "gnu hen"});
  auto embedder = std::make_shared<HashingEmbedder>(16);

  auto fresh = VectorIndex::build(corpus, embedder);
  fresh.save_cache(cache);
  REQUIRE(std::filesystem::exists(cache));

  auto loaded = VectorIndex::build_cached(corpus, embedder, cache);
  auto a = fresh.search("cat dog", 4);
  auto b = loaded.search("cat dog", 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].chunk.chunk_id == b[i].chunk.chunk_id);
    CHECK(a[i].score == b[i].score);  // same stored floats, bit-identical
  }
}

TEST_CASE("build_cached actually reads vectors from a valid cache") {
  fixtures::TempDir dir;
  auto cache = dir.path / "index.bin";
  auto corpus = corpus_from_texts({"ant bee", "cat dog", "elk fox"});
  auto embedder = std::make_shared<HashingEmbedder>(8);

  // Handcrafted cache: chunk c00 gets an all-ones vector, the rest zeros. A
  // fresh build would rank "cat dog" first; the cache must rank c00 first.
  {
    std::ofstream out(cache, std::ios::binary);
    out.write("PDRIX1", 6);
    put_le<std::uint32_t>(out, 8);
    put_le<std::uint64_t>(out, 3);
    int i = 0;
    for (const auto& chunk : corpus.chunks) {
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(chunk.chunk_id.size()));
      out.write(chunk.chunk_id.data(), static_cast<std::streamsize>(chunk.chunk_id.size()));
      const float fill = i++ == 0 ? 1.0f : 0.0f;
      std::uint32_t bits;
      std::memcpy(&bits, &fill, sizeof(bits));
      for (int d = 0; d < 8; ++d) put_le<std::uint32_t>(out, bits);
    }
  }
  auto loaded = VectorIndex::build_cached(corpus, embedder, cache);
  auto hits = loaded.search("cat dog", 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].chunk.chunk_id == "c00");
  CHECK(hits[0].score > 0.5);
}

TEST_CASE("build_cached falls back to a fresh build on any mismatch") {
  fixtures::TempDir dir;
  auto cache = dir.path / "index.bin";
  auto corpus = corpus_from_texts({"ant bee", "cat dog", "elk fox"});
  auto embedder = std::make_shared<HashingEmbedder>(16);
  VectorIndex::build(corpus, embedder).save_cache(cache);
  const std::string good = fixtures::read_file(cache);

  auto expect_fresh_results = [&] {
    auto index = VectorIndex::build_cached(corpus, embedder, cache);
    auto hits = index.search("cat dog", 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].chunk.chunk_id == "c01");
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));
  };

  SUBCASE("missing file") {
    std::filesystem::remove(cache);
    expect_fresh_results();
  }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    fixtures::write_file(cache, bad);
    expect_fresh_results();
  }
  SUBCASE("truncated payload") {
    fixtures::write_file(cache, good.substr(0, good.size() / 2));
    expect_fresh_results();
  }
  SUBCASE("dim mismatch") {
    auto other = VectorIndex::build(corpus, std::make_shared<HashingEmbedder>(8));
    other.save_cache(cache);
    expect_fresh_results();  // cache says dim 8, embedder wants 16
  }
  SUBCASE("chunk count mismatch") {
    auto bigger = corpus_from_texts({"ant bee", "cat dog", "elk fox", "gnu hen"});
    VectorIndex::build(bigger, embedder).save_cache(cache);
    expect_fresh_results();
  }
  SUBCASE("chunk id mismatch") {
    auto renamed = corpus_from_texts({"ant bee", "cat dog", "elk fox"});
    renamed.chunks[2].chunk_id = "zz9";
    VectorIndex::build(renamed, embedder).save_cache(cache);
    expect_fresh_results();
  }
}

}  // TEST_SUITE
