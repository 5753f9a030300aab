#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <catch2/catch.hpp>

#include "tunekit/select.hpp"

using namespace tunekit;

namespace {

struct Fixture {
  Corpus corpus;
  Clustering clustering;
  std::vector<IfdRecord> scores;
};

Fixture random_fixture(std::size_t n, std::size_t k, std::uint64_t seed) {
  Fixture f;
  std::mt19937_64 gen(seed);
  f.clustering.k = k;
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = "s" + std::to_string(i);
    f.corpus.samples.push_back({id, "instruction " + id, "code " + id});
    f.clustering.assignment.push_back(static_cast<std::uint32_t>(gen() % k));
    IfdRecord r;
    r.id = id;
    r.ifd = 0.1 + static_cast<double>(gen() >> 11) * 0x1.0p-53;
    f.scores.push_back(r);
  }
  return f;
}

std::set<std::string> selected_ids(const SelectionManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (e.selected) ids.insert(e.id);
  }
  return ids;
}

// Brute-force oracle: per-cluster stable sort on (ifd desc, corpus order) and
// an explicit ceiling quota.
std::set<std::string> combined_oracle(const Fixture& f, double m) {
  std::set<std::string> expected;
  for (std::uint32_t c = 0; c < f.clustering.k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < f.corpus.size(); ++i) {
      if (f.clustering.assignment[i] == c) members.push_back(i);
    }
    if (members.empty()) continue;
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return f.scores[a].ifd > f.scores[b].ifd;
    });
    auto quota = static_cast<std::size_t>(
        std::ceil(m * static_cast<double>(members.size()) / 100.0));
    for (std::size_t r = 0; r < quota && r < members.size(); ++r) {
      expected.insert(f.corpus.samples[members[r]].id);
    }
  }
  return expected;
}

}  // namespace

TEST_CASE("select_combined") {
  SECTION("m=100 selects everything") {
    auto f = random_fixture(57, 4, 1);
    auto manifest = select_combined(f.corpus, f.clustering, f.scores, 100.0);
    CHECK(manifest.selected_count == 57);
  }

  SECTION("top 30% of a single cluster of ten") {
    Fixture f;
    f.clustering.k = 1;
    for (int i = 0; i < 10; ++i) {
      std::string id = "s" + std::to_string(i);
      f.corpus.samples.push_back({id, "i", "c"});
      f.clustering.assignment.push_back(0);
      IfdRecord r;
      r.id = id;
      r.ifd = 0.1 * (i + 1);  // 0.1 .. 1.0
      f.scores.push_back(r);
    }
    auto manifest = select_combined(f.corpus, f.clustering, f.scores, 30.0);
    CHECK(selected_ids(manifest) == std::set<std::string>{"s9", "s8", "s7"});
    CHECK(manifest.selected_count == 3);
  }

  SECTION("ties break toward corpus order") {
    Fixture f;
    f.clustering.k = 1;
    for (int i = 0; i < 6; ++i) {
      f.corpus.samples.push_back({"s" + std::to_string(i), "i", "c"});
      f.clustering.assignment.push_back(0);
      IfdRecord r;
      r.id = "s" + std::to_string(i);
      r.ifd = 0.5;
      f.scores.push_back(r);
    }
    auto manifest = select_combined(f.corpus, f.clustering, f.scores, 50.0);
    CHECK(selected_ids(manifest) == std::set<std::string>{"s0", "s1", "s2"});
  }

  SECTION("matches the brute-force per-cluster oracle on random data") {
    auto f = random_fixture(2000, 10, 77);
    for (double m : {10.0, 35.0, 60.0}) {
      auto manifest = select_combined(f.corpus, f.clustering, f.scores, m);
      REQUIRE(selected_ids(manifest) == combined_oracle(f, m));
    }
  }

  SECTION("per-cluster counts are exactly the ceiling quota") {
    auto f = random_fixture(997, 7, 13);
    auto manifest = select_combined(f.corpus, f.clustering, f.scores, 23.0);
    std::vector<std::size_t> sizes(7, 0);
    for (auto a : f.clustering.assignment) ++sizes[a];
    auto counts = per_cluster_selected(manifest, 7);
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(counts[c] == static_cast<std::size_t>(std::ceil(23.0 * double(sizes[c]) / 100.0)));
    }
  }

  SECTION("selections are nested as m grows") {
    auto f = random_fixture(500, 5, 3);
    std::set<std::string> previous;
    for (double m : {10.0, 20.0, 30.0, 40.0, 50.0, 60.0}) {
      auto current = selected_ids(select_combined(f.corpus, f.clustering, f.scores, m));
      CHECK(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
      previous = std::move(current);
    }
  }

  SECTION("a missing score is an error") {
    auto f = random_fixture(10, 2, 5);
    f.scores.pop_back();
    try {
      select_combined(f.corpus, f.clustering, f.scores, 50.0);
      FAIL("expected score_missing");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::score_missing);
      CHECK(std::string(e.what()).find("s9") != std::string::npos);
    }
  }

  SECTION("any strictly increasing score transform leaves the selection unchanged") {
    auto f = random_fixture(300, 4, 21);
    auto base = selected_ids(select_combined(f.corpus, f.clustering, f.scores, 40.0));
    auto transformed = f;
    for (auto& r : transformed.scores) r.ifd = 2.0 * r.ifd + 1.0;
    CHECK(selected_ids(select_combined(transformed.corpus, transformed.clustering,
                                       transformed.scores, 40.0)) == base);
  }
}

TEST_CASE("select_random") {
  auto f = random_fixture(20, 1, 2);

  SECTION("m=100 selects everything") {
    CHECK(select_random(f.corpus, 100.0, 9).selected_count == 20);
  }

  SECTION("same seed gives identical manifests") {
    auto a = select_random(f.corpus, 30.0, 123);
    auto b = select_random(f.corpus, 30.0, 123);
    CHECK(selected_ids(a) == selected_ids(b));
    CHECK(a.selected_count == 6);
  }

  SECTION("different seeds eventually differ") {
    auto a = selected_ids(select_random(f.corpus, 30.0, 1));
    bool any_different = false;
    for (std::uint64_t seed = 2; seed < 12; ++seed) {
      if (selected_ids(select_random(f.corpus, 30.0, seed)) != a) any_different = true;
    }
    CHECK(any_different);
  }

  SECTION("selection frequency over many seeds matches the binomial rate") {
    // n=20, m=30 -> quota 6, inclusion probability exactly 0.3
    int hits = 0;
    const int trials = 10000;
    for (int seed = 0; seed < trials; ++seed) {
      auto manifest = select_random(f.corpus, 30.0, static_cast<std::uint64_t>(seed));
      if (manifest.entries[7].selected) ++hits;
    }
    double sigma = std::sqrt(trials * 0.3 * 0.7);
    CHECK(std::abs(hits - trials * 0.3) <= 3.0 * sigma);
  }
}

TEST_CASE("select_ifd_global") {
  SECTION("equal scores fall back to corpus order") {
    Fixture f = random_fixture(10, 1, 4);
    for (auto& r : f.scores) r.ifd = 0.7;
    auto manifest = select_ifd_global(f.corpus, f.scores, 40.0);
    CHECK(selected_ids(manifest) == std::set<std::string>{"s0", "s1", "s2", "s3"});
  }

  SECTION("matches a full-sort oracle") {
    auto f = random_fixture(800, 1, 6);
    auto manifest = select_ifd_global(f.corpus, f.scores, 25.0);
    std::vector<std::size_t> order(f.corpus.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return f.scores[a].ifd > f.scores[b].ifd; });
    std::set<std::string> expected;
    for (std::size_t r = 0; r < 200; ++r) expected.insert(f.corpus.samples[order[r]].id);
    CHECK(selected_ids(manifest) == expected);
    CHECK(manifest.selected_count == 200);
  }
}

TEST_CASE("select_kmeans_random") {
  SECTION("per-cluster counts equal the ceiling quota") {
    auto f = random_fixture(1000, 8, 10);
    auto manifest = select_kmeans_random(f.corpus, f.clustering, 17.0, 5);
    std::vector<std::size_t> sizes(8, 0);
    for (auto a : f.clustering.assignment) ++sizes[a];
    auto counts = per_cluster_selected(manifest, 8);
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(counts[c] == static_cast<std::size_t>(std::ceil(17.0 * double(sizes[c]) / 100.0)));
    }
  }

  SECTION("k=1 behaves exactly as select_random") {
    auto f = random_fixture(64, 1, 30);
    auto stratified = select_kmeans_random(f.corpus, f.clustering, 27.0, 99);
    auto flat = select_random(f.corpus, 27.0, 99);
    CHECK(selected_ids(stratified) == selected_ids(flat));
  }

  SECTION("m=100 selects everything") {
    auto f = random_fixture(50, 5, 8);
    CHECK(select_kmeans_random(f.corpus, f.clustering, 100.0, 1).selected_count == 50);
  }
}

TEST_CASE("selection manifest structure and persistence") {
  auto f = random_fixture(40, 4, 6);
  auto manifest = select_combined(f.corpus, f.clustering, f.scores, 35.0);

  SECTION("every corpus id appears exactly once, in order") {
    REQUIRE(manifest.entries.size() == f.corpus.size());
    for (std::size_t i = 0; i < f.corpus.size(); ++i) {
      CHECK(manifest.entries[i].id == f.corpus.samples[i].id);
    }
  }

  SECTION("selected_count matches the flags") {
    std::size_t flagged = 0;
    for (const auto& e : manifest.entries) flagged += e.selected ? 1 : 0;
    CHECK(flagged == manifest.selected_count);
  }

  SECTION("invalid m is rejected") {
    for (double m : {0.0, -5.0, 100.5}) {
      try {
        select_combined(f.corpus, f.clustering, f.scores, m);
        FAIL("expected bad_config");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::bad_config);
      }
    }
  }

  SECTION("subset extraction keeps corpus order") {
    auto subset = selected_subset(f.corpus, manifest);
    REQUIRE(subset.size() == manifest.selected_count);
    auto expected = selected_ids(manifest);
    std::size_t cursor = 0;
    for (const auto& s : f.corpus.samples) {
      if (expected.count(s.id)) {
        CHECK(subset.samples[cursor].id == s.id);
        ++cursor;
      }
    }
  }
}
