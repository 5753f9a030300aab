#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <catch2/catch.hpp>

#include "helpers.hpp"
#include "tunekit/cluster.hpp"

using namespace tunekit;

namespace {

EmbeddingSet points_to_set(const std::vector<std::vector<double>>& points) {
  EmbeddingSet set;
  set.dim = points.front().size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    set.entries.push_back({"p" + std::to_string(i), points[i]});
  }
  return set;
}

double brute_force_dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum;
}

// 300 points around three centers whose pairwise distance is far larger than
// the within-cluster spread; true labels retained as the oracle.
struct SeparatedData {
  EmbeddingSet set;
  std::vector<int> labels;
};

SeparatedData make_separated(std::uint64_t seed) {
  std::vector<std::vector<double>> centers = {
      {1, 0, 0, 0, 0, 0, 0, 0}, {0, 1, 0, 0, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0, 0, 0}};
  std::mt19937_64 gen(seed);
  auto noise = [&] { return (static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5) * 0.04; };
  SeparatedData data;
  std::vector<std::vector<double>> points;
  for (int i = 0; i < 300; ++i) {
    int label = i % 3;
    auto p = centers[label];
    for (auto& x : p) x += noise();
    points.push_back(std::move(p));
    data.labels.push_back(label);
  }
  data.set = points_to_set(points);
  return data;
}

}  // namespace

TEST_CASE("kmeans degenerate configurations") {
  SECTION("k equal to n puts every point in its own cluster") {
    auto set = points_to_set({{1, 0}, {0, 1}, {-1, 0}, {0, -1}});
    auto clustering = kmeans_fit(set, 4, 3);
    CHECK(clustering.inertia == 0.0);
    std::set<std::uint32_t> used(clustering.assignment.begin(), clustering.assignment.end());
    CHECK(used.size() == 4);
  }

  SECTION("k=1 yields the mean vector and total variance") {
    auto set = points_to_set({{2, 0}, {0, 2}, {4, 2}, {2, 4}});
    auto clustering = kmeans_fit(set, 1, 9);
    REQUIRE(clustering.centroids.size() == 1);
    CHECK(clustering.centroids[0][0] == Approx(2.0).margin(1e-12));
    CHECK(clustering.centroids[0][1] == Approx(2.0).margin(1e-12));
    double variance = 0;
    for (const auto& e : set.entries) {
      variance += brute_force_dist2(e.vector, {2.0, 2.0});
    }
    CHECK(clustering.inertia == Approx(variance).epsilon(1e-12));
  }

  SECTION("k larger than n is an error") {
    auto set = points_to_set({{1, 0}, {0, 1}});
    try {
      kmeans_fit(set, 3, 1);
      FAIL("expected k_too_large");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::k_too_large);
    }
  }

  SECTION("non-finite embedding is an error") {
    auto set = points_to_set({{1, 0}, {std::nan(""), 1}});
    try {
      kmeans_fit(set, 1, 1);
      FAIL("expected non_finite_embedding");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::non_finite_embedding);
      CHECK(std::string(e.what()).find("p1") != std::string::npos);
    }
  }
}

TEST_CASE("kmeans recovers well-separated clusters with full purity") {
  auto data = make_separated(17);
  auto clustering = kmeans_fit(data.set, 3, 5);

  // each found cluster must contain exactly one generating label
  std::vector<std::set<int>> contents(3);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    contents[clustering.assignment[i]].insert(data.labels[i]);
  }
  for (const auto& c : contents) CHECK(c.size() == 1);

  SECTION("inertia trace is non-increasing") {
    for (std::size_t i = 1; i < clustering.inertia_trace.size(); ++i) {
      CHECK(clustering.inertia_trace[i] <= clustering.inertia_trace[i - 1] + 1e-12);
    }
  }

  SECTION("identical seed reproduces the clustering exactly") {
    auto again = kmeans_fit(data.set, 3, 5);
    CHECK(again.assignment == clustering.assignment);
    CHECK(again.centroids == clustering.centroids);
    CHECK(again.inertia == clustering.inertia);
  }

  SECTION("worker count never changes the result") {
    auto one = kmeans_fit(data.set, 3, 5, 100, 1e-4, 1);
    auto four = kmeans_fit(data.set, 3, 5, 100, 1e-4, 4);
    CHECK(one.assignment == four.assignment);
    CHECK(one.centroids == four.centroids);
    CHECK(one.inertia == four.inertia);
  }
}

TEST_CASE("assignment is the brute-force argmin with ties toward low index") {
  SECTION("point equal to a centroid") {
    auto set = points_to_set({{0.5, 0.5}});
    std::vector<std::vector<double>> centroids = {{1, 0}, {0, 1}, {0.5, 0.5}};
    CHECK(assign(set, centroids)[0] == 2);
  }

  SECTION("equidistant point goes to the lowest index") {
    auto set = points_to_set({{0.0, 0.7}});
    std::vector<std::vector<double>> centroids = {{1, 0}, {-1, 0}};
    CHECK(assign(set, centroids)[0] == 0);
  }

  SECTION("random points match an exhaustive scan") {
    std::mt19937_64 gen(23);
    auto rnd = [&] { return static_cast<double>(gen() >> 11) * 0x1.0p-53; };
    std::vector<std::vector<double>> points, centroids;
    for (int i = 0; i < 400; ++i) points.push_back({rnd(), rnd(), rnd()});
    for (int c = 0; c < 7; ++c) centroids.push_back({rnd(), rnd(), rnd()});
    auto set = points_to_set(points);
    auto assignment = assign(set, centroids);
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::uint32_t best = 0;
      double best_d2 = brute_force_dist2(points[i], centroids[0]);
      for (std::uint32_t c = 1; c < centroids.size(); ++c) {
        double d2 = brute_force_dist2(points[i], centroids[c]);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = c;
        }
      }
      REQUIRE(assignment[i] == best);
    }
  }

  SECTION("dimension mismatch is an error") {
    auto set = points_to_set({{1, 0}});
    try {
      assign(set, {{1, 0, 0}});
      FAIL("expected dimension_mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::dimension_mismatch);
    }
  }
}

TEST_CASE("kmeans result assignments are argmin against returned centroids") {
  auto data = make_separated(31);
  auto clustering = kmeans_fit(data.set, 5, 11);
  for (std::size_t i = 0; i < data.set.size(); ++i) {
    double assigned = brute_force_dist2(data.set.entries[i].vector,
                                        clustering.centroids[clustering.assignment[i]]);
    for (const auto& c : clustering.centroids) {
      REQUIRE(assigned <= brute_force_dist2(data.set.entries[i].vector, c) + 1e-12);
    }
  }
}

TEST_CASE("duplicate points trigger empty-cluster repair") {
  auto set = points_to_set({{1, 0}, {1, 0}, {0, 1}, {-1, 0}});
  auto clustering = kmeans_fit(set, 4, 2);
  std::vector<int> counts(4, 0);
  for (auto a : clustering.assignment) ++counts[a];
  for (int c : counts) CHECK(c == 1);
  CHECK(clustering.inertia == 0.0);
}

TEST_CASE("clustering persists through JSON") {
  testutil::TempDir dir("clusterio");
  auto data = make_separated(41);
  auto clustering = kmeans_fit(data.set, 3, 8);
  auto path = dir.file("clustering.json");
  write_clustering(clustering, path);
  auto back = load_clustering(path);
  CHECK(back.k == clustering.k);
  CHECK(back.seed == clustering.seed);
  CHECK(back.assignment == clustering.assignment);
  CHECK(back.centroids == clustering.centroids);
  CHECK(back.inertia == clustering.inertia);
  CHECK(back.iterations_run == clustering.iterations_run);
}
