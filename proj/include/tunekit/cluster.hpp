#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/detail/jsonl.hpp"
#include "tunekit/detail/parallel.hpp"
#include "tunekit/detail/rng.hpp"
#include "tunekit/embed.hpp"
#include "tunekit/errors.hpp"

namespace tunekit {

struct Clustering {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> centroids;
  std::vector<std::uint32_t> assignment;  // aligned to corpus order
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_trace;  // one entry per assignment pass
};

namespace detail {

inline double dist2(const double* a, const double* b, std::size_t dim) {
  double sum = 0;
  for (std::size_t j = 0; j < dim; ++j) {
    double diff = a[j] - b[j];
    sum += diff * diff;
  }
  return sum;
}

inline std::uint32_t nearest_centroid(const double* point,
                                      const std::vector<std::vector<double>>& centroids,
                                      std::size_t dim) {
  std::uint32_t best = 0;
  double best_d2 = dist2(point, centroids[0].data(), dim);
  for (std::uint32_t c = 1; c < centroids.size(); ++c) {
    double d2 = dist2(point, centroids[c].data(), dim);
    if (d2 < best_d2) {  // strict: ties stay with the lowest index
      best_d2 = d2;
      best = c;
    }
  }
  return best;
}

inline std::vector<std::vector<double>> kmeanspp_init(const EmbeddingSet& embeddings,
                                                      std::size_t k, Rng& rng) {
  const std::size_t n = embeddings.size();
  const std::size_t dim = embeddings.dim;
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  centers.push_back(embeddings.entries[rng.bounded(n)].vector);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = dist2(embeddings.entries[i].vector.data(), centers[0].data(), dim);
  }
  while (centers.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += d2[i];
    std::size_t pick;
    if (total > 0) {
      double r = rng.uniform01() * total;
      double cum = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (r < cum) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.bounded(n);
    }
    centers.push_back(embeddings.entries[pick].vector);
    const double* c = centers.back().data();
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], dist2(embeddings.entries[i].vector.data(), c, dim));
    }
  }
  return centers;
}

}  // namespace detail

inline std::vector<std::uint32_t> assign(const EmbeddingSet& embeddings,
                                         const std::vector<std::vector<double>>& centroids,
                                         unsigned workers = 0) {
  if (centroids.empty()) fail(ErrorCode::bad_config, "no centroids");
  for (const auto& c : centroids) {
    if (c.size() != embeddings.dim) {
      fail(ErrorCode::dimension_mismatch,
           "centroid dimension " + std::to_string(c.size()) + " != embedding dimension " +
               std::to_string(embeddings.dim));
    }
  }
  std::vector<std::uint32_t> assignment(embeddings.size());
  detail::for_blocks(embeddings.size(), workers,
                     [&](std::size_t, std::size_t begin, std::size_t end) {
                       for (std::size_t i = begin; i < end; ++i) {
                         assignment[i] = detail::nearest_centroid(
                             embeddings.entries[i].vector.data(), centroids, embeddings.dim);
                       }
                     });
  return assignment;
}

namespace detail {

// Give every empty cluster the point currently farthest from its centroid.
// The stolen point becomes the cluster's centroid, so its own contribution
// drops to zero and total inertia cannot increase.
inline void repair_empty_clusters(const EmbeddingSet& embeddings, std::size_t k,
                                  std::vector<std::uint32_t>& assignment,
                                  std::vector<std::vector<double>>& centroids) {
  const std::size_t n = embeddings.size();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignment) ++counts[a];
  for (std::uint32_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t farthest = n;
    double farthest_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[assignment[i]] <= 1) continue;  // never empty another cluster
      double d2 = dist2(embeddings.entries[i].vector.data(),
                        centroids[assignment[i]].data(), embeddings.dim);
      if (d2 > farthest_d2) {
        farthest_d2 = d2;
        farthest = i;
      }
    }
    if (farthest == n) continue;  // k > distinct points; leave for caller to verify
    --counts[assignment[farthest]];
    assignment[farthest] = c;
    counts[c] = 1;
    centroids[c] = embeddings.entries[farthest].vector;
  }
}

inline double compute_inertia(const EmbeddingSet& embeddings,
                              const std::vector<std::uint32_t>& assignment,
                              const std::vector<std::vector<double>>& centroids,
                              unsigned workers) {
  const std::size_t blocks = block_count(embeddings.size());
  std::vector<double> partial(blocks, 0.0);
  for_blocks(embeddings.size(), workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
    double sum = 0;
    for (std::size_t i = begin; i < end; ++i) {
      sum += dist2(embeddings.entries[i].vector.data(), centroids[assignment[i]].data(),
                   embeddings.dim);
    }
    partial[b] = sum;
  });
  double total = 0;
  for (double p : partial) total += p;  // fixed block order
  return total;
}

inline std::vector<std::vector<double>> compute_means(const EmbeddingSet& embeddings,
                                                      std::size_t k,
                                                      const std::vector<std::uint32_t>& assignment,
                                                      const std::vector<std::vector<double>>& previous,
                                                      unsigned workers) {
  const std::size_t dim = embeddings.dim;
  const std::size_t blocks = block_count(embeddings.size());
  std::vector<std::vector<double>> block_sums(blocks);
  std::vector<std::vector<std::size_t>> block_counts(blocks);
  for_blocks(embeddings.size(), workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
    auto& sums = block_sums[b];
    auto& counts = block_counts[b];
    sums.assign(k * dim, 0.0);
    counts.assign(k, 0);
    for (std::size_t i = begin; i < end; ++i) {
      const double* v = embeddings.entries[i].vector.data();
      double* dst = sums.data() + assignment[i] * dim;
      for (std::size_t j = 0; j < dim; ++j) dst[j] += v[j];
      ++counts[assignment[i]];
    }
  });

  std::vector<double> sums(k * dim, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t b = 0; b < blocks; ++b) {  // fold in block order
    for (std::size_t x = 0; x < k * dim; ++x) sums[x] += block_sums[b][x];
    for (std::size_t c = 0; c < k; ++c) counts[c] += block_counts[b][c];
  }
  std::vector<std::vector<double>> means(k, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      means[c] = previous[c];  // unreachable after repair; keep the centroid put
      continue;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      means[c][j] = sums[c * dim + j] / static_cast<double>(counts[c]);
    }
  }
  return means;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding on unit-norm vectors. Terminates
/// when the largest centroid displacement falls below tol or after max_iter
/// rounds, then runs one final assignment pass so the returned assignment is
/// the argmin against the returned centroids.
inline Clustering kmeans_fit(const EmbeddingSet& embeddings, std::size_t k,
                             std::uint64_t seed, std::size_t max_iter = 100,
                             double tol = 1e-4, unsigned workers = 0) {
  const std::size_t n = embeddings.size();
  if (k < 1 || k > n) {
    fail(ErrorCode::k_too_large,
         "k=" + std::to_string(k) + " outside [1, n=" + std::to_string(n) + "]");
  }
  for (const auto& entry : embeddings.entries) {
    for (double x : entry.vector) {
      if (!std::isfinite(x)) {
        fail(ErrorCode::non_finite_embedding, "id '" + entry.id + "'");
      }
    }
  }

  Clustering result;
  result.k = k;
  result.dim = embeddings.dim;
  result.seed = seed;

  detail::Rng rng(seed);
  auto centroids = detail::kmeanspp_init(embeddings, k, rng);

  for (std::size_t it = 0; it < max_iter; ++it) {
    auto assignment = assign(embeddings, centroids, workers);
    detail::repair_empty_clusters(embeddings, k, assignment, centroids);
    result.inertia_trace.push_back(
        detail::compute_inertia(embeddings, assignment, centroids, workers));
    result.iterations_run = it + 1;

    auto means = detail::compute_means(embeddings, k, assignment, centroids, workers);
    double max_shift2 = 0;
    for (std::size_t c = 0; c < k; ++c) {
      max_shift2 = std::max(
          max_shift2, detail::dist2(means[c].data(), centroids[c].data(), embeddings.dim));
    }
    centroids = std::move(means);
    if (std::sqrt(max_shift2) < tol) break;
  }

  result.assignment = assign(embeddings, centroids, workers);
  detail::repair_empty_clusters(embeddings, k, result.assignment, centroids);
  result.inertia = detail::compute_inertia(embeddings, result.assignment, centroids, workers);
  result.inertia_trace.push_back(result.inertia);
  result.centroids = std::move(centroids);
  return result;
}

inline nlohmann::json clustering_to_json(const Clustering& clustering) {
  return {{"k", clustering.k},
          {"dim", clustering.dim},
          {"seed", clustering.seed},
          {"centroids", clustering.centroids},
          {"assignment", clustering.assignment},
          {"inertia", clustering.inertia},
          {"iterations_run", clustering.iterations_run},
          {"inertia_trace", clustering.inertia_trace}};
}

inline Clustering clustering_from_json(const nlohmann::json& doc) {
  Clustering clustering;
  clustering.k = doc.at("k").get<std::size_t>();
  clustering.dim = doc.at("dim").get<std::size_t>();
  clustering.seed = doc.at("seed").get<std::uint64_t>();
  clustering.centroids = doc.at("centroids").get<std::vector<std::vector<double>>>();
  clustering.assignment = doc.at("assignment").get<std::vector<std::uint32_t>>();
  clustering.inertia = doc.at("inertia").get<double>();
  clustering.iterations_run = doc.at("iterations_run").get<std::size_t>();
  if (doc.contains("inertia_trace")) {
    clustering.inertia_trace = doc.at("inertia_trace").get<std::vector<double>>();
  }
  return clustering;
}

inline void write_clustering(const Clustering& clustering, const std::string& path) {
  detail::write_json_file(path, clustering_to_json(clustering));
}

inline Clustering load_clustering(const std::string& path) {
  return clustering_from_json(detail::read_json_file(path));
}

}  // namespace tunekit
