#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/cluster.hpp"
#include "tunekit/corpus.hpp"
#include "tunekit/detail/hashing.hpp"
#include "tunekit/detail/jsonl.hpp"
#include "tunekit/detail/rng.hpp"
#include "tunekit/errors.hpp"
#include "tunekit/ifd.hpp"

namespace tunekit {

enum class SelectionStrategy { combined, random, ifd_global, kmeans_random };

inline const char* strategy_name(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::combined: return "combined";
    case SelectionStrategy::random: return "random";
    case SelectionStrategy::ifd_global: return "ifd-global";
    case SelectionStrategy::kmeans_random: return "kmeans-random";
  }
  return "combined";
}

inline SelectionStrategy strategy_from_name(const std::string& name) {
  if (name == "combined") return SelectionStrategy::combined;
  if (name == "random") return SelectionStrategy::random;
  if (name == "ifd-global") return SelectionStrategy::ifd_global;
  if (name == "kmeans-random") return SelectionStrategy::kmeans_random;
  fail(ErrorCode::bad_config, "unknown selection strategy '" + name + "'");
}

struct SelectionEntry {
  std::string id;
  std::uint32_t cluster = 0;
  double ifd = 0.0;
  bool selected = false;
};

/// Which samples a strategy picked, one entry per corpus sample in corpus
/// order. Cluster and score fields are zero for strategies that do not use
/// them.
struct SelectionManifest {
  SelectionStrategy strategy = SelectionStrategy::combined;
  double m_percent = 0.0;
  std::uint64_t seed = 0;
  std::vector<SelectionEntry> entries;
  std::size_t selected_count = 0;
};

namespace detail {

inline std::size_t quota(double m_percent, std::size_t group_size) {
  double exact = m_percent * static_cast<double>(group_size) / 100.0;
  auto q = static_cast<std::size_t>(std::ceil(exact));
  if (q < 1) q = 1;
  return std::min(q, group_size);
}

inline void check_m_percent(double m_percent) {
  if (!(m_percent > 0.0) || m_percent > 100.0) {
    fail(ErrorCode::bad_config, "m_percent must be in (0, 100]");
  }
}

inline std::unordered_map<std::string, double> score_index(
    const std::vector<IfdRecord>& scores) {
  std::unordered_map<std::string, double> index;
  index.reserve(scores.size());
  for (const auto& r : scores) index.emplace(r.id, r.ifd);
  return index;
}

inline double score_of(const std::unordered_map<std::string, double>& index,
                       const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) fail(ErrorCode::score_missing, "no IFD score for id '" + id + "'");
  return it->second;
}

// Uniform draw of q member positions without replacement (partial
// Fisher-Yates over the member list, in member order).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t q,
                                                           Rng& rng) {
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  for (std::size_t i = 0; i < q; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
    std::swap(positions[i], positions[j]);
  }
  positions.resize(q);
  return positions;
}

}  // namespace detail

/// Top m% of each cluster by IFD descending, ties broken by corpus order.
/// Quotas are per-cluster ceilings, so every cluster keeps representation.
inline SelectionManifest select_combined(const Corpus& corpus, const Clustering& clustering,
                                         const std::vector<IfdRecord>& scores,
                                         double m_percent) {
  detail::check_m_percent(m_percent);
  if (clustering.assignment.size() != corpus.size()) {
    fail(ErrorCode::dimension_mismatch, "clustering does not cover the corpus");
  }
  auto score_index = detail::score_index(scores);

  SelectionManifest manifest;
  manifest.strategy = SelectionStrategy::combined;
  manifest.m_percent = m_percent;
  manifest.entries.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    manifest.entries.push_back({corpus.samples[i].id, clustering.assignment[i],
                                detail::score_of(score_index, corpus.samples[i].id), false});
  }

  std::vector<std::vector<std::size_t>> members(clustering.k);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    members[clustering.assignment[i]].push_back(i);
  }
  for (auto& cluster_members : members) {
    if (cluster_members.empty()) continue;
    std::sort(cluster_members.begin(), cluster_members.end(),
              [&](std::size_t a, std::size_t b) {
                if (manifest.entries[a].ifd != manifest.entries[b].ifd) {
                  return manifest.entries[a].ifd > manifest.entries[b].ifd;
                }
                return a < b;
              });
    std::size_t q = detail::quota(m_percent, cluster_members.size());
    for (std::size_t r = 0; r < q; ++r) manifest.entries[cluster_members[r]].selected = true;
  }
  for (const auto& e : manifest.entries) manifest.selected_count += e.selected ? 1 : 0;
  return manifest;
}

inline SelectionManifest select_random(const Corpus& corpus, double m_percent,
                                       std::uint64_t seed) {
  detail::check_m_percent(m_percent);
  SelectionManifest manifest;
  manifest.strategy = SelectionStrategy::random;
  manifest.m_percent = m_percent;
  manifest.seed = seed;
  manifest.entries.reserve(corpus.size());
  for (const auto& sample : corpus.samples) manifest.entries.push_back({sample.id, 0, 0.0, false});

  detail::Rng rng(seed);
  std::size_t q = detail::quota(m_percent, corpus.size());
  for (std::size_t pos : detail::sample_without_replacement(corpus.size(), q, rng)) {
    manifest.entries[pos].selected = true;
  }
  manifest.selected_count = q;
  return manifest;
}

inline SelectionManifest select_ifd_global(const Corpus& corpus,
                                           const std::vector<IfdRecord>& scores,
                                           double m_percent) {
  detail::check_m_percent(m_percent);
  auto score_index = detail::score_index(scores);

  SelectionManifest manifest;
  manifest.strategy = SelectionStrategy::ifd_global;
  manifest.m_percent = m_percent;
  manifest.entries.reserve(corpus.size());
  for (const auto& sample : corpus.samples) {
    manifest.entries.push_back({sample.id, 0, detail::score_of(score_index, sample.id), false});
  }

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (manifest.entries[a].ifd != manifest.entries[b].ifd) {
      return manifest.entries[a].ifd > manifest.entries[b].ifd;
    }
    return a < b;
  });
  std::size_t q = detail::quota(m_percent, corpus.size());
  for (std::size_t r = 0; r < q; ++r) manifest.entries[order[r]].selected = true;
  manifest.selected_count = q;
  return manifest;
}

/// Cluster-stratified uniform sampling: consistency without the complexity
/// signal. Per-cluster draws are seeded with seed xor cluster * golden, so
/// k=1 degenerates to select_random with the same seed.
inline SelectionManifest select_kmeans_random(const Corpus& corpus, const Clustering& clustering,
                                              double m_percent, std::uint64_t seed) {
  detail::check_m_percent(m_percent);
  if (clustering.assignment.size() != corpus.size()) {
    fail(ErrorCode::dimension_mismatch, "clustering does not cover the corpus");
  }
  SelectionManifest manifest;
  manifest.strategy = SelectionStrategy::kmeans_random;
  manifest.m_percent = m_percent;
  manifest.seed = seed;
  manifest.entries.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    manifest.entries.push_back({corpus.samples[i].id, clustering.assignment[i], 0.0, false});
  }

  std::vector<std::vector<std::size_t>> members(clustering.k);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    members[clustering.assignment[i]].push_back(i);
  }
  for (std::uint32_t c = 0; c < clustering.k; ++c) {
    if (members[c].empty()) continue;
    detail::Rng rng(seed ^ (static_cast<std::uint64_t>(c) * detail::kGolden64));
    std::size_t q = detail::quota(m_percent, members[c].size());
    for (std::size_t pos : detail::sample_without_replacement(members[c].size(), q, rng)) {
      manifest.entries[members[c][pos]].selected = true;
    }
    manifest.selected_count += q;
  }
  return manifest;
}

inline std::vector<std::size_t> per_cluster_selected(const SelectionManifest& manifest,
                                                     std::size_t k) {
  std::vector<std::size_t> counts(k, 0);
  for (const auto& e : manifest.entries) {
    if (e.selected) ++counts[e.cluster];
  }
  return counts;
}

inline void write_selection_manifest(const SelectionManifest& manifest,
                                     const std::string& path) {
  detail::JsonlWriter out(path);
  for (const auto& e : manifest.entries) {
    out.write({{"id", e.id}, {"cluster", e.cluster}, {"ifd", e.ifd}, {"selected", e.selected}});
  }
}

inline SelectionManifest load_selection_manifest(const std::string& path) {
  SelectionManifest manifest;
  detail::for_each_jsonl(path, [&](std::size_t line, nlohmann::json record) {
    auto where = path + ":" + std::to_string(line);
    if (!record.contains("id") || !record.contains("selected")) {
      fail(ErrorCode::malformed_record, where + ": expected id and selected");
    }
    SelectionEntry e;
    e.id = detail::field_as_string(record["id"]);
    e.cluster = record.value("cluster", 0u);
    e.ifd = record.value("ifd", 0.0);
    e.selected = record["selected"].get<bool>();
    manifest.selected_count += e.selected ? 1 : 0;
    manifest.entries.push_back(std::move(e));
  });
  return manifest;
}

inline nlohmann::json selection_summary(const SelectionManifest& manifest) {
  std::uint32_t max_cluster = 0;
  for (const auto& e : manifest.entries) max_cluster = std::max(max_cluster, e.cluster);
  auto counts = per_cluster_selected(manifest, max_cluster + 1);
  std::vector<std::size_t> sizes(max_cluster + 1, 0);
  std::size_t ifd_gt1_total = 0, ifd_gt1_selected = 0;
  for (const auto& e : manifest.entries) {
    ++sizes[e.cluster];
    if (e.ifd > 1.0) {
      ++ifd_gt1_total;
      if (e.selected) ++ifd_gt1_selected;
    }
  }
  nlohmann::json per_cluster = nlohmann::json::array();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    per_cluster.push_back({{"cluster", c}, {"size", sizes[c]}, {"selected", counts[c]}});
  }
  return {{"strategy", strategy_name(manifest.strategy)},
          {"m_percent", manifest.m_percent},
          {"seed", manifest.seed},
          {"n", manifest.entries.size()},
          {"selected_count", manifest.selected_count},
          {"per_cluster", per_cluster},
          {"ifd_gt1_total", ifd_gt1_total},
          {"ifd_gt1_selected", ifd_gt1_selected}};
}

/// Training-ready corpus of just the selected samples, in corpus order.
inline Corpus selected_subset(const Corpus& corpus, const SelectionManifest& manifest) {
  if (manifest.entries.size() != corpus.size()) {
    fail(ErrorCode::dimension_mismatch, "manifest does not cover the corpus");
  }
  Corpus subset;
  subset.source_path = corpus.source_path;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (manifest.entries[i].selected) subset.samples.push_back(corpus.samples[i]);
  }
  return subset;
}

}  // namespace tunekit
