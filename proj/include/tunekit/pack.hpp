#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/detail/jsonl.hpp"
#include "tunekit/errors.hpp"

namespace tunekit {

enum class PackStrategy { dynamic_pack, pad_to_longest, pad_to_max, fixed_pack };

struct PackItem {
  std::string id;
  std::size_t len = 0;
};

struct Segment {
  std::string id;
  std::size_t start = 0;
  std::size_t len = 0;
};

/// One packed row: samples concatenated back to back, never exceeding the
/// context length.
struct Bin {
  std::vector<Segment> segments;
  std::size_t used = 0;
  std::size_t capacity = 0;

  bool fits(std::size_t len) const { return used + len <= capacity; }

  void place(const std::string& id, std::size_t len) {
    segments.push_back({id, used, len});
    used += len;
  }
};

struct PaddingStats {
  std::uint64_t total_real_tokens = 0;
  std::uint64_t total_padding_tokens = 0;
  std::uint64_t total_cells = 0;  // sum over batches of rows x padded width
  double padding_rate = 0.0;      // padding tokens / cells
  std::size_t bins_count = 0;
  std::int64_t rows_saved = 0;  // vs one row per sample
  std::uint64_t truncated_tokens = 0;
};

struct TruncationRecord {
  std::string id;
  std::size_t original_len = 0;
  std::size_t kept_len = 0;
};

struct PackPlan {
  PackStrategy strategy = PackStrategy::dynamic_pack;
  std::size_t context_len = 0;
  std::size_t batch_size = 0;
  std::size_t truncate_len = 0;  // fixed-pack only
  std::vector<std::vector<Bin>> batches;
  PaddingStats stats;
  std::vector<TruncationRecord> truncations;  // fixed-pack only
};

inline std::string pack_strategy_name(const PackPlan& plan) {
  switch (plan.strategy) {
    case PackStrategy::dynamic_pack: return "dynamic-pack";
    case PackStrategy::pad_to_longest: return "pad-to-longest";
    case PackStrategy::pad_to_max: return "pad-to-max";
    case PackStrategy::fixed_pack: return "fixed-pack-" + std::to_string(plan.truncate_len);
  }
  return "dynamic-pack";
}

namespace detail {

inline void check_pack_args(std::size_t context_len, std::size_t batch_size) {
  if (context_len < 1) fail(ErrorCode::bad_config, "context_len must be >= 1");
  if (batch_size < 1) fail(ErrorCode::bad_config, "batch_size must be >= 1");
}

inline void check_fits_context(const PackItem& item, std::size_t context_len) {
  if (item.len > context_len) {
    fail(ErrorCode::sample_exceeds_context,
         "sample '" + item.id + "' has " + std::to_string(item.len) +
             " tokens, context is " + std::to_string(context_len));
  }
}

// Every bin in a packed batch is padded to the widest bin of that batch.
inline void finalize_stats(PackPlan& plan, std::size_t n_items) {
  auto& stats = plan.stats;
  for (const auto& batch : plan.batches) {
    std::size_t width = 0;
    for (const auto& bin : batch) width = std::max(width, bin.used);
    for (const auto& bin : batch) {
      stats.total_real_tokens += bin.used;
      stats.total_padding_tokens += width - bin.used;
      ++stats.bins_count;
    }
    stats.total_cells += static_cast<std::uint64_t>(width) * batch.size();
  }
  stats.padding_rate =
      stats.total_cells == 0
          ? 0.0
          : static_cast<double>(stats.total_padding_tokens) / static_cast<double>(stats.total_cells);
  stats.rows_saved = static_cast<std::int64_t>(n_items) -
                     static_cast<std::int64_t>(stats.bins_count);
}

}  // namespace detail

/// The padding-minimizing planner: within each consecutive group of
/// batch_size samples, sort by length descending (ties by stream order) and
/// place first-fit into rows capped at the context length. Nothing is ever
/// truncated; oversize samples are a hard error.
inline PackPlan plan_dynamic_pack(std::span<const PackItem> items, std::size_t context_len,
                                  std::size_t batch_size) {
  detail::check_pack_args(context_len, batch_size);
  PackPlan plan;
  plan.strategy = PackStrategy::dynamic_pack;
  plan.context_len = context_len;
  plan.batch_size = batch_size;
  for (const auto& item : items) detail::check_fits_context(item, context_len);

  for (std::size_t group = 0; group < items.size(); group += batch_size) {
    const std::size_t group_end = std::min(items.size(), group + batch_size);
    std::vector<std::size_t> order(group_end - group);
    std::iota(order.begin(), order.end(), group);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (items[a].len != items[b].len) return items[a].len > items[b].len;
      return a < b;
    });

    std::vector<Bin> bins;
    for (std::size_t idx : order) {
      bool placed = false;
      for (auto& bin : bins) {
        if (bin.fits(items[idx].len)) {
          bin.place(items[idx].id, items[idx].len);
          placed = true;
          break;
        }
      }
      if (!placed) {
        bins.push_back({{}, 0, context_len});
        bins.back().place(items[idx].id, items[idx].len);
      }
    }
    plan.batches.push_back(std::move(bins));
  }
  detail::finalize_stats(plan, items.size());
  return plan;
}

/// Baseline: one sample per row, each batch padded to its own longest sample.
inline PackPlan plan_pad_to_longest(std::span<const PackItem> items, std::size_t context_len,
                                    std::size_t batch_size) {
  detail::check_pack_args(context_len, batch_size);
  PackPlan plan;
  plan.strategy = PackStrategy::pad_to_longest;
  plan.context_len = context_len;
  plan.batch_size = batch_size;
  for (const auto& item : items) detail::check_fits_context(item, context_len);

  for (std::size_t group = 0; group < items.size(); group += batch_size) {
    const std::size_t group_end = std::min(items.size(), group + batch_size);
    std::vector<Bin> bins;
    bins.reserve(group_end - group);
    for (std::size_t i = group; i < group_end; ++i) {
      bins.push_back({{}, 0, context_len});
      bins.back().place(items[i].id, items[i].len);
    }
    plan.batches.push_back(std::move(bins));
  }
  detail::finalize_stats(plan, items.size());
  return plan;
}

/// Baseline: one sample per row, every row padded to the full context length.
inline PackPlan plan_pad_to_max(std::span<const PackItem> items, std::size_t context_len,
                                std::size_t batch_size) {
  detail::check_pack_args(context_len, batch_size);
  PackPlan plan;
  plan.strategy = PackStrategy::pad_to_max;
  plan.context_len = context_len;
  plan.batch_size = batch_size;
  for (const auto& item : items) detail::check_fits_context(item, context_len);

  for (std::size_t group = 0; group < items.size(); group += batch_size) {
    const std::size_t group_end = std::min(items.size(), group + batch_size);
    std::vector<Bin> bins;
    bins.reserve(group_end - group);
    for (std::size_t i = group; i < group_end; ++i) {
      bins.push_back({{}, 0, context_len});
      bins.back().place(items[i].id, items[i].len);
    }
    plan.batches.push_back(std::move(bins));
  }
  // every row is padded to context_len regardless of batch content
  for (const auto& batch : plan.batches) {
    for (const auto& bin : batch) {
      plan.stats.total_real_tokens += bin.used;
      plan.stats.total_padding_tokens += context_len - bin.used;
      ++plan.stats.bins_count;
    }
    plan.stats.total_cells += static_cast<std::uint64_t>(context_len) * batch.size();
  }
  plan.stats.padding_rate = plan.stats.total_cells == 0
                                ? 0.0
                                : static_cast<double>(plan.stats.total_padding_tokens) /
                                      static_cast<double>(plan.stats.total_cells);
  plan.stats.rows_saved =
      static_cast<std::int64_t>(items.size()) - static_cast<std::int64_t>(plan.stats.bins_count);
  return plan;
}

/// T5-style baseline: truncate every sample to truncate_len, then concatenate
/// greedily in stream order into rows of capacity context_len. Truncated
/// token counts are reported separately from padding.
inline PackPlan plan_fixed_pack(std::span<const PackItem> items, std::size_t truncate_len,
                                std::size_t context_len, std::size_t batch_size) {
  detail::check_pack_args(context_len, batch_size);
  if (truncate_len < 1 || truncate_len > context_len) {
    fail(ErrorCode::bad_config, "truncate_len must be in [1, context_len]");
  }
  PackPlan plan;
  plan.strategy = PackStrategy::fixed_pack;
  plan.context_len = context_len;
  plan.batch_size = batch_size;
  plan.truncate_len = truncate_len;

  std::vector<Bin> bins;
  Bin current{{}, 0, context_len};
  for (const auto& item : items) {
    std::size_t kept = std::min(item.len, truncate_len);
    if (kept < item.len) {
      plan.truncations.push_back({item.id, item.len, kept});
      plan.stats.truncated_tokens += item.len - kept;
    }
    if (!current.fits(kept)) {
      bins.push_back(std::move(current));
      current = Bin{{}, 0, context_len};
    }
    current.place(item.id, kept);
  }
  if (!current.segments.empty()) bins.push_back(std::move(current));

  for (std::size_t group = 0; group < bins.size(); group += batch_size) {
    const std::size_t group_end = std::min(bins.size(), group + batch_size);
    plan.batches.emplace_back(std::make_move_iterator(bins.begin() + group),
                              std::make_move_iterator(bins.begin() + group_end));
  }
  detail::finalize_stats(plan, items.size());
  return plan;
}

/// Run all four planners on identical input.
inline std::vector<PackPlan> compare_strategies(std::span<const PackItem> items,
                                                std::size_t context_len, std::size_t batch_size,
                                                std::size_t truncate_len = 512) {
  std::vector<PackPlan> plans;
  plans.push_back(plan_dynamic_pack(items, context_len, batch_size));
  plans.push_back(plan_pad_to_longest(items, context_len, batch_size));
  plans.push_back(plan_pad_to_max(items, context_len, batch_size));
  plans.push_back(plan_fixed_pack(items, truncate_len, context_len, batch_size));
  return plans;
}

/// Exact minimum bin count by subset dynamic programming; audit oracle for
/// the greedy planner on small instances.
inline std::size_t optimal_bins_oracle(std::span<const std::size_t> lengths,
                                       std::size_t capacity) {
  constexpr std::size_t kMaxItems = 12;
  if (lengths.size() > kMaxItems) {
    fail(ErrorCode::too_many_items,
         std::to_string(lengths.size()) + " items exceed the exhaustive budget of " +
             std::to_string(kMaxItems));
  }
  if (lengths.empty()) return 0;
  for (std::size_t len : lengths) {
    if (len > capacity) {
      fail(ErrorCode::sample_exceeds_context,
           "item of length " + std::to_string(len) + " exceeds capacity " +
               std::to_string(capacity));
    }
  }
  const std::size_t n = lengths.size();
  const std::size_t full = (std::size_t{1} << n) - 1;
  std::vector<std::size_t> subset_sum(full + 1, 0);
  for (std::size_t mask = 1; mask <= full; ++mask) {
    std::size_t low = mask & (~mask + 1);
    std::size_t bit = 0;
    while ((std::size_t{1} << bit) != low) ++bit;
    subset_sum[mask] = subset_sum[mask ^ low] + lengths[bit];
  }
  const std::size_t inf = n + 1;
  std::vector<std::size_t> best(full + 1, inf);
  best[0] = 0;
  for (std::size_t mask = 1; mask <= full; ++mask) {
    // enumerate submasks as candidate "last bin" contents
    for (std::size_t sub = mask; sub != 0; sub = (sub - 1) & mask) {
      if (subset_sum[sub] <= capacity) {
        best[mask] = std::min(best[mask], best[mask ^ sub] + 1);
      }
    }
  }
  return best[full];
}

inline nlohmann::json padding_stats_to_json(const PaddingStats& stats) {
  return {{"total_real_tokens", stats.total_real_tokens},
          {"total_padding_tokens", stats.total_padding_tokens},
          {"total_cells", stats.total_cells},
          {"padding_rate", stats.padding_rate},
          {"bins_count", stats.bins_count},
          {"rows_saved", stats.rows_saved},
          {"truncated_tokens", stats.truncated_tokens}};
}

inline nlohmann::json pack_plan_to_json(const PackPlan& plan) {
  nlohmann::json batches = nlohmann::json::array();
  for (const auto& batch : plan.batches) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& bin : batch) {
      nlohmann::json segments = nlohmann::json::array();
      for (const auto& seg : bin.segments) {
        segments.push_back({{"id", seg.id}, {"start", seg.start}, {"len", seg.len}});
      }
      rows.push_back({{"segments", std::move(segments)}, {"used", bin.used}});
    }
    batches.push_back(std::move(rows));
  }
  nlohmann::json doc = {{"strategy", pack_strategy_name(plan)},
                        {"context_len", plan.context_len},
                        {"batch_size", plan.batch_size},
                        {"batches", std::move(batches)},
                        {"stats", padding_stats_to_json(plan.stats)}};
  if (plan.strategy == PackStrategy::fixed_pack) {
    nlohmann::json truncations = nlohmann::json::array();
    for (const auto& t : plan.truncations) {
      truncations.push_back(
          {{"id", t.id}, {"original_len", t.original_len}, {"kept_len", t.kept_len}});
    }
    doc["truncate_len"] = plan.truncate_len;
    doc["truncations"] = std::move(truncations);
  }
  return doc;
}

inline void write_pack_plan(const PackPlan& plan, const std::string& path) {
  detail::write_json_file(path, pack_plan_to_json(plan));
}

inline nlohmann::json comparison_to_json(const std::vector<PackPlan>& plans) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& plan : plans) {
    nlohmann::json row = padding_stats_to_json(plan.stats);
    row["strategy"] = pack_strategy_name(plan);
    rows.push_back(std::move(row));
  }
  nlohmann::json doc;
  if (!plans.empty()) {
    doc["context_len"] = plans.front().context_len;
    doc["batch_size"] = plans.front().batch_size;
  }
  doc["padding_rate_denominator"] = "total matrix cells (rows x padded width, summed over batches)";
  doc["strategies"] = std::move(rows);
  return doc;
}

/// Aligned-column text rendering of the comparison.
inline std::string comparison_table(const std::vector<PackPlan>& plans) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %10s %14s %14s %14s %9s\n", "strategy", "rows",
                "real_tokens", "pad_tokens", "cells", "pad_rate");
  out += line;
  for (const auto& plan : plans) {
    std::snprintf(line, sizeof(line), "%-18s %10zu %14llu %14llu %14llu %8.2f%%\n",
                  pack_strategy_name(plan).c_str(), plan.stats.bins_count,
                  static_cast<unsigned long long>(plan.stats.total_real_tokens),
                  static_cast<unsigned long long>(plan.stats.total_padding_tokens),
                  static_cast<unsigned long long>(plan.stats.total_cells),
                  plan.stats.padding_rate * 100.0);
    out += line;
    if (plan.strategy == PackStrategy::fixed_pack && plan.stats.truncated_tokens > 0) {
      std::snprintf(line, sizeof(line), "%-18s truncated_tokens=%llu\n", "",
                    static_cast<unsigned long long>(plan.stats.truncated_tokens));
      out += line;
    }
  }
  return out;
}

}  // namespace tunekit
