#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/cluster.hpp"
#include "tunekit/corpus.hpp"
#include "tunekit/detail/hashing.hpp"
#include "tunekit/embed.hpp"
#include "tunekit/errors.hpp"
#include "tunekit/ifd.hpp"
#include "tunekit/pack.hpp"
#include "tunekit/select.hpp"
#include "tunekit/tokenize.hpp"

namespace tunekit {

enum class PackScope { batch, epoch };

inline const char* pack_scope_name(PackScope scope) {
  return scope == PackScope::batch ? "batch" : "epoch";
}

inline PackScope pack_scope_from_name(const std::string& name) {
  if (name == "batch") return PackScope::batch;
  if (name == "epoch") return PackScope::epoch;
  fail(ErrorCode::bad_config, "unknown packing scope '" + name + "'");
}

/// Everything a run depends on. All randomness flows from the seeds recorded
/// here; re-running an identical config reproduces byte-identical artifacts.
/// Execution knobs (workers, output directory) deliberately stay outside the
/// serialized form: they must not change any output.
struct RunConfig {
  std::string input_path;
  FieldMap fields;
  bool skip_invalid = false;
  std::size_t structural_overhead = 1;

  std::size_t embed_dim = 256;
  std::uint64_t embed_seed = 1;
  std::string external_embeddings;

  std::size_t k = 10;
  std::uint64_t kmeans_seed = 1;
  std::size_t kmeans_max_iter = 100;
  double kmeans_tol = 1e-4;

  std::size_t lm_order = 3;
  double lm_add_k = 0.5;
  std::string external_logprobs;
  std::string external_counts;

  SelectionStrategy strategy = SelectionStrategy::combined;
  double m_percent = 40.0;
  std::uint64_t selection_seed = 1;

  std::size_t context_len = 4096;
  std::size_t batch_size = 256;
  PackScope scope = PackScope::batch;
  std::size_t truncate_len = 512;
  bool emit_subset = false;

  // execution knobs, not part of the logical configuration
  std::string out_dir = "out";
  unsigned workers = 0;
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"input_path", c.input_path},
          {"id_field", c.fields.id_field},
          {"instruction_fields", c.fields.instruction_fields},
          {"code_fields", c.fields.code_fields},
          {"skip_invalid", c.skip_invalid},
          {"structural_overhead", c.structural_overhead},
          {"embed_dim", c.embed_dim},
          {"embed_seed", c.embed_seed},
          {"external_embeddings", c.external_embeddings},
          {"k", c.k},
          {"kmeans_seed", c.kmeans_seed},
          {"kmeans_max_iter", c.kmeans_max_iter},
          {"kmeans_tol", c.kmeans_tol},
          {"lm_order", c.lm_order},
          {"lm_add_k", c.lm_add_k},
          {"external_logprobs", c.external_logprobs},
          {"external_counts", c.external_counts},
          {"strategy", strategy_name(c.strategy)},
          {"m_percent", c.m_percent},
          {"selection_seed", c.selection_seed},
          {"context_len", c.context_len},
          {"batch_size", c.batch_size},
          {"scope", pack_scope_name(c.scope)},
          {"truncate_len", c.truncate_len},
          {"emit_subset", c.emit_subset}};
}

inline RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  c.input_path = doc.value("input_path", c.input_path);
  c.fields.id_field = doc.value("id_field", c.fields.id_field);
  if (doc.contains("instruction_fields")) {
    c.fields.instruction_fields = doc["instruction_fields"].get<std::vector<std::string>>();
  }
  if (doc.contains("code_fields")) {
    c.fields.code_fields = doc["code_fields"].get<std::vector<std::string>>();
  }
  c.skip_invalid = doc.value("skip_invalid", c.skip_invalid);
  c.structural_overhead = doc.value("structural_overhead", c.structural_overhead);
  c.embed_dim = doc.value("embed_dim", c.embed_dim);
  c.embed_seed = doc.value("embed_seed", c.embed_seed);
  c.external_embeddings = doc.value("external_embeddings", c.external_embeddings);
  c.k = doc.value("k", c.k);
  c.kmeans_seed = doc.value("kmeans_seed", c.kmeans_seed);
  c.kmeans_max_iter = doc.value("kmeans_max_iter", c.kmeans_max_iter);
  c.kmeans_tol = doc.value("kmeans_tol", c.kmeans_tol);
  c.lm_order = doc.value("lm_order", c.lm_order);
  c.lm_add_k = doc.value("lm_add_k", c.lm_add_k);
  c.external_logprobs = doc.value("external_logprobs", c.external_logprobs);
  c.external_counts = doc.value("external_counts", c.external_counts);
  if (doc.contains("strategy")) c.strategy = strategy_from_name(doc["strategy"].get<std::string>());
  c.m_percent = doc.value("m_percent", c.m_percent);
  c.selection_seed = doc.value("selection_seed", c.selection_seed);
  c.context_len = doc.value("context_len", c.context_len);
  c.batch_size = doc.value("batch_size", c.batch_size);
  if (doc.contains("scope")) c.scope = pack_scope_from_name(doc["scope"].get<std::string>());
  c.truncate_len = doc.value("truncate_len", c.truncate_len);
  c.emit_subset = doc.value("emit_subset", c.emit_subset);
  return c;
}

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> path
  std::vector<StageTiming> timings;
  std::size_t corpus_size = 0;
  std::size_t selected_count = 0;
};

namespace detail {

template <class Fn>
auto run_stage(const char* stage, std::vector<StageTiming>& timings, Fn&& fn) {
  auto started = std::chrono::steady_clock::now();
  try {
    auto result = fn();
    timings.push_back({stage, std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - started)
                                  .count()});
    return result;
  } catch (const Error& e) {
    fail(e.code(), std::string(stage) + " stage: " + e.what());
  }
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace detail

inline TokenCountProvider make_count_provider(const RunConfig& config) {
  if (!config.external_counts.empty()) {
    return load_external_counts(config.external_counts, config.structural_overhead);
  }
  return TokenCountProvider::builtin(config.structural_overhead);
}

inline EmbeddingSet make_embeddings(const RunConfig& config, const Corpus& corpus) {
  if (!config.external_embeddings.empty()) {
    return load_external_embeddings(config.external_embeddings, corpus);
  }
  return embed_instructions(corpus, config.embed_dim, config.embed_seed, config.workers);
}

inline std::unique_ptr<PerplexityProvider> make_perplexity_provider(
    const RunConfig& config, const Corpus& corpus, const TokenCountProvider& counts) {
  if (!config.external_logprobs.empty()) {
    auto provider = load_external_logprobs(
        config.external_logprobs, corpus,
        [&](const Sample& sample) { return counts.lengths(sample).code; });
    return std::make_unique<StoredLogprobs>(std::move(provider));
  }
  return std::make_unique<NgramLm>(
      train_builtin_lm(corpus, config.lm_order, config.lm_add_k, config.structural_overhead));
}

inline SelectionManifest make_manifest(const RunConfig& config, const Corpus& corpus,
                                       const Clustering& clustering,
                                       const std::vector<IfdRecord>& scores) {
  switch (config.strategy) {
    case SelectionStrategy::combined:
      return select_combined(corpus, clustering, scores, config.m_percent);
    case SelectionStrategy::random:
      return select_random(corpus, config.m_percent, config.selection_seed);
    case SelectionStrategy::ifd_global:
      return select_ifd_global(corpus, scores, config.m_percent);
    case SelectionStrategy::kmeans_random:
      return select_kmeans_random(corpus, clustering, config.m_percent, config.selection_seed);
  }
  fail(ErrorCode::bad_config, "unknown strategy");
}

inline std::vector<PackItem> make_pack_items(const Corpus& corpus,
                                             const TokenCountProvider& counts) {
  std::vector<PackItem> items;
  items.reserve(corpus.size());
  for (const auto& sample : corpus.samples) {
    items.push_back({sample.id, counts.lengths(sample).total});
  }
  return items;
}

inline std::size_t effective_group_size(const RunConfig& config, std::size_t n_items) {
  return config.scope == PackScope::epoch ? std::max<std::size_t>(n_items, 1)
                                          : config.batch_size;
}

// The fixed-pack baseline cannot truncate to more than the context; small
// desk-scale contexts clamp the default 512.
inline std::size_t effective_truncate_len(const RunConfig& config) {
  return std::min(config.truncate_len, config.context_len);
}

/// Run every stage (ingest, embed, cluster, score, select, pack, report) and
/// persist each artifact plus a run manifest with content hashes.
inline PipelineResult cmd_pipeline(const RunConfig& config) {
  namespace fs = std::filesystem;
  PipelineResult result;
  fs::create_directories(config.out_dir);
  auto artifact = [&](const std::string& name) {
    std::string path = detail::join_path(config.out_dir, name);
    result.artifacts.emplace_back(name, path);
    return path;
  };

  auto loaded = detail::run_stage("ingest", result.timings,
                                  [&] { return load_corpus(config.input_path, config.fields,
                                                           {config.skip_invalid}); });
  const Corpus& corpus = loaded.corpus;
  result.corpus_size = corpus.size();

  auto counts = detail::run_stage("counts", result.timings,
                                  [&] { return make_count_provider(config); });

  detail::run_stage("validate", result.timings, [&] {
    auto violations = validate_for_context(corpus, counts, config.context_len);
    if (!violations.empty()) {
      std::string ids;
      for (std::size_t i = 0; i < violations.size() && i < 8; ++i) {
        ids += (i ? ", " : "") + violations[i];
      }
      fail(ErrorCode::sample_exceeds_context,
           std::to_string(violations.size()) +
               " sample(s) exceed the context length and cannot be packed without "
               "truncation: " + ids + (violations.size() > 8 ? ", ..." : ""));
    }
    return 0;
  });

  auto embeddings = detail::run_stage("embed", result.timings,
                                      [&] { return make_embeddings(config, corpus); });

  auto clustering = detail::run_stage("cluster", result.timings, [&] {
    return kmeans_fit(embeddings, config.k, config.kmeans_seed, config.kmeans_max_iter,
                      config.kmeans_tol, config.workers);
  });
  write_clustering(clustering, artifact("clustering.json"));

  auto scores = detail::run_stage("score", result.timings, [&] {
    auto provider = make_perplexity_provider(config, corpus, counts);
    return score_corpus(corpus, *provider, ByteTokenizer{config.structural_overhead},
                        config.workers);
  });
  write_ifd_records(scores, artifact("ifd_records.jsonl"));

  auto manifest = detail::run_stage("select", result.timings, [&] {
    auto m = make_manifest(config, corpus, clustering, scores);
    m.seed = config.selection_seed;
    return m;
  });
  result.selected_count = manifest.selected_count;
  write_selection_manifest(manifest, artifact("selection.jsonl"));
  detail::write_json_file(artifact("selection_summary.json"), selection_summary(manifest));

  Corpus subset = selected_subset(corpus, manifest);
  if (config.emit_subset) {
    write_corpus(subset, artifact("subset.jsonl"));
  }

  auto plans = detail::run_stage("pack", result.timings, [&] {
    auto items = make_pack_items(subset, counts);
    return compare_strategies(items, config.context_len,
                              effective_group_size(config, items.size()),
                              effective_truncate_len(config));
  });
  write_pack_plan(plans.front(), artifact("pack_plan.json"));
  detail::write_json_file(artifact("compare.json"), comparison_to_json(plans));
  {
    std::ofstream table(artifact("compare.txt"), std::ios::binary);
    table << comparison_table(plans);
  }

  nlohmann::json manifest_doc;
  manifest_doc["config"] = run_config_to_json(config);
  manifest_doc["input_sha256"] = detail::sha256_file(config.input_path);
  nlohmann::json hashes;
  for (const auto& [name, path] : result.artifacts) {
    hashes[name] = detail::sha256_file(path);
  }
  manifest_doc["artifacts"] = std::move(hashes);
  detail::write_json_file(artifact("run_manifest.json"), manifest_doc);
  return result;
}

struct SweepResult {
  std::vector<double> m_grid;
  std::vector<std::size_t> selected_counts;
  std::vector<std::string> manifest_paths;
  std::string summary_path;
};

namespace detail {

inline std::string format_percent(double m) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", m);
  return buf;
}

}  // namespace detail

/// One selection manifest per sampling rate, sharing a single embed, cluster
/// and score pass.
inline SweepResult cmd_sweep(const RunConfig& config, const std::vector<double>& m_grid) {
  if (m_grid.empty()) fail(ErrorCode::bad_config, "empty m grid");
  for (double m : m_grid) {
    if (!(m > 0.0) || m > 100.0) fail(ErrorCode::bad_config, "m values must be in (0, 100]");
  }
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  std::vector<StageTiming> timings;
  auto loaded = detail::run_stage("ingest", timings, [&] {
    return load_corpus(config.input_path, config.fields, {config.skip_invalid});
  });
  const Corpus& corpus = loaded.corpus;
  auto counts = make_count_provider(config);
  auto embeddings = make_embeddings(config, corpus);
  auto clustering = kmeans_fit(embeddings, config.k, config.kmeans_seed, config.kmeans_max_iter,
                               config.kmeans_tol, config.workers);
  auto provider = make_perplexity_provider(config, corpus, counts);
  auto scores = score_corpus(corpus, *provider, ByteTokenizer{config.structural_overhead},
                             config.workers);

  SweepResult result;
  result.m_grid = m_grid;
  nlohmann::json summary = nlohmann::json::array();
  for (double m : m_grid) {
    RunConfig point = config;
    point.m_percent = m;
    auto manifest = make_manifest(point, corpus, clustering, scores);
    manifest.seed = config.selection_seed;
    std::string name = "selection_m" + detail::format_percent(m) + ".jsonl";
    std::string path = detail::join_path(config.out_dir, name);
    write_selection_manifest(manifest, path);
    result.manifest_paths.push_back(path);
    result.selected_counts.push_back(manifest.selected_count);
    nlohmann::json entry = selection_summary(manifest);
    entry["manifest"] = name;
    summary.push_back(std::move(entry));
  }
  result.summary_path = detail::join_path(config.out_dir, "sweep_summary.json");
  detail::write_json_file(result.summary_path, {{"m_grid", m_grid}, {"points", summary}});
  return result;
}

}  // namespace tunekit
