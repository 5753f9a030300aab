// tunekit: curate instruction-code datasets and plan padding-minimal batches.
//
// Subcommands mirror the pipeline stages (ingest, stats, embed, cluster,
// score, select, pack, compare) plus the orchestrators (pipeline, sweep).
// Every intermediate artifact is a file, so any pipeline output can be
// reproduced by chaining subcommands on the intermediate files.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tunekit/tunekit.hpp"

namespace {

using namespace tunekit;

struct CliExtras {
  std::string config_path;
  std::string out;
  std::string summary_out;
  std::string subset_out;
  std::string embeddings_path;
  std::string clustering_path;
  std::string scores_path;
  std::string manifest_path;
  std::string pack_strategy = "dynamic-pack";
  std::string format = "json";
  std::string m_grid = "10,20,30,40,50,60";
  bool list_violations = false;
};

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write " + out_path);
  out << text;
}

void emit_json(const nlohmann::json& doc, const std::string& out_path) {
  emit(doc.dump(2) + "\n", out_path);
}

Corpus load_input(const RunConfig& config) {
  if (config.input_path.empty()) fail(ErrorCode::bad_config, "no input file given");
  auto result = load_corpus(config.input_path, config.fields, {config.skip_invalid});
  for (const auto& issue : result.skipped) {
    std::cerr << "skipped line " << issue.line << " (" << error_code_name(issue.code)
              << "): " << issue.detail << "\n";
  }
  return std::move(result.corpus);
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> grid;
  std::string token;
  std::stringstream stream(csv);
  while (std::getline(stream, token, ',')) {
    if (token.empty()) continue;
    grid.push_back(std::stod(token));
  }
  return grid;
}

void add_input_options(CLI::App* cmd, RunConfig& config, CliExtras& extras) {
  cmd->add_option("--config", extras.config_path,
                  "JSON config file; explicit flags override its values");
  cmd->add_option("--input", config.input_path, "JSON Lines dataset (or via --config)");
  cmd->add_option("--id-field", config.fields.id_field,
                  "record field holding the id (default: synthesize line-<n>)");
  cmd->add_option("--instruction-field", config.fields.instruction_fields,
                  "candidate instruction field names, tried in order");
  cmd->add_option("--code-field", config.fields.code_fields,
                  "candidate code/response field names, tried in order");
  cmd->add_flag("--skip-invalid", config.skip_invalid,
                "collect invalid records instead of aborting");
  cmd->add_option("--overhead", config.structural_overhead,
                  "structural tokens added per sample (end-of-sample marker)");
  cmd->add_option("--workers", config.workers, "worker threads (0 = hardware)");
}

TokenCountProvider counts_for(const RunConfig& config) { return make_count_provider(config); }

int run_ingest(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  std::cerr << "loaded " << corpus.size() << " samples from " << config.input_path << "\n";
  if (!extras.out.empty()) {
    write_corpus(corpus, extras.out);
  } else {
    for (const auto& sample : corpus.samples) {
      std::cout << nlohmann::json{{"id", sample.id},
                                  {"instruction", sample.instruction},
                                  {"code", sample.code}}
                       .dump()
                << "\n";
    }
  }
  return 0;
}

int run_stats(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  auto counts = counts_for(config);
  auto stats = corpus_stats(corpus, counts, config.context_len);
  if (extras.format == "table") {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %10s %8s %8s %8s\n", "field", "min", "max",
                  "mean", "p50", "p90", "p99");
    std::string text = line;
    auto row = [&](const char* name, const LengthStats& s) {
      std::snprintf(line, sizeof(line), "%-12s %8zu %8zu %10.1f %8zu %8zu %8zu\n", name, s.min,
                    s.max, s.mean, s.p50, s.p90, s.p99);
      text += line;
    };
    row("instruction", stats.instruction);
    row("code", stats.code);
    row("total", stats.total);
    std::snprintf(line, sizeof(line), "n=%zu over_context(%zu)=%zu dedup=not-performed\n",
                  stats.n, stats.context_len, stats.over_context);
    text += line;
    emit(text, extras.out);
  } else {
    emit_json(corpus_stats_to_json(stats), extras.out);
  }
  if (extras.list_violations) {
    for (const auto& id : validate_for_context(corpus, counts, config.context_len)) {
      std::cout << id << "\n";
    }
  }
  return 0;
}

int run_embed(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  auto embeddings = make_embeddings(config, corpus);
  if (extras.out.empty()) fail(ErrorCode::bad_config, "embed requires --out");
  write_embeddings(embeddings, extras.out);
  std::cerr << "embedded " << embeddings.size() << " instructions at dim " << embeddings.dim
            << "\n";
  return 0;
}

int run_cluster(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  EmbeddingSet embeddings = extras.embeddings_path.empty()
                                ? make_embeddings(config, corpus)
                                : load_external_embeddings(extras.embeddings_path, corpus);
  auto clustering = kmeans_fit(embeddings, config.k, config.kmeans_seed, config.kmeans_max_iter,
                               config.kmeans_tol, config.workers);
  if (extras.out.empty()) {
    emit_json(clustering_to_json(clustering), "");
  } else {
    write_clustering(clustering, extras.out);
  }
  std::cerr << "k=" << clustering.k << " inertia=" << clustering.inertia << " iterations="
            << clustering.iterations_run << "\n";
  return 0;
}

int run_score(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  auto counts = counts_for(config);
  auto provider = make_perplexity_provider(config, corpus, counts);
  auto records = score_corpus(corpus, *provider, ByteTokenizer{config.structural_overhead},
                              config.workers);
  if (extras.out.empty()) fail(ErrorCode::bad_config, "score requires --out");
  write_ifd_records(records, extras.out);
  std::size_t above_one = 0;
  for (const auto& r : records) above_one += r.ifd > 1.0 ? 1 : 0;
  std::cerr << "scored " << records.size() << " samples; ifd>1 for " << above_one << "\n";
  return 0;
}

int run_select(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  Clustering clustering;
  std::vector<IfdRecord> scores;
  const bool needs_clustering = config.strategy == SelectionStrategy::combined ||
                                config.strategy == SelectionStrategy::kmeans_random;
  const bool needs_scores = config.strategy == SelectionStrategy::combined ||
                            config.strategy == SelectionStrategy::ifd_global;
  if (needs_clustering) {
    if (extras.clustering_path.empty()) fail(ErrorCode::bad_config, "strategy requires --clustering");
    clustering = load_clustering(extras.clustering_path);
  }
  if (needs_scores) {
    if (extras.scores_path.empty()) fail(ErrorCode::bad_config, "strategy requires --scores");
    scores = load_ifd_records(extras.scores_path);
  }
  RunConfig effective = config;
  auto manifest = make_manifest(effective, corpus, clustering, scores);
  manifest.seed = config.selection_seed;
  if (extras.out.empty()) fail(ErrorCode::bad_config, "select requires --out");
  write_selection_manifest(manifest, extras.out);
  if (!extras.summary_out.empty()) {
    detail::write_json_file(extras.summary_out, selection_summary(manifest));
  }
  if (!extras.subset_out.empty()) {
    write_corpus(selected_subset(corpus, manifest), extras.subset_out);
  }
  std::cerr << "selected " << manifest.selected_count << " of " << corpus.size() << " ("
            << strategy_name(manifest.strategy) << ", m=" << config.m_percent << ")\n";
  return 0;
}

std::vector<PackItem> pack_input_items(const RunConfig& config, const CliExtras& extras,
                                       const Corpus& corpus) {
  Corpus filtered = corpus;
  if (!extras.manifest_path.empty()) {
    auto manifest = load_selection_manifest(extras.manifest_path);
    filtered = selected_subset(corpus, manifest);
    std::cerr << "packing the " << filtered.size() << " selected samples\n";
  }
  auto counts = counts_for(config);
  auto violations = validate_for_context(filtered, counts, config.context_len);
  if (!violations.empty()) {
    fail(ErrorCode::sample_exceeds_context,
         std::to_string(violations.size()) + " sample(s) exceed context " +
             std::to_string(config.context_len) + "; first: " + violations.front());
  }
  return make_pack_items(filtered, counts);
}

int run_pack(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  auto items = pack_input_items(config, extras, corpus);
  std::size_t group = effective_group_size(config, items.size());
  PackPlan plan;
  if (extras.pack_strategy == "dynamic-pack") {
    plan = plan_dynamic_pack(items, config.context_len, group);
  } else if (extras.pack_strategy == "pad-to-longest") {
    plan = plan_pad_to_longest(items, config.context_len, group);
  } else if (extras.pack_strategy == "pad-to-max") {
    plan = plan_pad_to_max(items, config.context_len, group);
  } else if (extras.pack_strategy == "fixed-pack") {
    plan = plan_fixed_pack(items, effective_truncate_len(config), config.context_len, group);
  } else {
    fail(ErrorCode::bad_config, "unknown pack strategy '" + extras.pack_strategy + "'");
  }
  emit_json(pack_plan_to_json(plan), extras.out);
  std::cerr << pack_strategy_name(plan) << ": rows=" << plan.stats.bins_count
            << " padding_rate=" << plan.stats.padding_rate << "\n";
  return 0;
}

int run_compare(const RunConfig& config, const CliExtras& extras) {
  Corpus corpus = load_input(config);
  auto items = pack_input_items(config, extras, corpus);
  auto plans = compare_strategies(items, config.context_len,
                                  effective_group_size(config, items.size()),
                                  effective_truncate_len(config));
  if (extras.format == "table") {
    emit(comparison_table(plans), extras.out);
  } else {
    emit_json(comparison_to_json(plans), extras.out);
  }
  return 0;
}

int run_pipeline_cmd(const RunConfig& config) {
  auto result = cmd_pipeline(config);
  for (const auto& timing : result.timings) {
    std::fprintf(stderr, "%-10s %.3fs\n", timing.stage.c_str(), timing.seconds);
  }
  std::cerr << "selected " << result.selected_count << " of " << result.corpus_size
            << "; artifacts in " << config.out_dir << "\n";
  return 0;
}

int run_sweep_cmd(const RunConfig& config, const CliExtras& extras) {
  auto grid = parse_grid(extras.m_grid);
  auto result = cmd_sweep(config, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::fprintf(stderr, "m=%-6g selected=%zu\n", grid[i], result.selected_counts[i]);
  }
  std::cerr << "summary in " << result.summary_path << "\n";
  return 0;
}

// The config file (JSON mirror of the run config) seeds the defaults before
// argv parsing, so explicitly passed flags always win.
std::string prescan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  CliExtras extras;
  extras.config_path = prescan_config_path(argc, argv);
  if (!extras.config_path.empty()) {
    try {
      config = run_config_from_json(tunekit::detail::read_json_file(extras.config_path));
    } catch (const Error& e) {
      std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
      return 1;
    }
  }

  CLI::App app{"Instruction-tuning dataset curation and batch-packing toolkit"};
  app.require_subcommand(1);
  app.add_option("--config", extras.config_path, "JSON config file; flags override its values");

  auto* ingest = app.add_subcommand("ingest", "validate a dataset and write the canonical schema");
  add_input_options(ingest, config, extras);
  ingest->add_option("--out", extras.out, "output corpus file (default: stdout)");
  ingest->callback([&] { run_ingest(config, extras); });

  auto* stats = app.add_subcommand("stats", "token-length distributions and context violations");
  add_input_options(stats, config, extras);
  stats->add_option("--context-len", config.context_len, "context length for violation counts");
  stats->add_option("--counts", config.external_counts, "external token counts file");
  stats->add_option("--format", extras.format, "json or table");
  stats->add_flag("--list-violations", extras.list_violations,
                  "print ids whose total length exceeds the context");
  stats->add_option("--out", extras.out, "output file (default: stdout)");
  stats->callback([&] { run_stats(config, extras); });

  auto* embed = app.add_subcommand("embed", "embed instructions (hashing embedder or import)");
  add_input_options(embed, config, extras);
  embed->add_option("--dim", config.embed_dim, "embedding dimension");
  embed->add_option("--seed", config.embed_seed, "hashing seed");
  embed->add_option("--external-embeddings", config.external_embeddings,
                    "import vectors instead of embedding");
  embed->add_option("--out", extras.out, "embeddings JSONL output")->required();
  embed->callback([&] { run_embed(config, extras); });

  auto* cluster = app.add_subcommand("cluster", "k-means over instruction embeddings");
  add_input_options(cluster, config, extras);
  cluster->add_option("--embeddings", extras.embeddings_path,
                      "embeddings JSONL (default: embed in-process)");
  cluster->add_option("--dim", config.embed_dim, "embedding dimension when embedding in-process");
  cluster->add_option("--seed", config.embed_seed, "embedder seed when embedding in-process");
  cluster->add_option("--k", config.k, "cluster count");
  cluster->add_option("--kmeans-seed", config.kmeans_seed, "k-means++ seed");
  cluster->add_option("--max-iter", config.kmeans_max_iter, "iteration cap");
  cluster->add_option("--tol", config.kmeans_tol, "centroid displacement tolerance");
  cluster->add_option("--out", extras.out, "clustering JSON output (default: stdout)");
  cluster->callback([&] { run_cluster(config, extras); });

  auto* score = app.add_subcommand("score", "instruction-following difficulty per sample");
  add_input_options(score, config, extras);
  score->add_option("--order", config.lm_order, "builtin n-gram order");
  score->add_option("--add-k", config.lm_add_k, "builtin smoothing constant");
  score->add_option("--external-logprobs", config.external_logprobs,
                    "stored per-token log-probs (real-model scoring)");
  score->add_option("--counts", config.external_counts, "external token counts file");
  score->add_option("--out", extras.out, "IFD records JSONL output")->required();
  score->callback([&] { run_score(config, extras); });

  auto* select = app.add_subcommand("select", "pick the training subset");
  add_input_options(select, config, extras);
  select->add_option("--strategy", [&](const std::vector<std::string>& values) {
    config.strategy = strategy_from_name(values.front());
    return true;
  }, "combined, random, ifd-global, or kmeans-random");
  select->add_option("--m", config.m_percent, "sampling rate in percent");
  select->add_option("--seed", config.selection_seed, "seed for the random strategies");
  select->add_option("--clustering", extras.clustering_path, "clustering JSON");
  select->add_option("--scores", extras.scores_path, "IFD records JSONL");
  select->add_option("--out", extras.out, "selection manifest JSONL")->required();
  select->add_option("--summary-out", extras.summary_out, "selection summary JSON");
  select->add_option("--emit-subset", extras.subset_out,
                     "write the selected samples as a training-ready corpus");
  select->callback([&] { run_select(config, extras); });

  auto* pack = app.add_subcommand("pack", "plan batches under one strategy");
  add_input_options(pack, config, extras);
  pack->add_option("--strategy", extras.pack_strategy,
                   "dynamic-pack, pad-to-longest, pad-to-max, or fixed-pack");
  pack->add_option("--context-len", config.context_len, "model context length");
  pack->add_option("--batch-size", config.batch_size, "samples per batch group");
  pack->add_option("--truncate-len", config.truncate_len, "fixed-pack truncation length");
  pack->add_option("--scope", [&](const std::vector<std::string>& values) {
    config.scope = pack_scope_from_name(values.front());
    return true;
  }, "packing group: batch (default) or epoch");
  pack->add_option("--counts", config.external_counts, "external token counts file");
  pack->add_option("--manifest", extras.manifest_path, "pack only the selected samples");
  pack->add_option("--out", extras.out, "pack plan JSON (default: stdout)");
  pack->callback([&] { run_pack(config, extras); });

  auto* compare = app.add_subcommand("compare", "padding accounting across all strategies");
  add_input_options(compare, config, extras);
  compare->add_option("--context-len", config.context_len, "model context length");
  compare->add_option("--batch-size", config.batch_size, "samples per batch group");
  compare->add_option("--truncate-len", config.truncate_len, "fixed-pack truncation length");
  compare->add_option("--scope", [&](const std::vector<std::string>& values) {
    config.scope = pack_scope_from_name(values.front());
    return true;
  }, "packing group: batch (default) or epoch");
  compare->add_option("--counts", config.external_counts, "external token counts file");
  compare->add_option("--manifest", extras.manifest_path, "compare only the selected samples");
  compare->add_option("--format", extras.format, "json or table");
  compare->add_option("--out", extras.out, "output file (default: stdout)");
  compare->callback([&] { run_compare(config, extras); });

  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write all artifacts");
  add_input_options(pipeline, config, extras);
  pipeline->add_option("--embed-dim", config.embed_dim, "embedding dimension");
  pipeline->add_option("--embed-seed", config.embed_seed, "embedder seed");
  pipeline->add_option("--external-embeddings", config.external_embeddings,
                       "import instruction vectors");
  pipeline->add_option("--k", config.k, "cluster count");
  pipeline->add_option("--kmeans-seed", config.kmeans_seed, "k-means++ seed");
  pipeline->add_option("--max-iter", config.kmeans_max_iter, "k-means iteration cap");
  pipeline->add_option("--tol", config.kmeans_tol, "k-means displacement tolerance");
  pipeline->add_option("--order", config.lm_order, "builtin n-gram order");
  pipeline->add_option("--add-k", config.lm_add_k, "builtin smoothing constant");
  pipeline->add_option("--external-logprobs", config.external_logprobs,
                       "stored per-token log-probs");
  pipeline->add_option("--counts", config.external_counts, "external token counts file");
  pipeline->add_option("--strategy", [&](const std::vector<std::string>& values) {
    config.strategy = strategy_from_name(values.front());
    return true;
  }, "selection strategy");
  pipeline->add_option("--m", config.m_percent, "sampling rate in percent");
  pipeline->add_option("--selection-seed", config.selection_seed, "selection seed");
  pipeline->add_option("--context-len", config.context_len, "model context length");
  pipeline->add_option("--batch-size", config.batch_size, "samples per batch group");
  pipeline->add_option("--scope", [&](const std::vector<std::string>& values) {
    config.scope = pack_scope_from_name(values.front());
    return true;
  }, "packing group: batch (default) or epoch");
  pipeline->add_option("--truncate-len", config.truncate_len, "fixed-pack truncation length");
  pipeline->add_flag("--emit-subset", config.emit_subset, "also write the selected corpus");
  pipeline->add_option("--out-dir", config.out_dir, "artifact directory");
  pipeline->callback([&] { run_pipeline_cmd(config); });

  auto* sweep = app.add_subcommand("sweep", "selection manifests across sampling rates");
  add_input_options(sweep, config, extras);
  sweep->add_option("--embed-dim", config.embed_dim, "embedding dimension");
  sweep->add_option("--embed-seed", config.embed_seed, "embedder seed");
  sweep->add_option("--external-embeddings", config.external_embeddings,
                    "import instruction vectors");
  sweep->add_option("--k", config.k, "cluster count");
  sweep->add_option("--kmeans-seed", config.kmeans_seed, "k-means++ seed");
  sweep->add_option("--order", config.lm_order, "builtin n-gram order");
  sweep->add_option("--add-k", config.lm_add_k, "builtin smoothing constant");
  sweep->add_option("--external-logprobs", config.external_logprobs,
                    "stored per-token log-probs");
  sweep->add_option("--counts", config.external_counts, "external token counts file");
  sweep->add_option("--strategy", [&](const std::vector<std::string>& values) {
    config.strategy = strategy_from_name(values.front());
    return true;
  }, "selection strategy");
  sweep->add_option("--selection-seed", config.selection_seed, "selection seed");
  sweep->add_option("--m-grid", extras.m_grid, "comma-separated sampling rates");
  sweep->add_option("--out-dir", config.out_dir, "artifact directory");
  sweep->callback([&] { run_sweep_cmd(config, extras); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage problems count as validation failures; --help stays 0
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
