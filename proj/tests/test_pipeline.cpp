#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <catch2/catch.hpp>

#include "helpers.hpp"
#include "tunekit/tunekit.hpp"

using namespace tunekit;

namespace {

std::string toy_corpus_file(const testutil::TempDir& dir, int n = 20) {
  std::string content;
  const char* verbs[] = {"sort", "filter", "merge", "scan", "index"};
  const char* nouns[] = {"a list", "a tree", "an array", "a queue"};
  for (int i = 0; i < n; ++i) {
    std::string instruction = std::string(verbs[i % 5]) + " " + nouns[i % 4] +
                              " variant " + std::to_string(i);
    std::string code = "def f" + std::to_string(i) + "(): return " + std::to_string(i * 7);
    content += R"({"instruction": ")" + instruction + R"(", "output": ")" + code + R"("})" + "\n";
  }
  return testutil::write_file(dir.file("corpus.jsonl"), content);
}

RunConfig toy_config(const std::string& input, const std::string& out_dir) {
  RunConfig config;
  config.input_path = input;
  config.embed_dim = 32;
  config.k = 3;
  config.m_percent = 40.0;
  config.context_len = 64;
  config.batch_size = 8;
  config.out_dir = out_dir;
  return config;
}

std::string hash_of(const std::string& path) { return detail::sha256_file(path); }

}  // namespace

TEST_CASE("pipeline produces every artifact and is byte-reproducible") {
  testutil::TempDir dir("pipe");
  auto input = toy_corpus_file(dir);

  auto config1 = toy_config(input, dir.file("run1"));
  auto config2 = toy_config(input, dir.file("run2"));
  auto result1 = cmd_pipeline(config1);
  auto result2 = cmd_pipeline(config2);

  const std::vector<std::string> expected = {"clustering.json", "ifd_records.jsonl",
                                             "selection.jsonl", "selection_summary.json",
                                             "pack_plan.json",  "compare.json",
                                             "compare.txt",     "run_manifest.json"};
  REQUIRE(result1.artifacts.size() == expected.size());
  for (const auto& name : expected) {
    auto path1 = dir.file("run1/" + name);
    auto path2 = dir.file("run2/" + name);
    REQUIRE(std::filesystem::exists(path1));
    REQUIRE(std::filesystem::exists(path2));
    CHECK(hash_of(path1) == hash_of(path2));
  }
  CHECK(result1.selected_count == result2.selected_count);
  CHECK(result1.corpus_size == 20);

  SECTION("worker count does not change any artifact") {
    auto config3 = toy_config(input, dir.file("run3"));
    config3.workers = 3;
    cmd_pipeline(config3);
    for (const auto& name : expected) {
      CHECK(hash_of(dir.file("run1/" + name)) == hash_of(dir.file("run3/" + name)));
    }
  }

  SECTION("emit_subset writes a loadable training-ready corpus") {
    auto config4 = toy_config(input, dir.file("run4"));
    config4.emit_subset = true;
    auto result = cmd_pipeline(config4);
    auto subset = load_corpus(dir.file("run4/subset.jsonl"), canonical_fields());
    CHECK(subset.corpus.size() == result.selected_count);
  }
}

TEST_CASE("pipeline equals the composition of individual stages") {
  testutil::TempDir dir("compose");
  auto input = toy_corpus_file(dir);
  auto config = toy_config(input, dir.file("pipeline"));
  cmd_pipeline(config);

  // replay stage by stage through intermediate files
  auto corpus = load_corpus(input, config.fields).corpus;
  auto counts = make_count_provider(config);

  auto embeddings = make_embeddings(config, corpus);
  write_embeddings(embeddings, dir.file("embeddings.jsonl"));
  auto reloaded = load_external_embeddings(dir.file("embeddings.jsonl"), corpus);
  auto clustering = kmeans_fit(reloaded, config.k, config.kmeans_seed, config.kmeans_max_iter,
                               config.kmeans_tol);
  write_clustering(clustering, dir.file("clustering.json"));
  CHECK(hash_of(dir.file("clustering.json")) == hash_of(dir.file("pipeline/clustering.json")));

  auto provider = make_perplexity_provider(config, corpus, counts);
  auto scores = score_corpus(corpus, *provider, ByteTokenizer{config.structural_overhead});
  write_ifd_records(scores, dir.file("ifd_records.jsonl"));
  CHECK(hash_of(dir.file("ifd_records.jsonl")) == hash_of(dir.file("pipeline/ifd_records.jsonl")));

  auto loaded_clustering = load_clustering(dir.file("clustering.json"));
  auto loaded_scores = load_ifd_records(dir.file("ifd_records.jsonl"));
  auto manifest = select_combined(corpus, loaded_clustering, loaded_scores, config.m_percent);
  manifest.seed = config.selection_seed;
  write_selection_manifest(manifest, dir.file("selection.jsonl"));
  CHECK(hash_of(dir.file("selection.jsonl")) == hash_of(dir.file("pipeline/selection.jsonl")));

  auto subset = selected_subset(corpus, manifest);
  auto plans = compare_strategies(make_pack_items(subset, counts), config.context_len,
                                  config.batch_size, effective_truncate_len(config));
  write_pack_plan(plans.front(), dir.file("pack_plan.json"));
  CHECK(hash_of(dir.file("pack_plan.json")) == hash_of(dir.file("pipeline/pack_plan.json")));
}

TEST_CASE("pipeline surfaces stage and sample in errors") {
  testutil::TempDir dir("pipeerr");
  auto input = toy_corpus_file(dir, 4);

  SECTION("missing external log-prob id fails in the score stage") {
    // cover only line-1..line-3, leaving line-4 unscored
    std::string lp;
    for (int i = 1; i <= 3; ++i) {
      auto corpus = load_corpus(input).corpus;
      const auto& sample = corpus.samples[static_cast<std::size_t>(i - 1)];
      std::string arr = "[";
      for (std::size_t j = 0; j < sample.code.size(); ++j) arr += (j ? ",-1.0" : "-1.0");
      arr += "]";
      lp += R"({"id": "line-)" + std::to_string(i) + R"(", "cond_logprobs": )" + arr +
            R"(, "uncond_logprobs": )" + arr + "}\n";
    }
    auto config = toy_config(input, dir.file("out"));
    config.external_logprobs = testutil::write_file(dir.file("lp.jsonl"), lp);
    try {
      cmd_pipeline(config);
      FAIL("expected missing_id");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::missing_id);
      CHECK(std::string(e.what()).find("score stage") != std::string::npos);
      CHECK(std::string(e.what()).find("line-4") != std::string::npos);
    }
  }

  SECTION("oversize samples stop the run at validation") {
    auto config = toy_config(input, dir.file("out2"));
    config.context_len = 16;
    try {
      cmd_pipeline(config);
      FAIL("expected sample_exceeds_context");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::sample_exceeds_context);
      CHECK(std::string(e.what()).find("validate stage") != std::string::npos);
    }
  }
}

TEST_CASE("sweep produces nested selections with monotone counts") {
  testutil::TempDir dir("sweep");
  auto input = toy_corpus_file(dir, 30);
  auto config = toy_config(input, dir.file("out"));
  std::vector<double> grid{10, 20, 30, 40, 50, 60};
  auto result = cmd_sweep(config, grid);

  REQUIRE(result.selected_counts.size() == grid.size());
  for (std::size_t i = 1; i < result.selected_counts.size(); ++i) {
    CHECK(result.selected_counts[i - 1] <= result.selected_counts[i]);
  }

  std::set<std::string> previous;
  for (const auto& path : result.manifest_paths) {
    auto manifest = load_selection_manifest(path);
    std::set<std::string> current;
    for (const auto& e : manifest.entries) {
      if (e.selected) current.insert(e.id);
    }
    CHECK(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
    previous = std::move(current);
  }

  SECTION("a grid of 100 selects everything") {
    auto all = cmd_sweep(config, {100.0});
    CHECK(all.selected_counts[0] == 30);
  }
}

TEST_CASE("run config serializes and parses losslessly") {
  RunConfig config;
  config.input_path = "data.jsonl";
  config.fields.id_field = "uid";
  config.fields.code_fields = {"response"};
  config.embed_dim = 128;
  config.embed_seed = 42;
  config.k = 7;
  config.kmeans_tol = 5e-5;
  config.lm_order = 2;
  config.lm_add_k = 0.25;
  config.strategy = SelectionStrategy::kmeans_random;
  config.m_percent = 35.5;
  config.selection_seed = 9;
  config.context_len = 2048;
  config.batch_size = 64;
  config.scope = PackScope::epoch;
  config.emit_subset = true;

  auto doc = run_config_to_json(config);
  auto back = run_config_from_json(doc);
  CHECK(run_config_to_json(back) == doc);
  CHECK(back.fields.code_fields == std::vector<std::string>{"response"});
  CHECK(back.scope == PackScope::epoch);
  CHECK(strategy_name(back.strategy) == std::string("kmeans-random"));
}

#ifdef TUNEKIT_BIN
namespace {

int run_cli(const std::string& args, const std::string& log_path) {
  std::string cmd = std::string(TUNEKIT_BIN) + " " + args + " >" + log_path + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("command line end to end") {
  testutil::TempDir dir("cli");
  auto input = toy_corpus_file(dir);

  SECTION("pipeline subcommand produces artifacts and is reproducible") {
    std::string common = "pipeline --input " + input +
                         " --embed-dim 32 --k 3 --m 40 --context-len 64 --batch-size 8";
    REQUIRE(run_cli(common + " --out-dir " + dir.file("a"), dir.file("log_a.txt")) == 0);
    REQUIRE(run_cli(common + " --out-dir " + dir.file("b"), dir.file("log_b.txt")) == 0);
    CHECK(hash_of(dir.file("a/run_manifest.json")) == hash_of(dir.file("b/run_manifest.json")));
    CHECK(hash_of(dir.file("a/pack_plan.json")) == hash_of(dir.file("b/pack_plan.json")));
  }

  SECTION("stats subcommand emits JSON") {
    REQUIRE(run_cli("stats --input " + input + " --format json", dir.file("stats.txt")) == 0);
    auto out = testutil::slurp(dir.file("stats.txt"));
    CHECK(out.find("\"n\": 20") != std::string::npos);
  }

  SECTION("compare subcommand prints the strategy table") {
    REQUIRE(run_cli("compare --input " + input + " --context-len 64 --batch-size 8 --format table",
                    dir.file("cmp.txt")) == 0);
    auto out = testutil::slurp(dir.file("cmp.txt"));
    CHECK(out.find("dynamic-pack") != std::string::npos);
    CHECK(out.find("pad-to-max") != std::string::npos);
  }

  SECTION("validation failures exit with status 1") {
    CHECK(run_cli("pipeline --input " + dir.file("missing.jsonl") + " --out-dir " + dir.file("x"),
                  dir.file("err.txt")) == 1);
  }

  SECTION("config file is honored and flags win") {
    nlohmann::json cfg = run_config_to_json(toy_config(input, dir.file("cfg_out")));
    auto cfg_path = testutil::write_file(dir.file("config.json"), cfg.dump());
    REQUIRE(run_cli("pipeline --config " + cfg_path + " --out-dir " + dir.file("cfg_out"),
                    dir.file("log_c.txt")) == 0);
    // flag overrides the config's m_percent
    REQUIRE(run_cli("pipeline --config " + cfg_path + " --m 100 --out-dir " + dir.file("cfg_out2"),
                    dir.file("log_d.txt")) == 0);
    auto manifest = load_selection_manifest(dir.file("cfg_out2/selection.jsonl"));
    CHECK(manifest.selected_count == 20);
  }
}
#endif
