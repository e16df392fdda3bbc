#ifndef STMAUDIT_PIPELINE_HPP_
#define STMAUDIT_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "stmaudit/corpus.hpp"
#include "stmaudit/effects.hpp"
#include "stmaudit/stm.hpp"

namespace stmaudit {

struct PipelineError : std::runtime_error {
  explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EffectsSettings {
  int sims = 500;
  int draws = 25;
  std::string topics = "all";  // "all" or comma-separated 1-based indices
};

struct PipelineConfig {
  std::filesystem::path corpus_path;
  CorpusFormat format = CorpusFormat::jsonl;
  std::filesystem::path stopwords_path;
  std::filesystem::path dialect_model_path;
  std::filesystem::path output_dir;
  int min_df = 5;
  std::uint64_t seed = 0;  // every stage derives its own seed from this
  StmConfig stm;           // stm.seed is overwritten with a derived seed
  EffectsSettings effects;
};

/// Reads a config JSON; relative paths resolve against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct Manifest {
  std::size_t docs_in = 0;
  std::size_t spam_dropped = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t unscoreable_dropped = 0;
  std::size_t dtm_docs_dropped = 0;
  std::size_t docs_final = 0;
  std::size_t positive_docs = 0;
  double positive_fraction = 0.0;
  std::size_t terms_before = 0;
  std::size_t terms_pruned = 0;
  std::size_t terms_retained = 0;
  std::int64_t tokens_before_pruning = 0;
  std::int64_t tokens_retained = 0;
  double retained_token_fraction = 0.0;
};

/// Full run: ingest (collapse, dedup, normalize, DTM), dialect scoring,
/// fit, effects over all requested topics, topic report, manifest. Every
/// intermediate artifact lands in config.output_dir; a stage failure aborts
/// with the stage name but leaves earlier artifacts in place.
Manifest run_pipeline(const PipelineConfig& config);

}  // namespace stmaudit

#endif  // STMAUDIT_PIPELINE_HPP_
