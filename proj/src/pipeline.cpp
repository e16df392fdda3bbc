#include "stmaudit/pipeline.hpp"

#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stmaudit/dialect.hpp"
#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"
#include "stmaudit/report.hpp"
#include "stmaudit/rng.hpp"

namespace stmaudit {

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("pipeline config: ") + e.what());
  }
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  PipelineConfig config;
  config.corpus_path = resolve(doc.at("corpus").get<std::string>());
  config.stopwords_path = resolve(doc.at("stopwords").get<std::string>());
  config.dialect_model_path = resolve(doc.at("dialect_model").get<std::string>());
  config.output_dir = resolve(doc.at("output_dir").get<std::string>());

  std::string format = doc.value("format", "");
  if (format.empty())
    format = config.corpus_path.extension() == ".csv" ? "csv" : "jsonl";
  if (format == "jsonl") config.format = CorpusFormat::jsonl;
  else if (format == "csv") config.format = CorpusFormat::csv;
  else throw ParseError("pipeline config: unknown format '" + format + "'");

  config.min_df = doc.value("min_df", 5);
  config.seed = doc.value("seed", static_cast<std::uint64_t>(0));
  config.stm.k = doc.value("k", 30);
  config.stm.max_em_iters = doc.value("max_em_iters", 200);
  config.stm.em_rel_tol = doc.value("em_rel_tol", 1e-5);
  config.stm.newton_max_iters = doc.value("newton_max_iters", 50);
  config.stm.newton_grad_tol = doc.value("newton_grad_tol", 1e-7);
  config.stm.ridge_lambda = doc.value("ridge_lambda", 1e-6);
  config.stm.beta_pseudocount = doc.value("beta_pseudocount", 0.01);
  config.stm.threads = doc.value("threads", 1);
  if (doc.contains("effects")) {
    const auto& eff = doc.at("effects");
    config.effects.sims = eff.value("sims", 500);
    config.effects.draws = eff.value("draws", 25);
    config.effects.topics = eff.value("topics", "all");
  }
  return config;
}

namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw PipelineError("stage '" + name + "': " + e.what());
  }
}

std::vector<int> parse_topic_list(const std::string& spec, int k) {
  std::vector<int> topics;
  if (spec == "all") {
    for (int t = 0; t < k; ++t) topics.push_back(t);
    return topics;
  }
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ',')) {
    const int one_based = std::stoi(token);
    if (one_based < 1 || one_based > k)
      throw std::out_of_range("topic index out of range: " + token);
    topics.push_back(one_based - 1);
  }
  if (topics.empty()) throw ParseError("empty topic list");
  return topics;
}

void write_labels_csv(const std::vector<std::string>& ids,
                      const std::vector<Label>& labels,
                      const std::filesystem::path& path) {
  std::ostringstream out;
  out << "doc_id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out << csv_escape(ids[i]) << ',' << label_name(labels[i]) << '\n';
  write_file(path, out.str());
}

void write_id_list(const std::vector<std::string>& ids,
                   const std::filesystem::path& path) {
  std::string out;
  for (const std::string& id : ids) {
    out += id;
    out += '\n';
  }
  write_file(path, out);
}

nlohmann::json config_echo(const PipelineConfig& config) {
  return {{"corpus", config.corpus_path.string()},
          {"format", config.format == CorpusFormat::jsonl ? "jsonl" : "csv"},
          {"stopwords", config.stopwords_path.string()},
          {"dialect_model", config.dialect_model_path.string()},
          {"output_dir", config.output_dir.string()},
          {"min_df", config.min_df},
          {"seed", config.seed},
          {"k", config.stm.k},
          {"max_em_iters", config.stm.max_em_iters},
          {"em_rel_tol", config.stm.em_rel_tol},
          {"newton_max_iters", config.stm.newton_max_iters},
          {"newton_grad_tol", config.stm.newton_grad_tol},
          {"ridge_lambda", config.stm.ridge_lambda},
          {"beta_pseudocount", config.stm.beta_pseudocount},
          {"threads", config.stm.threads},
          {"effects_sims", config.effects.sims},
          {"effects_draws", config.effects.draws},
          {"effects_topics", config.effects.topics}};
}

}  // namespace

Manifest run_pipeline(const PipelineConfig& config) {
  for (const auto& [what, path] :
       {std::pair<const char*, const std::filesystem::path&>{"corpus", config.corpus_path},
        {"stopwords", config.stopwords_path},
        {"dialect model", config.dialect_model_path}}) {
    if (!std::filesystem::exists(path))
      throw IoError(std::string("pipeline startup: ") + what +
                    " file does not exist: " + path.string());
  }
  std::filesystem::create_directories(config.output_dir);
  const std::filesystem::path& out = config.output_dir;

  Manifest manifest;

  // Ingest: load, collapse labels, dedup on normalized text.
  const StopwordSet stopwords =
      stage("ingest", [&] { return load_stopwords(config.stopwords_path); });
  const LabeledCorpus raw =
      stage("ingest", [&] { return load_corpus(config.corpus_path, config.format); });
  manifest.docs_in = raw.documents.size();
  const LabeledCorpus binary = stage("ingest", [&] { return collapse_labels(raw); });
  manifest.spam_dropped = raw.documents.size() - binary.documents.size();
  const DedupResult deduped =
      stage("ingest", [&] { return dedup(binary, stopwords); });
  manifest.duplicates_dropped = deduped.duplicates_removed;

  std::vector<TokenList> tokens;
  std::vector<std::string> ids;
  tokens.reserve(deduped.corpus.documents.size());
  ids.reserve(deduped.corpus.documents.size());
  for (const Document& doc : deduped.corpus.documents) {
    tokens.push_back(normalize_text(doc.text, stopwords));
    ids.push_back(doc.id);
  }

  // Dialect scoring drops documents the model cannot score.
  const DialectModel dialect_model = stage(
      "dialect", [&] { return load_dialect_model(config.dialect_model_path); });
  const ScoreCorpusResult scored =
      stage("dialect", [&] { return score_corpus(dialect_model, tokens, ids); });
  manifest.unscoreable_dropped = scored.dropped_doc_ids.size();
  stage("dialect", [&] {
    write_dialect_scores(scored.posteriors, out / "dialect_scores.csv");
    write_id_list(scored.dropped_doc_ids, out / "unscoreable_ids.txt");
    return 0;
  });

  // Restrict corpus state to scored documents, preserving order.
  std::vector<TokenList> scored_tokens;
  std::vector<std::string> scored_ids;
  std::vector<Label> scored_labels;
  std::vector<double> scored_p_aae;
  {
    std::unordered_map<std::string, std::size_t> scored_index;
    for (std::size_t i = 0; i < scored.posteriors.size(); ++i)
      scored_index.emplace(scored.posteriors[i].doc_id, i);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = scored_index.find(ids[i]);
      if (it == scored_index.end()) continue;
      scored_tokens.push_back(std::move(tokens[i]));
      scored_ids.push_back(ids[i]);
      scored_labels.push_back(deduped.corpus.documents[i].label);
      scored_p_aae.push_back(scored.posteriors[it->second].p_aae);
    }
  }

  // Vocabulary pruning; documents emptied by pruning leave the analysis.
  const DtmBuild build = stage("dtm", [&] {
    return build_dtm_from_tokens(scored_tokens, scored_ids, config.min_df);
  });
  manifest.dtm_docs_dropped = build.dropped_doc_ids.size();
  manifest.terms_before = build.terms_before;
  manifest.terms_retained = build.terms_after;
  manifest.terms_pruned = build.terms_before - build.terms_after;
  manifest.tokens_before_pruning = build.tokens_before;
  manifest.tokens_retained = build.tokens_after;
  manifest.retained_token_fraction = build.retained_token_fraction();
  stage("dtm", [&] {
    write_dtm(build.dtm, out / "dtm");
    write_id_list(build.dropped_doc_ids, out / "dtm_dropped_ids.txt");
    return 0;
  });

  // Final aligned covariates: DTM rows are an order-preserving subset of the
  // scored documents.
  std::vector<Label> final_labels;
  std::vector<double> final_p_aae;
  {
    std::size_t pos = 0;
    for (const std::string& id : build.dtm.doc_ids) {
      while (pos < scored_ids.size() && scored_ids[pos] != id) ++pos;
      if (pos == scored_ids.size())
        throw InternalError("pipeline: DTM doc id missing from scored set");
      final_labels.push_back(scored_labels[pos]);
      final_p_aae.push_back(scored_p_aae[pos]);
      ++pos;
    }
  }
  manifest.docs_final = build.dtm.n_docs();
  for (Label label : final_labels)
    if (label == Label::positive) ++manifest.positive_docs;
  manifest.positive_fraction =
      static_cast<double>(manifest.positive_docs) /
      static_cast<double>(manifest.docs_final);

  if (manifest.docs_final != manifest.docs_in - manifest.spam_dropped -
                                 manifest.duplicates_dropped -
                                 manifest.unscoreable_dropped -
                                 manifest.dtm_docs_dropped)
    throw InternalError("pipeline: manifest count identity violated");

  const PrevalenceDesign design =
      stage("design", [&] { return build_design(final_labels, final_p_aae); });
  stage("design", [&] {
    write_labels_csv(build.dtm.doc_ids, final_labels, out / "labels.csv");
    write_design(design, build.dtm.doc_ids, out / "design.csv");
    return 0;
  });

  StmConfig stm_config = config.stm;
  stm_config.seed = derive_seed(config.seed, "fit");
  const FittedStm fitted =
      stage("fit", [&] { return fit(build.dtm, design, stm_config); });
  stage("fit", [&] {
    save_model_json(fitted, vocabulary_hash(build.dtm.vocabulary), out / "model.json");
    write_theta_csv(fitted, build.dtm.doc_ids, out / "theta.csv");
    return 0;
  });

  stage("effects", [&] {
    EffectsConfig effects_config;
    effects_config.sims = config.effects.sims;
    effects_config.draws_per_doc = config.effects.draws;
    effects_config.seed = derive_seed(config.seed, "effects");
    effects_config.threads = config.stm.threads;
    const std::vector<int> topics =
        parse_topic_list(config.effects.topics, fitted.model.n_topics());
    const std::vector<EffectEstimate> effects =
        estimate_effects(fitted, design, topics, effects_config);
    std::vector<EffectCurve> curves;
    for (const EffectEstimate& effect : effects) {
      curves.push_back(predict_curve(effect, Label::positive));
      curves.push_back(predict_curve(effect, Label::normal));
    }
    export_curves(curves, out / "curves.csv");
    export_coef_table(effects, out / "effect_coefs.csv");
    return 0;
  });

  stage("report", [&] {
    std::vector<std::pair<std::string, std::string>> texts;
    std::unordered_map<std::string, const Document*> by_id;
    for (const Document& doc : deduped.corpus.documents)
      by_id.emplace(doc.id, &doc);
    for (const std::string& id : build.dtm.doc_ids)
      texts.emplace_back(id, by_id.at(id)->text);
    write_topic_report(fitted, build.dtm.vocabulary, build.dtm.doc_ids, texts, 10,
                       10, out / "report.json");
    return 0;
  });

  stage("manifest", [&] {
    nlohmann::json doc;
    doc["counts"] = {{"docs_in", manifest.docs_in},
                     {"spam_dropped", manifest.spam_dropped},
                     {"duplicates_dropped", manifest.duplicates_dropped},
                     {"unscoreable_dropped", manifest.unscoreable_dropped},
                     {"dtm_docs_dropped", manifest.dtm_docs_dropped},
                     {"docs_final", manifest.docs_final},
                     {"positive_docs", manifest.positive_docs},
                     {"positive_fraction", manifest.positive_fraction},
                     {"terms_before", manifest.terms_before},
                     {"terms_pruned", manifest.terms_pruned},
                     {"terms_retained", manifest.terms_retained},
                     {"tokens_before_pruning", manifest.tokens_before_pruning},
                     {"tokens_retained", manifest.tokens_retained},
                     {"retained_token_fraction", manifest.retained_token_fraction}};
    doc["config"] = config_echo(config);
    doc["artifacts"] = {"dialect_scores.csv", "unscoreable_ids.txt",
                        "dtm",                "dtm_dropped_ids.txt",
                        "labels.csv",         "design.csv",
                        "model.json",         "theta.csv",
                        "curves.csv",         "effect_coefs.csv",
                        "report.json"};
    write_file(out / "manifest.json", doc.dump(2) + "\n");
    return 0;
  });

  return manifest;
}

}  // namespace stmaudit
