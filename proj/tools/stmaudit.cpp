// Command-line front end: ingest, dialect, fit, searchk, effects, report,
// synth, and the full pipeline `run`.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stmaudit/corpus.hpp"
#include "stmaudit/dialect.hpp"
#include "stmaudit/diagnostics.hpp"
#include "stmaudit/effects.hpp"
#include "stmaudit/io_util.hpp"
#include "stmaudit/pipeline.hpp"
#include "stmaudit/report.hpp"
#include "stmaudit/rng.hpp"
#include "stmaudit/stm.hpp"
#include "stmaudit/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace stmaudit;

CorpusFormat format_for(const std::string& format, const fs::path& corpus) {
  if (format == "jsonl") return CorpusFormat::jsonl;
  if (format == "csv") return CorpusFormat::csv;
  return corpus.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
}

struct PreparedCorpus {
  std::vector<TokenList> tokens;
  std::vector<std::string> ids;
  std::vector<Label> labels;
};

// Shared front half of the pipeline: load, collapse, dedup, normalize.
PreparedCorpus prepare_corpus(const fs::path& corpus_path, const std::string& format,
                              const fs::path& stopword_path) {
  const StopwordSet stopwords = load_stopwords(stopword_path);
  const LabeledCorpus raw =
      load_corpus(corpus_path, format_for(format, corpus_path));
  const DedupResult deduped = dedup(collapse_labels(raw), stopwords);
  PreparedCorpus prepared;
  for (const Document& doc : deduped.corpus.documents) {
    prepared.tokens.push_back(normalize_text(doc.text, stopwords));
    prepared.ids.push_back(doc.id);
    prepared.labels.push_back(doc.label);
  }
  return prepared;
}

std::vector<Label> read_labels_csv(const fs::path& path,
                                   const std::vector<std::string>& doc_ids) {
  const auto records = parse_csv(read_file(path));
  if (records.empty() || records[0] != std::vector<std::string>{"doc_id", "label"})
    throw ParseError("labels file must have header doc_id,label: " + path.string());
  std::unordered_map<std::string, Label> by_id;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() == 1 && records[r][0].empty()) continue;
    if (records[r].size() != 2)
      throw ParseError("labels line " + std::to_string(r + 1) + ": bad field count");
    by_id.emplace(records[r][0], parse_label(records[r][1]));
  }
  std::vector<Label> labels;
  for (const std::string& id : doc_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end())
      throw AlignmentError("labels file is missing doc id '" + id + "'");
    labels.push_back(it->second);
  }
  return labels;
}

std::vector<double> read_p_aae(const fs::path& path,
                               const std::vector<std::string>& doc_ids) {
  std::unordered_map<std::string, double> by_id;
  for (const DialectPosterior& post : read_dialect_scores(path))
    by_id.emplace(post.doc_id, post.p_aae);
  std::vector<double> p_aae;
  for (const std::string& id : doc_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end())
      throw AlignmentError("dialect scores are missing doc id '" + id + "'");
    p_aae.push_back(it->second);
  }
  return p_aae;
}

std::vector<int> parse_k_list(const std::string& spec) {
  std::vector<int> ks;
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ',')) ks.push_back(std::stoi(token));
  return ks;
}

struct FitInputs {
  DocumentTermMatrix dtm;
  PrevalenceDesign design;
};

FitInputs load_fit_inputs(const fs::path& dtm_dir, const fs::path& labels_path,
                          const fs::path& scores_path) {
  FitInputs inputs;
  inputs.dtm = read_dtm(dtm_dir);
  const std::vector<Label> labels = read_labels_csv(labels_path, inputs.dtm.doc_ids);
  const std::vector<double> p_aae = read_p_aae(scores_path, inputs.dtm.doc_ids);
  inputs.design = build_design(labels, p_aae);
  return inputs;
}

// Re-derives per-document posteriors for a saved model (the model file stores
// only global parameters).
FittedStm reestimate_posteriors(const LoadedModel& loaded, const FitInputs& inputs) {
  if (loaded.vocab_hash != vocabulary_hash(inputs.dtm.vocabulary))
    throw AlignmentError("model was fitted on a different vocabulary");
  FittedStm fitted;
  fitted.model = loaded.model;
  fitted.config = loaded.config;
  fitted.elbo_trace = loaded.elbo_trace;
  fitted.converged = loaded.converged;
  const int k = loaded.model.n_topics();
  for (std::size_t d = 0; d < inputs.dtm.n_docs(); ++d)
    fitted.posteriors.push_back(
        estep_doc(fitted.model, inputs.dtm.rows[d],
                  inputs.design.X.row(static_cast<Eigen::Index>(d)).transpose(),
                  Eigen::VectorXd::Zero(k - 1), fitted.config));
  return fitted;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural topic model audit of annotated text corpora"};
  app.require_subcommand(1);

  std::string corpus, format = "auto", stopwords, model_path, out_dir = ".";
  std::string dtm_dir, labels_path, scores_path, k_list = "10,20,30,40,50,60";
  std::string topics = "all", ranking = "probability", config_path;
  int min_df = 5, k = 30, max_iters = 200, threads = 1;
  int sims = 500, draws = 25, top_m = 10, top_n = 10, topic_one_based = 1;
  int synth_d = 2000, synth_v = 500, synth_k = 5;
  double tol = 1e-5, holdout_frac = 0.1, mean_length = 60.0, interaction = 0.0;
  std::uint64_t seed = 0;
  bool per_topic = false;

  auto* ingest = app.add_subcommand("ingest", "Build the document-term matrix");
  ingest->add_option("--corpus", corpus)->required();
  ingest->add_option("--format", format)->check(CLI::IsMember({"auto", "jsonl", "csv"}));
  ingest->add_option("--stopwords", stopwords)->required();
  ingest->add_option("--min-df", min_df);
  ingest->add_option("--out", out_dir)->required();

  auto* dialect = app.add_subcommand("dialect", "Score dialect posteriors");
  dialect->add_option("--corpus", corpus)->required();
  dialect->add_option("--format", format);
  dialect->add_option("--stopwords", stopwords)->required();
  dialect->add_option("--model", model_path)->required();
  dialect->add_option("--out", out_dir)->required();

  auto* fit_cmd = app.add_subcommand("fit", "Fit the structural topic model");
  fit_cmd->add_option("--dtm", dtm_dir)->required();
  fit_cmd->add_option("--labels", labels_path)->required();
  fit_cmd->add_option("--scores", scores_path)->required();
  fit_cmd->add_option("--k", k);
  fit_cmd->add_option("--seed", seed);
  fit_cmd->add_option("--max-iters", max_iters);
  fit_cmd->add_option("--tol", tol);
  fit_cmd->add_option("--threads", threads);
  fit_cmd->add_option("--out", out_dir)->required();

  auto* searchk = app.add_subcommand("searchk", "Diagnostics over candidate K");
  searchk->add_option("--dtm", dtm_dir)->required();
  searchk->add_option("--labels", labels_path)->required();
  searchk->add_option("--scores", scores_path)->required();
  searchk->add_option("--k-list", k_list);
  searchk->add_option("--seed", seed);
  searchk->add_option("--max-iters", max_iters);
  searchk->add_option("--tol", tol);
  searchk->add_option("--threads", threads);
  searchk->add_option("--holdout-frac", holdout_frac);
  searchk->add_flag("--per-topic", per_topic);
  searchk->add_option("--out", out_dir)->required();

  auto* effects_cmd = app.add_subcommand("effects", "Covariate effect curves");
  effects_cmd->add_option("--model", model_path)->required();
  effects_cmd->add_option("--dtm", dtm_dir)->required();
  effects_cmd->add_option("--labels", labels_path)->required();
  effects_cmd->add_option("--scores", scores_path)->required();
  effects_cmd->add_option("--topics", topics);
  effects_cmd->add_option("--sims", sims);
  effects_cmd->add_option("--draws", draws);
  effects_cmd->add_option("--seed", seed);
  effects_cmd->add_option("--threads", threads);
  effects_cmd->add_option("--out", out_dir)->required();

  auto* report = app.add_subcommand("report", "Top words and documents per topic");
  report->add_option("--model", model_path)->required();
  report->add_option("--dtm", dtm_dir)->required();
  report->add_option("--labels", labels_path)->required();
  report->add_option("--scores", scores_path)->required();
  report->add_option("--topic", topic_one_based);
  report->add_option("--top-words", top_m);
  report->add_option("--top-docs", top_n);
  report->add_option("--ranking", ranking)
      ->check(CLI::IsMember({"probability", "frex"}));

  auto* run = app.add_subcommand("run", "Full pipeline from a config file");
  run->add_option("--config", config_path)->required();
  run->add_option("--seed", seed);
  run->add_option("--k", k);
  run->add_option("--threads", threads);
  run->add_option("--out", out_dir);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--d", synth_d);
  synth->add_option("--v", synth_v);
  synth->add_option("--k", synth_k);
  synth->add_option("--mean-length", mean_length);
  synth->add_option("--interaction", interaction);
  synth->add_option("--seed", seed);
  synth->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const StopwordSet stops = load_stopwords(stopwords);
      const LabeledCorpus raw = load_corpus(corpus, format_for(format, corpus));
      const DedupResult deduped = dedup(collapse_labels(raw), stops);
      const DtmBuild build = build_dtm(deduped.corpus, stops, min_df);
      fs::create_directories(out_dir);
      write_dtm(build.dtm, fs::path(out_dir) / "dtm");
      std::vector<Label> labels;
      {
        std::unordered_map<std::string, Label> by_id;
        for (const Document& doc : deduped.corpus.documents)
          by_id.emplace(doc.id, doc.label);
        std::ostringstream csv;
        csv << "doc_id,label\n";
        for (const std::string& id : build.dtm.doc_ids)
          csv << csv_escape(id) << ',' << label_name(by_id.at(id)) << '\n';
        write_file(fs::path(out_dir) / "labels.csv", csv.str());
      }
      nlohmann::json stats = {
          {"docs_in", raw.documents.size()},
          {"duplicates_dropped", deduped.duplicates_removed},
          {"docs_dropped_by_pruning", build.dropped_doc_ids.size()},
          {"terms_before", build.terms_before},
          {"terms_retained", build.terms_after},
          {"retained_token_fraction", build.retained_token_fraction()}};
      write_file(fs::path(out_dir) / "ingest_stats.json", stats.dump(2) + "\n");
      std::cout << stats.dump(2) << '\n';
    } else if (*dialect) {
      const PreparedCorpus prepared = prepare_corpus(corpus, format, stopwords);
      const DialectModel dmodel = load_dialect_model(model_path);
      const ScoreCorpusResult scored =
          score_corpus(dmodel, prepared.tokens, prepared.ids);
      fs::create_directories(out_dir);
      write_dialect_scores(scored.posteriors,
                           fs::path(out_dir) / "dialect_scores.csv");
      std::string dropped;
      for (const std::string& id : scored.dropped_doc_ids) dropped += id + "\n";
      write_file(fs::path(out_dir) / "unscoreable_ids.txt", dropped);
      std::cout << "scored " << scored.posteriors.size() << " documents, dropped "
                << scored.dropped_doc_ids.size() << " unscoreable\n";
    } else if (*fit_cmd) {
      const FitInputs inputs = load_fit_inputs(dtm_dir, labels_path, scores_path);
      StmConfig config;
      config.k = k;
      config.seed = seed;
      config.max_em_iters = max_iters;
      config.em_rel_tol = tol;
      config.threads = threads;
      const FittedStm fitted = fit(inputs.dtm, inputs.design, config);
      fs::create_directories(out_dir);
      save_model_json(fitted, vocabulary_hash(inputs.dtm.vocabulary),
                      fs::path(out_dir) / "model.json");
      write_theta_csv(fitted, inputs.dtm.doc_ids, fs::path(out_dir) / "theta.csv");
      std::cout << "converged=" << (fitted.converged ? "true" : "false")
                << " iterations=" << fitted.elbo_trace.size()
                << " bound=" << format_double(fitted.elbo_trace.back()) << '\n';
    } else if (*searchk) {
      const FitInputs inputs = load_fit_inputs(dtm_dir, labels_path, scores_path);
      StmConfig config;
      config.seed = seed;
      config.max_em_iters = max_iters;
      config.em_rel_tol = tol;
      config.threads = threads;
      const SearchKResult result =
          search_k(inputs.dtm, inputs.design, parse_k_list(k_list), config,
                   holdout_frac);
      fs::create_directories(out_dir);
      write_searchk_csv(result, fs::path(out_dir) / "searchk.csv");
      if (per_topic)
        write_searchk_topics_csv(result, fs::path(out_dir) / "searchk_topics.csv");
      for (const auto& row : result.rows)
        std::cout << "k=" << row.k << " heldout="
                  << format_double(row.heldout_loglik_per_token) << " residuals="
                  << format_double(row.residual_dispersion) << " coherence="
                  << format_double(row.mean_semantic_coherence) << " exclusivity="
                  << format_double(row.mean_exclusivity) << '\n';
      for (const auto& [bad_k, message] : result.failures)
        std::cerr << "k=" << bad_k << " failed: " << message << '\n';
    } else if (*effects_cmd) {
      const FitInputs inputs = load_fit_inputs(dtm_dir, labels_path, scores_path);
      const FittedStm fitted =
          reestimate_posteriors(load_model_json(model_path), inputs);
      EffectsConfig config;
      config.sims = sims;
      config.draws_per_doc = draws;
      config.seed = seed;
      config.threads = threads;
      std::vector<int> topic_ids;
      if (topics == "all") {
        for (int t = 0; t < fitted.model.n_topics(); ++t) topic_ids.push_back(t);
      } else {
        std::istringstream in(topics);
        std::string tok;
        while (std::getline(in, tok, ',')) topic_ids.push_back(std::stoi(tok) - 1);
      }
      const std::vector<EffectEstimate> effects =
          estimate_effects(fitted, inputs.design, topic_ids, config);
      std::vector<EffectCurve> curves;
      for (const EffectEstimate& effect : effects) {
        curves.push_back(predict_curve(effect, Label::positive));
        curves.push_back(predict_curve(effect, Label::normal));
      }
      fs::create_directories(out_dir);
      export_curves(curves, fs::path(out_dir) / "curves.csv");
      export_coef_table(effects, fs::path(out_dir) / "effect_coefs.csv");
      std::cout << "estimated effects for " << effects.size() << " topics\n";
    } else if (*report) {
      const FitInputs inputs = load_fit_inputs(dtm_dir, labels_path, scores_path);
      const FittedStm fitted =
          reestimate_posteriors(load_model_json(model_path), inputs);
      const int topic = topic_one_based - 1;
      const TopWordRanking rank_kind = ranking == "frex"
                                           ? TopWordRanking::frex
                                           : TopWordRanking::probability;
      std::cout << "topic " << topic_one_based << " top words:";
      for (const std::string& term :
           top_words(fitted.model, inputs.dtm.vocabulary, topic, top_m, rank_kind))
        std::cout << ' ' << term;
      std::cout << "\ntop documents:\n";
      for (const TopDocument& doc :
           top_documents(fitted, inputs.dtm.doc_ids, topic, top_n))
        std::cout << "  " << doc.doc_id << " theta=" << format_double(doc.theta)
                  << '\n';
    } else if (*run) {
      PipelineConfig config = load_pipeline_config(config_path);
      if (run->count("--seed")) config.seed = seed;
      if (run->count("--k")) config.stm.k = k;
      if (run->count("--threads")) config.stm.threads = threads;
      if (run->count("--out")) config.output_dir = out_dir;
      const Manifest manifest = run_pipeline(config);
      std::cout << "docs_in=" << manifest.docs_in
                << " duplicates_dropped=" << manifest.duplicates_dropped
                << " unscoreable_dropped=" << manifest.unscoreable_dropped
                << " docs_final=" << manifest.docs_final
                << " positive_fraction=" << format_double(manifest.positive_fraction)
                << " terms_retained=" << manifest.terms_retained << '\n';
    } else if (*synth) {
      SynthSpec spec;
      spec.d = synth_d;
      spec.v = synth_v;
      spec.k = synth_k;
      spec.mean_length = mean_length;
      spec.interaction = interaction;
      spec.seed = seed;
      const GroundTruth truth = make_ground_truth(spec);
      const SynthCorpus generated = generate_corpus(truth, seed);
      fs::create_directories(out_dir);
      write_truth(truth, spec, out_dir);
      write_dtm(generated.dtm, fs::path(out_dir) / "dtm");
      {
        std::ostringstream csv;
        csv << "doc_id,label\n";
        for (std::size_t d = 0; d < generated.dtm.n_docs(); ++d)
          csv << generated.dtm.doc_ids[d] << ','
              << label_name(generated.labels[d]) << '\n';
        write_file(fs::path(out_dir) / "labels.csv", csv.str());
      }
      {
        std::vector<DialectPosterior> scores;
        for (std::size_t d = 0; d < generated.dtm.n_docs(); ++d) {
          DialectPosterior post;
          post.doc_id = generated.dtm.doc_ids[d];
          post.pi << 1.0 - generated.p_aae[d], generated.p_aae[d], 0.0, 0.0;
          post.p_aae = generated.p_aae[d];
          post.n_scored_tokens = generated.dtm.doc_token_totals[d];
          scores.push_back(post);
        }
        write_dialect_scores(scores, fs::path(out_dir) / "dialect_scores.csv");
      }
      std::cout << "generated " << generated.dtm.n_docs() << " documents over "
                << generated.dtm.n_terms() << " terms\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
