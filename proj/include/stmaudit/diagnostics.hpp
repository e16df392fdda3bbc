#ifndef STMAUDIT_DIAGNOSTICS_HPP_
#define STMAUDIT_DIAGNOSTICS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stmaudit/corpus.hpp"
#include "stmaudit/stm.hpp"

namespace stmaudit {

struct KDiagnostics {
  int k = 0;
  double heldout_loglik_per_token = 0.0;
  double residual_dispersion = 0.0;
  double mean_semantic_coherence = 0.0;
  double mean_exclusivity = 0.0;
  std::vector<double> topic_coherence;
  std::vector<double> topic_exclusivity;
};

/// Term indices of the row's top-m weights, ties broken by lower index
/// (vocabularies are sorted, so that is lexicographic order).
std::vector<int> top_terms_by_weight(const Eigen::VectorXd& weights, int m);

/// Document-completion split: a seeded fraction of documents has its token
/// instances shuffled and alternately assigned to halves; the training matrix
/// keeps first halves for held-out rows and full counts elsewhere. Documents
/// with fewer than 2 tokens are never held out.
struct HeldoutSplit {
  DocumentTermMatrix train;
  std::vector<std::size_t> heldout_rows;
  std::vector<std::vector<std::pair<int, int>>> second_half;  // aligned to heldout_rows
};
HeldoutSplit make_heldout_split(const DocumentTermMatrix& dtm, double holdout_frac,
                                std::uint64_t seed);

/// Infers theta for each held-out row from its first half (E-step with the
/// fixed model) and scores second-half tokens: mean over tokens of
/// log sum_k theta_k beta_kv.
struct CompletionScore {
  double mean_loglik = 0.0;
  std::int64_t n_tokens = 0;
  std::size_t n_docs = 0;
  std::vector<Eigen::VectorXd> thetas;  // aligned to split.heldout_rows
};
CompletionScore completion_score(const StmModel& model, const HeldoutSplit& split,
                                 const PrevalenceDesign& design,
                                 const StmConfig& config);

/// Fits on the split's training matrix and returns the completion score of
/// the held-out second halves.
double heldout_likelihood(const DocumentTermMatrix& dtm,
                          const PrevalenceDesign& design, const StmConfig& config,
                          double holdout_frac, std::uint64_t seed);

/// Per-topic co-occurrence score over its top-m terms:
///   C_k = sum_{i=2..m} sum_{j<i} log((D(v_i, v_j) + 1) / D(v_j))
/// with document counts D; pairs whose reference term has D(v_j)=0 are
/// skipped.
std::vector<double> semantic_coherence(const Eigen::MatrixXd& beta,
                                       const DocumentTermMatrix& dtm, int m = 10);

/// FREX_kv = 1 / (w / ecdf_k(exclusivity_kv) + (1-w) / ecdf_k(beta_kv)) with
/// exclusivity_kv = beta_kv / column sum.
Eigen::MatrixXd frex_scores(const Eigen::MatrixXd& beta, double w = 0.7);

/// Mean FREX over each topic's top-m terms by beta.
std::vector<double> exclusivity(const Eigen::MatrixXd& beta, double w = 0.7,
                                int m = 10);

/// Pearson dispersion of observed counts against expected counts
/// N_d sum_k theta_dk beta_kv, divided by residual degrees of freedom.
double residual_dispersion(const FittedStm& fitted, const DocumentTermMatrix& dtm);

struct SearchKResult {
  std::vector<KDiagnostics> rows;                    // sorted by K
  std::vector<std::pair<int, std::string>> failures;  // K -> error message
};

/// Fits one model per K (same config seed) and computes all four
/// diagnostics; a failing K is reported and the others continue.
SearchKResult search_k(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
                       const std::vector<int>& k_list, const StmConfig& config,
                       double holdout_frac = 0.1);

/// CSV "k,heldout,residuals,coherence,exclusivity".
void write_searchk_csv(const SearchKResult& result, const std::filesystem::path& path);
/// CSV "k,topic,coherence,exclusivity".
void write_searchk_topics_csv(const SearchKResult& result,
                              const std::filesystem::path& path);

}  // namespace stmaudit

#endif  // STMAUDIT_DIAGNOSTICS_HPP_
