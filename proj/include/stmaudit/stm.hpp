#ifndef STMAUDIT_STM_HPP_
#define STMAUDIT_STM_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stmaudit/corpus.hpp"

namespace stmaudit {

/// Per-document covariate rows [1, label, p_aae, label*p_aae].
struct PrevalenceDesign {
  Eigen::MatrixXd X;  // D x 4
  std::vector<std::string> column_names;

  std::size_t n_docs() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t n_cols() const { return static_cast<std::size_t>(X.cols()); }
};

inline constexpr int kDesignCols = 4;

/// labels must be binary-scheme (positive/normal); p_aae in [0,1].
PrevalenceDesign build_design(const std::vector<Label>& labels,
                              const std::vector<double>& p_aae);

void write_design(const PrevalenceDesign& design,
                  const std::vector<std::string>& doc_ids,
                  const std::filesystem::path& path);

struct StmConfig {
  int k = 30;
  std::uint64_t seed = 0;
  int max_em_iters = 200;
  double em_rel_tol = 1e-5;
  int newton_max_iters = 50;
  double newton_grad_tol = 1e-7;
  double ridge_lambda = 1e-6;
  double beta_pseudocount = 0.01;
  int threads = 1;
};

/// Topic-word rows (beta, each a simplex over the vocabulary), prevalence
/// coefficients Gamma (P x K-1), and logistic-normal prior covariance Sigma
/// (K-1 x K-1, symmetric positive-definite). The K-th logit is pinned at 0.
struct StmModel {
  Eigen::MatrixXd beta;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd sigma;

  int n_topics() const { return static_cast<int>(beta.rows()); }
  int n_terms() const { return static_cast<int>(beta.cols()); }
};

/// Laplace posterior for one document: mode eta_hat of the unnormalized
/// log-proportions, covariance nu (inverse negative Hessian at the mode),
/// theta = softmax([eta_hat; 0]), and the document's objective contribution
/// f(eta_hat) + 0.5*logdet(nu).
struct DocPosterior {
  Eigen::VectorXd eta_hat;
  Eigen::MatrixXd nu;
  Eigen::VectorXd theta;
  double bound = 0.0;
};

struct FittedStm {
  StmModel model;
  std::vector<DocPosterior> posteriors;  // aligned to DTM rows
  std::vector<double> elbo_trace;
  bool converged = false;
  StmConfig config;
};

using DocCounts = std::span<const std::pair<int, int>>;

/// beta rows are corpus unigram frequencies jittered by seeded positive
/// multiplicative noise (coefficient of variation 0.1) and renormalized; with
/// a single topic the jitter is skipped and the row is the exact unigram
/// distribution. Gamma starts at zero, Sigma at the identity.
StmModel init_model(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
                    const StmConfig& config);

/// Maximizes f(eta) = -0.5 (eta-mu)' Sigma^-1 (eta-mu)
///                    + sum_v c_v log sum_k softmax([eta;0])_k beta_kv
/// with mu = Gamma' x_d, by damped Newton ascent (step halving, ascent
/// enforced). If `beta_accum` is given, token responsibilities weighted by
/// counts are added into it (K x V).
DocPosterior estep_doc(const StmModel& model, DocCounts doc,
                       const Eigen::VectorXd& x_d,
                       const Eigen::VectorXd& warm_eta, const StmConfig& config,
                       Eigen::MatrixXd* beta_accum = nullptr);

/// Token responsibilities phi_vk = theta_k beta_kv / sum_j theta_j beta_jv
/// for the document's observed terms, weighted by counts, added into
/// accum (K x V).
void accumulate_responsibilities(const StmModel& model, DocCounts doc,
                                 const Eigen::VectorXd& theta,
                                 Eigen::MatrixXd& accum);

/// beta_kv ∝ pseudocount + expected counts; Gamma solves the ridge-regularized
/// least squares of eta_hat rows on X; Sigma averages nu_d plus squared
/// prediction residuals (symmetrized).
StmModel mstep(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
               const std::vector<DocPosterior>& posteriors,
               const Eigen::MatrixXd& beta_counts, const StmConfig& config);

/// Variational EM: warm-started E-steps over all documents alternate with the
/// M-step until the relative change of the summed bound drops below
/// em_rel_tol or max_em_iters is reached. Deterministic for any thread count.
FittedStm fit(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
              const StmConfig& config);

Eigen::VectorXd softmax_with_pinned_zero(const Eigen::VectorXd& eta);

/// Versioned JSON with config, vocabulary hash, beta (row-major), Gamma,
/// Sigma, and the ELBO trace.
void save_model_json(const FittedStm& fitted, std::uint64_t vocab_hash,
                     const std::filesystem::path& path);
struct LoadedModel {
  StmModel model;
  StmConfig config;
  std::uint64_t vocab_hash = 0;
  std::vector<double> elbo_trace;
  bool converged = false;
};
LoadedModel load_model_json(const std::filesystem::path& path);

/// CSV "doc_id,theta_1,...,theta_K".
void write_theta_csv(const FittedStm& fitted, const std::vector<std::string>& doc_ids,
                     const std::filesystem::path& path);

}  // namespace stmaudit

#endif  // STMAUDIT_STM_HPP_
