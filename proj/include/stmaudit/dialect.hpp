#ifndef STMAUDIT_DIALECT_HPP_
#define STMAUDIT_DIALECT_HPP_

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "stmaudit/corpus.hpp"

namespace stmaudit {

inline constexpr int kDialectClasses = 4;

/// Canonical class names; model files may order their columns freely but the
/// names must be exactly these, and score CSVs always use this order.
extern const std::array<std::string, kDialectClasses> kDialectClassNames;

/// Word-probability model over four dialect classes. Columns of `cond` are
/// per-class conditional distributions p(term | class) in canonical class
/// order; each column sums to 1.
struct DialectModel {
  std::vector<std::string> terms;
  std::unordered_map<std::string, int> term_index;
  Eigen::MatrixXd cond;     // terms x 4
  Eigen::Vector4d prior;    // simplex; uniform by default
};

/// Loads a TSV with header "token<TAB>sae<TAB>aae<TAB>hispanic<TAB>asian"
/// (class columns in any order) and normalizes each class column.
DialectModel load_dialect_model(const std::filesystem::path& path);

struct DialectPosterior {
  std::string doc_id;
  Eigen::Vector4d pi = Eigen::Vector4d::Zero();
  double p_aae = 0.0;
  int n_scored_tokens = 0;
};

/// Per-document mixture EM: pi starts at the prior, responsibilities
///   r(t,c) ∝ pi[c] p(t|c)
/// are averaged over scored tokens to update pi, until max |Δpi| < 1e-9 or
/// 100 iterations. Tokens outside the model vocabulary (including tokens with
/// all-zero weights) are ignored; with no scorable token the document is
/// unscoreable and nullopt is returned. If `loglik_trace` is given it
/// receives the mixture log-likelihood after every update.
std::optional<DialectPosterior> score_document(
    const DialectModel& model, const std::string& doc_id,
    const TokenList& tokens, std::vector<double>* loglik_trace = nullptr);

struct ScoreCorpusResult {
  std::vector<DialectPosterior> posteriors;  // scoreable docs, input order
  std::vector<std::string> dropped_doc_ids;  // unscoreable docs, input order
};

ScoreCorpusResult score_corpus(const DialectModel& model,
                               const std::vector<TokenList>& docs,
                               const std::vector<std::string>& doc_ids);

/// CSV "doc_id,p_sae,p_aae,p_hispanic,p_asian,n_scored_tokens".
void write_dialect_scores(const std::vector<DialectPosterior>& posteriors,
                          const std::filesystem::path& path);
std::vector<DialectPosterior> read_dialect_scores(const std::filesystem::path& path);

}  // namespace stmaudit

#endif  // STMAUDIT_DIALECT_HPP_
