#include "stmaudit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"
#include "stmaudit/rng.hpp"

namespace stmaudit {

std::vector<int> top_terms_by_weight(const Eigen::VectorXd& weights, int m) {
  std::vector<int> order(static_cast<std::size_t>(weights.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return weights(a) > weights(b);
  });
  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(m, 0)), order.size());
  order.resize(take);
  return order;
}

HeldoutSplit make_heldout_split(const DocumentTermMatrix& dtm, double holdout_frac,
                                std::uint64_t seed) {
  if (!(holdout_frac > 0.0 && holdout_frac <= 0.5))
    throw InternalError("make_heldout_split: holdout_frac must be in (0, 0.5]");
  const std::size_t d_count = dtm.n_docs();
  HeldoutSplit split;
  split.train = dtm;

  std::vector<std::size_t> order(d_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "heldout.select"));
  rng.shuffle(order);
  const std::size_t want =
      static_cast<std::size_t>(holdout_frac * static_cast<double>(d_count));

  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < d_count && selected.size() < want; ++i) {
    if (dtm.doc_token_totals[order[i]] >= 2) selected.push_back(order[i]);
  }
  std::sort(selected.begin(), selected.end());

  for (std::size_t row : selected) {
    // Expand token instances in term order, shuffle them with a per-document
    // seed, and deal alternately into the two halves.
    std::vector<int> instances;
    instances.reserve(static_cast<std::size_t>(dtm.doc_token_totals[row]));
    for (const auto& [term, count] : dtm.rows[row])
      for (int i = 0; i < count; ++i) instances.push_back(term);
    Rng doc_rng(derive_seed(derive_seed(seed, "heldout.split"),
                            static_cast<std::uint64_t>(row)));
    doc_rng.shuffle(instances);

    std::map<int, int> first, second;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (i % 2 == 0) ++first[instances[i]];
      else ++second[instances[i]];
    }
    split.train.rows[row].assign(first.begin(), first.end());
    split.train.doc_token_totals[row] = static_cast<int>((instances.size() + 1) / 2);
    split.heldout_rows.push_back(row);
    split.second_half.emplace_back(second.begin(), second.end());
  }
  return split;
}

CompletionScore completion_score(const StmModel& model, const HeldoutSplit& split,
                                 const PrevalenceDesign& design,
                                 const StmConfig& config) {
  CompletionScore score;
  const int k = model.n_topics();
  double total_loglik = 0.0;
  for (std::size_t i = 0; i < split.heldout_rows.size(); ++i) {
    const std::size_t row = split.heldout_rows[i];
    const DocPosterior post = estep_doc(
        model, split.train.rows[row],
        design.X.row(static_cast<Eigen::Index>(row)).transpose(),
        Eigen::VectorXd::Zero(k - 1), config);
    score.thetas.push_back(post.theta);
    for (const auto& [term, count] : split.second_half[i]) {
      const double mix = model.beta.col(term).dot(post.theta);
      total_loglik += count * std::log(std::max(mix, 1e-300));
      score.n_tokens += count;
    }
  }
  score.n_docs = split.heldout_rows.size();
  score.mean_loglik =
      score.n_tokens > 0 ? total_loglik / static_cast<double>(score.n_tokens) : 0.0;
  return score;
}

double heldout_likelihood(const DocumentTermMatrix& dtm,
                          const PrevalenceDesign& design, const StmConfig& config,
                          double holdout_frac, std::uint64_t seed) {
  const HeldoutSplit split = make_heldout_split(dtm, holdout_frac, seed);
  const FittedStm fitted = fit(split.train, design, config);
  return completion_score(fitted.model, split, design, config).mean_loglik;
}

namespace {

// Sorted row lists of the documents containing each term of interest.
std::vector<std::size_t> doc_list(const DocumentTermMatrix& dtm, int term) {
  std::vector<std::size_t> docs;
  for (std::size_t d = 0; d < dtm.rows.size(); ++d) {
    const auto& row = dtm.rows[d];
    const auto it = std::lower_bound(
        row.begin(), row.end(), std::make_pair(term, 0),
        [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it != row.end() && it->first == term) docs.push_back(d);
  }
  return docs;
}

std::size_t intersection_size(const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) ++ia;
    else if (*ib < *ia) ++ib;
    else { ++count; ++ia; ++ib; }
  }
  return count;
}

}  // namespace

std::vector<double> semantic_coherence(const Eigen::MatrixXd& beta,
                                       const DocumentTermMatrix& dtm, int m) {
  if (m < 2) throw InternalError("semantic_coherence: m must be >= 2");
  if (beta.cols() != static_cast<Eigen::Index>(dtm.n_terms()))
    throw AlignmentError("semantic_coherence: beta columns do not match vocabulary");

  std::vector<double> scores;
  std::map<int, std::vector<std::size_t>> lists;
  for (Eigen::Index k = 0; k < beta.rows(); ++k) {
    const std::vector<int> top = top_terms_by_weight(beta.row(k).transpose(), m);
    for (int term : top)
      if (!lists.contains(term)) lists.emplace(term, doc_list(dtm, term));

    double coherence = 0.0;
    for (std::size_t i = 1; i < top.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double df_j = static_cast<double>(lists[top[j]].size());
        if (df_j == 0.0) continue;
        const double co =
            static_cast<double>(intersection_size(lists[top[i]], lists[top[j]]));
        coherence += std::log((co + 1.0) / df_j);
      }
    }
    scores.push_back(coherence);
  }
  return scores;
}

namespace {

// Empirical CDF value of each entry among all entries of the vector
// (ties count as <=, so every value's ECDF is positive).
Eigen::VectorXd ecdf_ranks(const Eigen::VectorXd& values) {
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXd ranks(values.size());
  const double n = static_cast<double>(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), values(i));
    ranks(i) = static_cast<double>(it - sorted.begin()) / n;
  }
  return ranks;
}

}  // namespace

Eigen::MatrixXd frex_scores(const Eigen::MatrixXd& beta, double w) {
  if (!(w >= 0.0 && w <= 1.0))
    throw InternalError("frex_scores: weight must be in [0,1]");
  const Eigen::VectorXd col_sums = beta.colwise().sum().transpose();
  Eigen::MatrixXd frex(beta.rows(), beta.cols());
  for (Eigen::Index k = 0; k < beta.rows(); ++k) {
    Eigen::VectorXd excl(beta.cols());
    for (Eigen::Index v = 0; v < beta.cols(); ++v)
      excl(v) = col_sums(v) > 0.0 ? beta(k, v) / col_sums(v) : 0.0;
    const Eigen::VectorXd f_rank = ecdf_ranks(beta.row(k).transpose());
    const Eigen::VectorXd e_rank = ecdf_ranks(excl);
    for (Eigen::Index v = 0; v < beta.cols(); ++v)
      frex(k, v) = 1.0 / (w / e_rank(v) + (1.0 - w) / f_rank(v));
  }
  return frex;
}

std::vector<double> exclusivity(const Eigen::MatrixXd& beta, double w, int m) {
  const Eigen::MatrixXd frex = frex_scores(beta, w);
  std::vector<double> scores;
  for (Eigen::Index k = 0; k < beta.rows(); ++k) {
    const std::vector<int> top = top_terms_by_weight(beta.row(k).transpose(), m);
    double sum = 0.0;
    for (int term : top) sum += frex(k, term);
    scores.push_back(top.empty() ? 0.0 : sum / static_cast<double>(top.size()));
  }
  return scores;
}

double residual_dispersion(const FittedStm& fitted, const DocumentTermMatrix& dtm) {
  if (fitted.posteriors.size() != dtm.n_docs())
    throw AlignmentError("residual_dispersion: posteriors do not match DTM rows");
  const Eigen::MatrixXd& beta = fitted.model.beta;
  const Eigen::Index v = beta.cols();
  const int k = fitted.model.n_topics();

  double chi2 = 0.0;
  std::int64_t cells = 0;
  Eigen::VectorXd observed = Eigen::VectorXd::Zero(v);
  for (std::size_t d = 0; d < dtm.n_docs(); ++d) {
    const Eigen::VectorXd expected =
        static_cast<double>(dtm.doc_token_totals[d]) *
        (fitted.posteriors[d].theta.transpose() * beta).transpose();
    for (const auto& [term, count] : dtm.rows[d]) observed(term) = count;
    for (Eigen::Index t = 0; t < v; ++t) {
      if (expected(t) > 1e-12) {
        ++cells;
        const double diff = observed(t) - expected(t);
        chi2 += diff * diff / expected(t);
      }
    }
    for (const auto& [term, count] : dtm.rows[d]) observed(term) = 0.0;
  }
  const double dof =
      static_cast<double>(cells) - static_cast<double>(k) * static_cast<double>(v - 1);
  if (!(dof > 0.0))
    throw InternalError("residual_dispersion: nonpositive degrees of freedom");
  return chi2 / dof;
}

SearchKResult search_k(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
                       const std::vector<int>& k_list, const StmConfig& config,
                       double holdout_frac) {
  if (k_list.empty()) throw InternalError("search_k: k list is empty");
  std::vector<int> ks = k_list;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  SearchKResult result;
  for (int k : ks) {
    StmConfig cfg = config;
    cfg.k = k;
    try {
      if (k < 1) throw InternalError("k must be >= 1");
      const FittedStm fitted = fit(dtm, design, cfg);
      KDiagnostics row;
      row.k = k;
      row.topic_coherence = semantic_coherence(fitted.model.beta, dtm);
      row.topic_exclusivity = exclusivity(fitted.model.beta);
      row.mean_semantic_coherence =
          std::accumulate(row.topic_coherence.begin(), row.topic_coherence.end(), 0.0) /
          static_cast<double>(row.topic_coherence.size());
      row.mean_exclusivity =
          std::accumulate(row.topic_exclusivity.begin(), row.topic_exclusivity.end(),
                          0.0) /
          static_cast<double>(row.topic_exclusivity.size());
      row.residual_dispersion = residual_dispersion(fitted, dtm);
      row.heldout_loglik_per_token =
          heldout_likelihood(dtm, design, cfg, holdout_frac, cfg.seed);
      result.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      result.failures.emplace_back(k, e.what());
    }
  }
  return result;
}

void write_searchk_csv(const SearchKResult& result, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "k,heldout,residuals,coherence,exclusivity\n";
  for (const KDiagnostics& row : result.rows) {
    out << row.k << ',' << format_double(row.heldout_loglik_per_token) << ','
        << format_double(row.residual_dispersion) << ','
        << format_double(row.mean_semantic_coherence) << ','
        << format_double(row.mean_exclusivity) << '\n';
  }
  write_file(path, out.str());
}

void write_searchk_topics_csv(const SearchKResult& result,
                              const std::filesystem::path& path) {
  std::ostringstream out;
  out << "k,topic,coherence,exclusivity\n";
  for (const KDiagnostics& row : result.rows)
    for (std::size_t t = 0; t < row.topic_coherence.size(); ++t)
      out << row.k << ',' << (t + 1) << ',' << format_double(row.topic_coherence[t])
          << ',' << format_double(row.topic_exclusivity[t]) << '\n';
  write_file(path, out.str());
}

}  // namespace stmaudit
