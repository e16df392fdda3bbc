#include "stmaudit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <Eigen/Cholesky>

#include "stmaudit/dialect.hpp"
#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"
#include "stmaudit/parallel.hpp"
#include "stmaudit/rng.hpp"

namespace stmaudit {

namespace {

std::string padded_name(const char* prefix, int index, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, index);
  return buf;
}

int digits_for(int n) {
  int width = 1;
  while (n >= 10) {
    n /= 10;
    ++width;
  }
  return width;
}

}  // namespace

GroundTruth make_ground_truth(const SynthSpec& spec) {
  if (spec.d < 1 || spec.v < 2 || spec.k < 1)
    throw InternalError("make_ground_truth: need d >= 1, v >= 2, k >= 1");
  if (spec.k > 1 && (spec.interaction_topic < 0 || spec.interaction_topic >= spec.k - 1))
    throw InternalError("make_ground_truth: interaction topic out of range");

  GroundTruth truth;
  Rng rng(derive_seed(spec.seed, "synth.truth"));

  // Dirichlet rows via normalized gamma draws.
  truth.beta_true.resize(spec.k, spec.v);
  for (int k = 0; k < spec.k; ++k) {
    double row_sum = 0.0;
    for (int v = 0; v < spec.v; ++v) {
      const double g = rng.gamma(spec.beta_concentration, 1.0);
      truth.beta_true(k, v) = g;
      row_sum += g;
    }
    truth.beta_true.row(k) /= row_sum;
  }

  truth.labels.resize(static_cast<std::size_t>(spec.d));
  truth.p_aae.resize(static_cast<std::size_t>(spec.d));
  truth.doc_lengths.resize(static_cast<std::size_t>(spec.d));
  for (int d = 0; d < spec.d; ++d) {
    truth.labels[static_cast<std::size_t>(d)] =
        rng.uniform01() < 0.5 ? Label::positive : Label::normal;
    truth.p_aae[static_cast<std::size_t>(d)] = rng.uniform01();
    truth.doc_lengths[static_cast<std::size_t>(d)] =
        std::max(1, rng.poisson(spec.mean_length));
  }
  truth.design = build_design(truth.labels, truth.p_aae);

  truth.gamma_true = Eigen::MatrixXd::Zero(kDesignCols, spec.k - 1);
  if (spec.k > 1 && spec.interaction != 0.0)
    truth.gamma_true(3, spec.interaction_topic) = spec.interaction;
  truth.sigma_true =
      spec.sigma_scale * Eigen::MatrixXd::Identity(spec.k - 1, spec.k - 1);

  const int width = digits_for(spec.v - 1);
  truth.vocabulary.reserve(static_cast<std::size_t>(spec.v));
  for (int v = 0; v < spec.v; ++v)
    truth.vocabulary.push_back(padded_name("v", v, width));
  return truth;
}

SynthCorpus generate_corpus(const GroundTruth& truth, std::uint64_t seed) {
  const std::size_t d_count = truth.doc_lengths.size();
  const int k = static_cast<int>(truth.beta_true.rows());
  const int v = static_cast<int>(truth.beta_true.cols());
  for (int len : truth.doc_lengths)
    if (len < 1) throw InternalError("generate_corpus: document length < 1");

  Eigen::MatrixXd sigma_chol(k - 1, k - 1);
  if (k > 1) {
    Eigen::LLT<Eigen::MatrixXd> llt(truth.sigma_true);
    if (llt.info() != Eigen::Success) {
      // A zero or near-zero prior covariance is allowed; fall back to jitter.
      Eigen::MatrixXd jittered = truth.sigma_true;
      jittered.diagonal().array() += 1e-300;
      llt.compute(jittered);
      if (llt.info() != Eigen::Success)
        throw InternalError("generate_corpus: sigma_true is not PSD");
    }
    sigma_chol = llt.matrixL();
  }

  // Contiguous topic rows for categorical sampling.
  std::vector<std::vector<double>> beta_rows(static_cast<std::size_t>(k));
  for (int topic = 0; topic < k; ++topic) {
    beta_rows[static_cast<std::size_t>(topic)].resize(static_cast<std::size_t>(v));
    for (int term = 0; term < v; ++term)
      beta_rows[static_cast<std::size_t>(topic)][static_cast<std::size_t>(term)] =
          truth.beta_true(topic, term);
  }

  SynthCorpus corpus;
  corpus.labels = truth.labels;
  corpus.p_aae = truth.p_aae;
  corpus.thetas.resize(static_cast<Eigen::Index>(d_count), k);
  corpus.dtm.vocabulary = truth.vocabulary;
  corpus.dtm.rows.resize(d_count);
  corpus.dtm.doc_ids.resize(d_count);
  corpus.dtm.doc_token_totals.resize(d_count);

  const std::uint64_t doc_base = derive_seed(seed, "synth.docs");
  const int width = digits_for(static_cast<int>(d_count) - 1);
  parallel_chunks(d_count, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t d = lo; d < hi; ++d) {
      Rng rng(derive_seed(doc_base, static_cast<std::uint64_t>(d)));
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(k - 1);
      if (k > 1) {
        Eigen::VectorXd z(k - 1);
        for (Eigen::Index i = 0; i < k - 1; ++i) z(i) = rng.normal();
        eta = truth.gamma_true.transpose() *
                  truth.design.X.row(static_cast<Eigen::Index>(d)).transpose() +
              sigma_chol * z;
      }
      const Eigen::VectorXd theta = softmax_with_pinned_zero(eta);
      corpus.thetas.row(static_cast<Eigen::Index>(d)) = theta.transpose();

      std::vector<double> theta_weights(theta.data(), theta.data() + k);
      std::map<int, int> counts;
      for (int token = 0; token < truth.doc_lengths[d]; ++token) {
        const std::size_t topic = rng.categorical(theta_weights);
        const std::size_t term = rng.categorical(beta_rows[topic]);
        ++counts[static_cast<int>(term)];
      }
      corpus.dtm.rows[d].assign(counts.begin(), counts.end());
      corpus.dtm.doc_ids[d] = padded_name("d", static_cast<int>(d), width);
      corpus.dtm.doc_token_totals[d] = truth.doc_lengths[d];
    }
  });
  return corpus;
}

TopicAlignment align_topics(const Eigen::MatrixXd& beta_est,
                            const Eigen::MatrixXd& beta_true) {
  if (beta_est.rows() != beta_true.rows() || beta_est.cols() != beta_true.cols())
    throw AlignmentError("align_topics: shape mismatch");
  const Eigen::Index k = beta_true.rows();

  Eigen::MatrixXd cosine(k, k);  // (true, est)
  for (Eigen::Index t = 0; t < k; ++t) {
    for (Eigen::Index e = 0; e < k; ++e) {
      const double denom = beta_true.row(t).norm() * beta_est.row(e).norm();
      cosine(t, e) =
          denom > 0.0 ? beta_true.row(t).dot(beta_est.row(e)) / denom : 0.0;
    }
  }

  TopicAlignment alignment;
  alignment.permutation.assign(static_cast<std::size_t>(k), -1);
  alignment.cosines.assign(static_cast<std::size_t>(k), 0.0);
  std::vector<bool> true_used(static_cast<std::size_t>(k), false);
  std::vector<bool> est_used(static_cast<std::size_t>(k), false);
  for (Eigen::Index round = 0; round < k; ++round) {
    double best = -2.0;
    Eigen::Index best_t = -1, best_e = -1;
    for (Eigen::Index t = 0; t < k; ++t) {
      if (true_used[static_cast<std::size_t>(t)]) continue;
      for (Eigen::Index e = 0; e < k; ++e) {
        if (est_used[static_cast<std::size_t>(e)]) continue;
        if (cosine(t, e) > best) {
          best = cosine(t, e);
          best_t = t;
          best_e = e;
        }
      }
    }
    true_used[static_cast<std::size_t>(best_t)] = true;
    est_used[static_cast<std::size_t>(best_e)] = true;
    alignment.permutation[static_cast<std::size_t>(best_t)] = static_cast<int>(best_e);
    alignment.cosines[static_cast<std::size_t>(best_t)] = best;
  }
  double sum = 0.0;
  for (double c : alignment.cosines) sum += c;
  alignment.mean_cosine = sum / static_cast<double>(k);
  return alignment;
}

void write_truth(const GroundTruth& truth, const SynthSpec& spec,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  FittedStm as_fitted;
  as_fitted.model.beta = truth.beta_true;
  as_fitted.model.gamma = truth.gamma_true;
  as_fitted.model.sigma = truth.sigma_true;
  as_fitted.converged = true;
  as_fitted.config.k = static_cast<int>(truth.beta_true.rows());
  as_fitted.config.seed = spec.seed;
  save_model_json(as_fitted, vocabulary_hash(truth.vocabulary), dir / "truth.json");
}

}  // namespace stmaudit
