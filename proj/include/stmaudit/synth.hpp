#ifndef STMAUDIT_SYNTH_HPP_
#define STMAUDIT_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "stmaudit/corpus.hpp"
#include "stmaudit/stm.hpp"

namespace stmaudit {

struct GroundTruth {
  Eigen::MatrixXd beta_true;   // K x V simplex rows
  Eigen::MatrixXd gamma_true;  // P x (K-1)
  Eigen::MatrixXd sigma_true;  // (K-1) x (K-1) SPD
  PrevalenceDesign design;
  std::vector<Label> labels;
  std::vector<double> p_aae;
  std::vector<int> doc_lengths;  // all >= 1
  std::vector<std::string> vocabulary;
};

struct SynthSpec {
  int d = 2000;
  int v = 500;
  int k = 5;
  double mean_length = 60.0;
  std::uint64_t seed = 0;
  // Dirichlet concentration for topic rows; small values give sparse,
  // well-separated topics.
  double beta_concentration = 0.05;
  // Optional planted prevalence effect: gamma_true(3, interaction_topic).
  double interaction = 0.0;
  int interaction_topic = 0;
  double sigma_scale = 1.0;
};

/// Seeded ground truth with Dirichlet topic rows, Bernoulli(0.5) labels,
/// uniform p_aae, Poisson(mean_length) document lengths clamped to >= 1.
GroundTruth make_ground_truth(const SynthSpec& spec);

struct SynthCorpus {
  DocumentTermMatrix dtm;
  std::vector<Label> labels;
  std::vector<double> p_aae;
  Eigen::MatrixXd thetas;  // D x K, the drawn topic proportions
};

/// Draws eta_d ~ N(Gamma' x_d, Sigma), theta = softmax([eta;0]), then each
/// token's topic and word. Per-document derived seeds make the result
/// deterministic and order-independent.
SynthCorpus generate_corpus(const GroundTruth& truth, std::uint64_t seed);

struct TopicAlignment {
  std::vector<int> permutation;  // permutation[j] = estimated topic for true topic j
  std::vector<double> cosines;   // aligned to true topics
  double mean_cosine = 0.0;
};

/// Greedy maximum-cosine matching without replacement.
TopicAlignment align_topics(const Eigen::MatrixXd& beta_est,
                            const Eigen::MatrixXd& beta_true);

/// Serializes the truth parameters in the fitted-model JSON schema plus the
/// covariates as labels.csv / dialect-score-format CSV so `fit` can consume a
/// synthetic run directly.
void write_truth(const GroundTruth& truth, const SynthSpec& spec,
                 const std::filesystem::path& dir);

}  // namespace stmaudit

#endif  // STMAUDIT_SYNTH_HPP_
