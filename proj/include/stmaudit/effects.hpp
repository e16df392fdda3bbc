#ifndef STMAUDIT_EFFECTS_HPP_
#define STMAUDIT_EFFECTS_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "stmaudit/stm.hpp"

namespace stmaudit {

struct EffectsConfig {
  int draws_per_doc = 25;  // 0 selects the point-estimate path
  int sims = 500;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Regression of one topic's proportion on [1, label, p_aae, label*p_aae].
/// With draws_per_doc = 0, `coef` is the plain OLS solution and coef_draws is
/// empty; otherwise each of `sims` rounds samples eta_d from every document's
/// Laplace posterior, regresses the softmax-mapped proportions, perturbs the
/// solution by its OLS sampling distribution, and stores one coefficient row.
struct EffectEstimate {
  int topic = 0;  // 0-based
  Eigen::Vector4d coef = Eigen::Vector4d::Zero();
  Eigen::MatrixXd coef_draws;  // sims x 4 (empty on the point path)
  double sigma2 = 0.0;
  int n = 0;
};

std::vector<EffectEstimate> estimate_effects(const FittedStm& fitted,
                                             const PrevalenceDesign& design,
                                             const std::vector<int>& topics,
                                             const EffectsConfig& config);

/// Predicted topic proportion over p_aae in 0.00..1.00 (step 0.01) for one
/// label, with 2.5/97.5 percentile bands over the coefficient draws.
struct EffectCurve {
  int topic = 0;  // 0-based
  Label label = Label::normal;
  std::vector<double> grid;
  std::vector<double> estimate;
  std::vector<double> lo95;
  std::vector<double> hi95;
};

EffectCurve predict_curve(const EffectEstimate& effect, Label label);

/// CSV "topic,label,p_aae,estimate,lo95,hi95" (topics 1-based, 101 grid rows
/// per topic/label pair).
void export_curves(const std::vector<EffectCurve>& curves,
                   const std::filesystem::path& path);

/// CSV "topic,b0,b1,b2,b3,b0_lo,b0_hi,...,b3_hi" with 2.5/97.5 percentile
/// bounds from the coefficient draws.
void export_coef_table(const std::vector<EffectEstimate>& effects,
                       const std::filesystem::path& path);

/// Type-7 (linear interpolation) percentile of a sample; q in [0,1].
double percentile(std::vector<double> values, double q);

}  // namespace stmaudit

#endif  // STMAUDIT_EFFECTS_HPP_
