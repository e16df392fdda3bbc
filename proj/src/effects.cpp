#include "stmaudit/effects.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"
#include "stmaudit/parallel.hpp"
#include "stmaudit/rng.hpp"

namespace stmaudit {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InternalError("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - std::floor(h);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

struct OlsSolver {
  Eigen::Matrix4d xtx;
  Eigen::LDLT<Eigen::Matrix4d> ldlt;
  Eigen::Matrix4d xtx_inv;
  Eigen::Matrix4d perturb_chol;  // chol(xtx_inv), scaled by s per draw

  explicit OlsSolver(const Eigen::MatrixXd& x) {
    xtx = x.transpose() * x;
    Eigen::FullPivLU<Eigen::Matrix4d> lu(xtx);
    if (!lu.isInvertible())
      throw SingularDesignError(
          "effects: design matrix X'X is singular (needs both labels and "
          "varying p_aae)");
    ldlt.compute(xtx);
    xtx_inv = lu.inverse();
    Eigen::LLT<Eigen::Matrix4d> llt(xtx_inv);
    if (llt.info() != Eigen::Success)
      throw SingularDesignError("effects: X'X inverse is not positive-definite");
    perturb_chol = llt.matrixL();
  }

  Eigen::Vector4d solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        double* sigma2_out) const {
    const Eigen::Vector4d coef = ldlt.solve(x.transpose() * y);
    if (sigma2_out) {
      const Eigen::VectorXd resid = y - x * coef;
      const double dof = static_cast<double>(y.size()) - 4.0;
      *sigma2_out = dof > 0.0 ? resid.squaredNorm() / dof : 0.0;
    }
    return coef;
  }
};

EffectEstimate estimate_one_topic(const FittedStm& fitted,
                                  const PrevalenceDesign& design,
                                  const OlsSolver& ols,
                                  const std::vector<Eigen::MatrixXd>& nu_chol,
                                  int topic, const EffectsConfig& config) {
  const std::size_t d_count = fitted.posteriors.size();
  const int k = fitted.model.n_topics();
  EffectEstimate effect;
  effect.topic = topic;
  effect.n = static_cast<int>(d_count);

  Eigen::VectorXd y(static_cast<Eigen::Index>(d_count));
  if (config.draws_per_doc <= 0) {
    for (std::size_t d = 0; d < d_count; ++d)
      y(static_cast<Eigen::Index>(d)) = fitted.posteriors[d].theta(topic);
    effect.coef = ols.solve(design.X, y, &effect.sigma2);
    effect.coef_draws.resize(0, 4);
    return effect;
  }

  Rng rng(derive_seed(config.seed,
                      "effects.topic=" + std::to_string(topic)));
  effect.coef_draws.resize(config.sims, 4);
  Eigen::VectorXd z(k - 1);
  double sigma2_sum = 0.0;
  for (int sim = 0; sim < config.sims; ++sim) {
    for (std::size_t d = 0; d < d_count; ++d) {
      for (Eigen::Index i = 0; i < k - 1; ++i) z(i) = rng.normal();
      const Eigen::VectorXd eta =
          fitted.posteriors[d].eta_hat + nu_chol[d] * z;
      y(static_cast<Eigen::Index>(d)) = softmax_with_pinned_zero(eta)(topic);
    }
    double sigma2 = 0.0;
    Eigen::Vector4d coef = ols.solve(design.X, y, &sigma2);
    sigma2_sum += sigma2;
    Eigen::Vector4d noise;
    for (int i = 0; i < 4; ++i) noise(i) = rng.normal();
    coef += std::sqrt(sigma2) * (ols.perturb_chol * noise);
    effect.coef_draws.row(sim) = coef.transpose();
  }
  effect.coef = effect.coef_draws.colwise().mean().transpose();
  effect.sigma2 = sigma2_sum / static_cast<double>(config.sims);
  return effect;
}

}  // namespace

std::vector<EffectEstimate> estimate_effects(const FittedStm& fitted,
                                             const PrevalenceDesign& design,
                                             const std::vector<int>& topics,
                                             const EffectsConfig& config) {
  const std::size_t d_count = fitted.posteriors.size();
  if (design.n_docs() != d_count)
    throw AlignmentError("estimate_effects: design rows do not match posteriors");
  if (d_count == 0) throw EmptyCorpusError("estimate_effects: no documents");
  const int k = fitted.model.n_topics();
  for (int topic : topics)
    if (topic < 0 || topic >= k)
      throw std::out_of_range("estimate_effects: topic index out of range: " +
                              std::to_string(topic));

  const OlsSolver ols(design.X);

  // Shared across topics; each topic's sampling uses its own derived seed.
  std::vector<Eigen::MatrixXd> nu_chol;
  if (config.draws_per_doc > 0) {
    nu_chol.resize(d_count);
    for (std::size_t d = 0; d < d_count; ++d) {
      Eigen::LLT<Eigen::MatrixXd> llt(fitted.posteriors[d].nu);
      if (llt.info() != Eigen::Success) {
        Eigen::MatrixXd jittered = fitted.posteriors[d].nu;
        jittered.diagonal().array() += 1e-12;
        llt.compute(jittered);
        if (llt.info() != Eigen::Success)
          throw InternalError("estimate_effects: posterior covariance not PD");
      }
      nu_chol[d] = llt.matrixL();
    }
  }

  std::vector<EffectEstimate> effects(topics.size());
  parallel_chunks(topics.size(), config.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      effects[i] = estimate_one_topic(fitted, design, ols, nu_chol, topics[i], config);
  });
  return effects;
}

EffectCurve predict_curve(const EffectEstimate& effect, Label label) {
  if (label != Label::positive && label != Label::normal)
    throw InvalidSchemeError("predict_curve: label must be positive or normal");
  const double a = label == Label::positive ? 1.0 : 0.0;
  EffectCurve curve;
  curve.topic = effect.topic;
  curve.label = label;
  const bool point_only = effect.coef_draws.rows() == 0;

  for (int i = 0; i <= 100; ++i) {
    const double p = static_cast<double>(i) / 100.0;
    const Eigen::Vector4d x(1.0, a, p, a * p);
    curve.grid.push_back(p);
    if (point_only) {
      const double value = effect.coef.dot(x);
      curve.estimate.push_back(value);
      curve.lo95.push_back(value);
      curve.hi95.push_back(value);
    } else {
      const Eigen::VectorXd values = effect.coef_draws * x;
      std::vector<double> sample(values.data(), values.data() + values.size());
      curve.estimate.push_back(values.mean());
      curve.lo95.push_back(percentile(sample, 0.025));
      curve.hi95.push_back(percentile(sample, 0.975));
    }
  }
  return curve;
}

void export_curves(const std::vector<EffectCurve>& curves,
                   const std::filesystem::path& path) {
  std::ostringstream out;
  out << "topic,label,p_aae,estimate,lo95,hi95\n";
  for (const EffectCurve& curve : curves) {
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
      out << (curve.topic + 1) << ',' << label_name(curve.label) << ','
          << format_fixed2(curve.grid[i]) << ',' << format_double(curve.estimate[i])
          << ',' << format_double(curve.lo95[i]) << ','
          << format_double(curve.hi95[i]) << '\n';
    }
  }
  write_file(path, out.str());
}

void export_coef_table(const std::vector<EffectEstimate>& effects,
                       const std::filesystem::path& path) {
  std::ostringstream out;
  out << "topic,b0,b1,b2,b3";
  for (int i = 0; i < 4; ++i) out << ",b" << i << "_lo,b" << i << "_hi";
  out << '\n';
  for (const EffectEstimate& effect : effects) {
    out << (effect.topic + 1);
    for (int i = 0; i < 4; ++i) out << ',' << format_double(effect.coef(i));
    for (int i = 0; i < 4; ++i) {
      double lo = effect.coef(i);
      double hi = effect.coef(i);
      if (effect.coef_draws.rows() > 0) {
        std::vector<double> sample(
            effect.coef_draws.col(i).data(),
            effect.coef_draws.col(i).data() + effect.coef_draws.rows());
        lo = percentile(sample, 0.025);
        hi = percentile(sample, 0.975);
      }
      out << ',' << format_double(lo) << ',' << format_double(hi);
    }
    out << '\n';
  }
  write_file(path, out.str());
}

}  // namespace stmaudit
