#include "stmaudit/stm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"
#include "stmaudit/parallel.hpp"
#include "stmaudit/rng.hpp"

namespace stmaudit {

PrevalenceDesign build_design(const std::vector<Label>& labels,
                              const std::vector<double>& p_aae) {
  if (labels.size() != p_aae.size())
    throw AlignmentError("build_design: labels and p_aae differ in length");
  PrevalenceDesign design;
  design.column_names = {"intercept", "label", "p_aae", "label_x_p_aae"};
  design.X.resize(static_cast<Eigen::Index>(labels.size()), kDesignCols);
  for (std::size_t d = 0; d < labels.size(); ++d) {
    if (labels[d] != Label::positive && labels[d] != Label::normal)
      throw InvalidSchemeError("build_design: labels must be binary (positive/normal)");
    const double p = p_aae[d];
    if (!(p >= 0.0 && p <= 1.0))
      throw InvalidCovariateError("build_design: p_aae outside [0,1] at row " +
                                  std::to_string(d));
    const double a = labels[d] == Label::positive ? 1.0 : 0.0;
    const Eigen::Index row = static_cast<Eigen::Index>(d);
    design.X(row, 0) = 1.0;
    design.X(row, 1) = a;
    design.X(row, 2) = p;
    design.X(row, 3) = a * p;
  }
  return design;
}

void write_design(const PrevalenceDesign& design,
                  const std::vector<std::string>& doc_ids,
                  const std::filesystem::path& path) {
  if (doc_ids.size() != design.n_docs())
    throw AlignmentError("write_design: doc ids and design rows differ");
  std::ostringstream out;
  out << "doc_id";
  for (const std::string& name : design.column_names) out << ',' << name;
  out << '\n';
  for (std::size_t d = 0; d < doc_ids.size(); ++d) {
    out << csv_escape(doc_ids[d]);
    for (int c = 0; c < design.X.cols(); ++c)
      out << ',' << format_double(design.X(static_cast<Eigen::Index>(d), c));
    out << '\n';
  }
  write_file(path, out.str());
}

Eigen::VectorXd softmax_with_pinned_zero(const Eigen::VectorXd& eta) {
  const Eigen::Index k = eta.size() + 1;
  Eigen::VectorXd logits(k);
  logits.head(eta.size()) = eta;
  logits(k - 1) = 0.0;
  const double shift = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - shift).exp();
  return w / w.sum();
}

StmModel init_model(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
                    const StmConfig& config) {
  if (config.k < 1) throw InternalError("init_model: k must be >= 1");
  if (design.n_docs() != dtm.n_docs())
    throw AlignmentError("init_model: design rows do not match DTM rows");
  const int k = config.k;
  const Eigen::Index v = static_cast<Eigen::Index>(dtm.n_terms());

  Eigen::VectorXd freq = Eigen::VectorXd::Zero(v);
  for (const auto& row : dtm.rows)
    for (const auto& [term, count] : row) freq(term) += count;
  const double total = freq.sum();
  if (!(total > 0.0)) throw EmptyCorpusError("init_model: DTM has no tokens");
  freq /= total;

  StmModel model;
  model.beta.resize(k, v);
  if (k == 1) {
    // Single topic: nothing to break symmetry for, so the row is the exact
    // unigram distribution.
    model.beta.row(0) = freq.transpose();
  } else {
    Rng rng(derive_seed(config.seed, "stm.init"));
    for (int topic = 0; topic < k; ++topic) {
      for (Eigen::Index term = 0; term < v; ++term) {
        // Positive multiplicative jitter with mean 1, CV 0.1.
        const double g = rng.gamma(100.0, 0.01);
        model.beta(topic, term) = freq(term) * g;
      }
      const double row_sum = model.beta.row(topic).sum();
      model.beta.row(topic) /= row_sum;
    }
  }
  model.gamma = Eigen::MatrixXd::Zero(kDesignCols, k - 1);
  model.sigma = Eigen::MatrixXd::Identity(k - 1, k - 1);
  return model;
}

namespace {

struct DocWorkspace {
  std::vector<int> terms;
  Eigen::VectorXd counts;
  double total = 0.0;

  void load(DocCounts doc) {
    terms.clear();
    terms.reserve(doc.size());
    counts.resize(static_cast<Eigen::Index>(doc.size()));
    total = 0.0;
    Eigen::Index i = 0;
    for (const auto& [term, count] : doc) {
      terms.push_back(term);
      counts(i++) = count;
      total += count;
    }
  }
};

// Evaluates f(eta) plus the quantities Newton needs at eta. The abbreviations
// follow the objective: theta = softmax([eta;0]), mix_u is the per-term
// mixture probability, alloc_k the expected token count allocated to topic k.
struct Objective {
  const StmModel& model;
  const DocWorkspace& doc;
  const Eigen::VectorXd& mu;
  const Eigen::LLT<Eigen::MatrixXd>& sigma_llt;

  Eigen::VectorXd theta;
  Eigen::VectorXd mix;
  double value = 0.0;

  double eval(const Eigen::VectorXd& eta) {
    theta = softmax_with_pinned_zero(eta);
    const Eigen::Index u = static_cast<Eigen::Index>(doc.terms.size());
    mix.resize(u);
    double loglik = 0.0;
    for (Eigen::Index i = 0; i < u; ++i) {
      const double m = model.beta.col(doc.terms[static_cast<std::size_t>(i)])
                           .dot(theta);
      mix(i) = m;
      loglik += doc.counts(i) * std::log(std::max(m, 1e-300));
    }
    double prior = 0.0;
    if (eta.size() > 0) {
      const Eigen::VectorXd centered = eta - mu;
      prior = -0.5 * centered.dot(sigma_llt.solve(centered));
    }
    value = prior + loglik;
    return value;
  }

  // Expected per-topic token allocation at the current theta/mix.
  Eigen::VectorXd allocation() const {
    Eigen::VectorXd alloc = Eigen::VectorXd::Zero(theta.size());
    for (std::size_t i = 0; i < doc.terms.size(); ++i) {
      const double scale = doc.counts(static_cast<Eigen::Index>(i)) /
                           std::max(mix(static_cast<Eigen::Index>(i)), 1e-300);
      alloc += scale * model.beta.col(doc.terms[i]).cwiseProduct(theta);
    }
    return alloc;
  }
};

// Negative Hessian of f at the current objective state (restricted to the
// free K-1 coordinates):
//   -H = Sigma^-1 + N diag(theta) - N theta theta' + PhiW - diag(alloc)
// where PhiW = sum_u c_u phi_u phi_u' over the document's terms.
Eigen::MatrixXd negative_hessian(const Objective& obj, const Eigen::VectorXd& alloc,
                                 const Eigen::MatrixXd& sigma_inv) {
  const Eigen::Index km1 = sigma_inv.rows();
  const Eigen::Index k = km1 + 1;
  const double n = obj.doc.total;

  Eigen::MatrixXd phiw = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t i = 0; i < obj.doc.terms.size(); ++i) {
    const Eigen::Index ei = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd phi =
        obj.model.beta.col(obj.doc.terms[i]).cwiseProduct(obj.theta) /
        std::max(obj.mix(ei), 1e-300);
    phiw.noalias() += obj.doc.counts(ei) * phi * phi.transpose();
  }

  Eigen::MatrixXd neg_h = sigma_inv;
  neg_h += n * (Eigen::MatrixXd(obj.theta.head(km1).asDiagonal()) -
                obj.theta.head(km1) * obj.theta.head(km1).transpose());
  neg_h += phiw.topLeftCorner(km1, km1);
  neg_h -= Eigen::MatrixXd(alloc.head(km1).asDiagonal());
  return neg_h;
}

// Cholesky with escalating jitter, starting at 1e-8 on the diagonal.
Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd mat, double* jitter_used) {
  Eigen::LLT<Eigen::MatrixXd> llt(mat);
  double jitter = 0.0;
  double step = 1e-8;
  while (llt.info() != Eigen::Success && step <= 1e6) {
    mat.diagonal().array() += step - jitter;
    jitter = step;
    step *= 10.0;
    llt.compute(mat);
  }
  if (llt.info() != Eigen::Success)
    throw InternalError("Cholesky failed even with jitter");
  if (jitter_used) *jitter_used = jitter;
  return llt;
}

double logdet_inverse_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  double logdet = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += std::log(l(i, i));
  return -2.0 * logdet;
}

}  // namespace

void accumulate_responsibilities(const StmModel& model, DocCounts doc,
                                 const Eigen::VectorXd& theta,
                                 Eigen::MatrixXd& accum) {
  for (const auto& [term, count] : doc) {
    const Eigen::VectorXd weighted = model.beta.col(term).cwiseProduct(theta);
    const double m = weighted.sum();
    accum.col(term) += (count / std::max(m, 1e-300)) * weighted;
  }
}

DocPosterior estep_doc(const StmModel& model, DocCounts doc,
                       const Eigen::VectorXd& x_d, const Eigen::VectorXd& warm_eta,
                       const StmConfig& config, Eigen::MatrixXd* beta_accum) {
  const int k = model.n_topics();
  DocWorkspace work;
  work.load(doc);
  if (work.total < 1.0)
    throw EmptyDocumentError("estep_doc: document has no tokens");

  DocPosterior post;
  if (k == 1) {
    post.eta_hat = Eigen::VectorXd(0);
    post.nu = Eigen::MatrixXd(0, 0);
    post.theta = Eigen::VectorXd::Ones(1);
    double loglik = 0.0;
    for (std::size_t i = 0; i < work.terms.size(); ++i)
      loglik += work.counts(static_cast<Eigen::Index>(i)) *
                std::log(std::max(model.beta(0, work.terms[i]), 1e-300));
    post.bound = loglik;
    if (beta_accum) accumulate_responsibilities(model, doc, post.theta, *beta_accum);
    return post;
  }

  const Eigen::VectorXd mu = model.gamma.transpose() * x_d;
  Eigen::LLT<Eigen::MatrixXd> sigma_llt(model.sigma);
  if (sigma_llt.info() != Eigen::Success)
    throw InternalError("estep_doc: prior covariance is not positive-definite");
  const Eigen::MatrixXd sigma_inv =
      sigma_llt.solve(Eigen::MatrixXd::Identity(k - 1, k - 1));

  Objective obj{model, work, mu, sigma_llt, {}, {}, 0.0};
  Eigen::VectorXd eta = warm_eta.size() == k - 1 ? warm_eta
                                                 : Eigen::VectorXd::Zero(k - 1);
  double f_cur = obj.eval(eta);

  for (int iter = 0; iter < config.newton_max_iters; ++iter) {
    const Eigen::VectorXd alloc = obj.allocation();
    Eigen::VectorXd grad = (alloc - work.total * obj.theta).head(k - 1);
    grad.noalias() -= sigma_inv * (eta - mu);
    if (grad.lpNorm<Eigen::Infinity>() < config.newton_grad_tol) break;

    const Eigen::MatrixXd neg_h = negative_hessian(obj, alloc, sigma_inv);
    const Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(neg_h, nullptr);
    const Eigen::VectorXd direction = llt.solve(grad);

    // Damped step: halve until the objective strictly increases.
    double step = 1.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 40; ++halvings) {
      const Eigen::VectorXd candidate = eta + step * direction;
      const double f_new = obj.eval(candidate);
      if (f_new > f_cur) {
        eta = candidate;
        f_cur = f_new;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      obj.eval(eta);  // restore state at the current mode
      break;
    }
  }

  const Eigen::VectorXd alloc = obj.allocation();
  const Eigen::MatrixXd neg_h = negative_hessian(obj, alloc, sigma_inv);
  const Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(neg_h, nullptr);

  post.eta_hat = eta;
  post.nu = llt.solve(Eigen::MatrixXd::Identity(k - 1, k - 1));
  post.nu = 0.5 * (post.nu + post.nu.transpose()).eval();
  post.theta = obj.theta;
  post.bound = f_cur + 0.5 * logdet_inverse_from_llt(llt);
  if (beta_accum) accumulate_responsibilities(model, doc, post.theta, *beta_accum);
  return post;
}

StmModel mstep(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
               const std::vector<DocPosterior>& posteriors,
               const Eigen::MatrixXd& beta_counts, const StmConfig& config) {
  const std::size_t d_count = dtm.n_docs();
  if (posteriors.size() != d_count)
    throw AlignmentError("mstep: posteriors do not match DTM rows");
  if (design.n_docs() != d_count)
    throw AlignmentError("mstep: design rows do not match DTM rows");
  const int k = static_cast<int>(beta_counts.rows());
  const Eigen::Index v = beta_counts.cols();

  StmModel model;
  model.beta.resize(k, v);
  for (int topic = 0; topic < k; ++topic) {
    Eigen::VectorXd row =
        beta_counts.row(topic).transpose().array() + config.beta_pseudocount;
    const double row_sum = row.sum();
    if (row_sum > 0.0)
      model.beta.row(topic) = row.transpose() / row_sum;
    else
      model.beta.row(topic).setConstant(1.0 / static_cast<double>(v));
  }

  if (k == 1) {
    model.gamma = Eigen::MatrixXd::Zero(kDesignCols, 0);
    model.sigma = Eigen::MatrixXd(0, 0);
    return model;
  }

  Eigen::MatrixXd h(static_cast<Eigen::Index>(d_count), k - 1);
  for (std::size_t d = 0; d < d_count; ++d)
    h.row(static_cast<Eigen::Index>(d)) = posteriors[d].eta_hat.transpose();

  const Eigen::MatrixXd xtx =
      design.X.transpose() * design.X +
      config.ridge_lambda * Eigen::MatrixXd::Identity(design.X.cols(), design.X.cols());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success)
    throw InternalError("mstep: ridge-regularized normal equations failed");
  model.gamma = ldlt.solve(design.X.transpose() * h);

  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(k - 1, k - 1);
  for (std::size_t d = 0; d < d_count; ++d) {
    const Eigen::Index row = static_cast<Eigen::Index>(d);
    const Eigen::VectorXd resid =
        posteriors[d].eta_hat - model.gamma.transpose() * design.X.row(row).transpose();
    sigma += posteriors[d].nu;
    sigma.noalias() += resid * resid.transpose();
  }
  sigma /= static_cast<double>(d_count);
  model.sigma = 0.5 * (sigma + sigma.transpose());
  return model;
}

FittedStm fit(const DocumentTermMatrix& dtm, const PrevalenceDesign& design,
              const StmConfig& config) {
  const std::size_t d_count = dtm.n_docs();
  if (d_count == 0) throw EmptyCorpusError("fit: DTM is empty");
  if (design.n_docs() != d_count)
    throw AlignmentError("fit: design rows do not match DTM rows");
  for (std::size_t d = 0; d < d_count; ++d)
    if (dtm.doc_token_totals[d] < 1)
      throw EmptyDocumentError("fit: document row " + std::to_string(d) +
                               " has no tokens");

  FittedStm fitted;
  fitted.config = config;
  StmModel model = init_model(dtm, design, config);
  const int k = config.k;

  std::vector<Eigen::VectorXd> warm(d_count, Eigen::VectorXd::Zero(k - 1));
  fitted.posteriors.resize(d_count);
  Eigen::MatrixXd beta_counts(k, static_cast<Eigen::Index>(dtm.n_terms()));

  double prev_bound = std::numeric_limits<double>::quiet_NaN();
  for (int iter = 1; iter <= config.max_em_iters; ++iter) {
    // Newton solves run in parallel; each document writes only its own slot.
    parallel_chunks(d_count, config.threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t d = lo; d < hi; ++d) {
        fitted.posteriors[d] =
            estep_doc(model, dtm.rows[d],
                      design.X.row(static_cast<Eigen::Index>(d)).transpose(),
                      warm[d], config);
        warm[d] = fitted.posteriors[d].eta_hat;
      }
    });

    // Sequential reduction in document order keeps results bit-identical
    // for any thread count.
    double bound_sum = 0.0;
    beta_counts.setZero();
    for (std::size_t d = 0; d < d_count; ++d) {
      bound_sum += fitted.posteriors[d].bound;
      accumulate_responsibilities(model, dtm.rows[d], fitted.posteriors[d].theta,
                                  beta_counts);
    }
    fitted.elbo_trace.push_back(bound_sum);

    if (iter >= 2) {
      const double denom = std::max(std::abs(prev_bound), 1e-300);
      if (std::abs(bound_sum - prev_bound) / denom < config.em_rel_tol) {
        fitted.converged = true;
        break;
      }
    }
    prev_bound = bound_sum;
    if (iter == config.max_em_iters) break;
    model = mstep(dtm, design, fitted.posteriors, beta_counts, config);
  }

  fitted.model = std::move(model);
  return fitted;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& mat) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < mat.cols(); ++c) row.push_back(mat(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows, Eigen::Index expect_cols) {
  const Eigen::Index r_count = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd mat(r_count, expect_cols);
  for (Eigen::Index r = 0; r < r_count; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != expect_cols)
      throw ParseError("model json: ragged matrix row");
    for (Eigen::Index c = 0; c < expect_cols; ++c)
      mat(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return mat;
}

nlohmann::json config_to_json(const StmConfig& config) {
  return {{"k", config.k},
          {"seed", config.seed},
          {"max_em_iters", config.max_em_iters},
          {"em_rel_tol", config.em_rel_tol},
          {"newton_max_iters", config.newton_max_iters},
          {"newton_grad_tol", config.newton_grad_tol},
          {"ridge_lambda", config.ridge_lambda},
          {"beta_pseudocount", config.beta_pseudocount},
          {"threads", config.threads}};
}

StmConfig config_from_json(const nlohmann::json& obj) {
  StmConfig config;
  config.k = obj.at("k").get<int>();
  config.seed = obj.at("seed").get<std::uint64_t>();
  config.max_em_iters = obj.at("max_em_iters").get<int>();
  config.em_rel_tol = obj.at("em_rel_tol").get<double>();
  config.newton_max_iters = obj.at("newton_max_iters").get<int>();
  config.newton_grad_tol = obj.at("newton_grad_tol").get<double>();
  config.ridge_lambda = obj.at("ridge_lambda").get<double>();
  config.beta_pseudocount = obj.at("beta_pseudocount").get<double>();
  config.threads = obj.at("threads").get<int>();
  return config;
}

char hex_digit(unsigned value) {
  return value < 10 ? static_cast<char>('0' + value)
                    : static_cast<char>('a' + value - 10);
}

std::string hash_to_hex(std::uint64_t hash) {
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i) {
    hex[static_cast<std::size_t>(i)] = hex_digit(hash & 0xf);
    hash >>= 4;
  }
  return hex;
}

std::uint64_t hex_to_hash(const std::string& hex) {
  std::uint64_t value = 0;
  for (char c : hex) {
    value <<= 4;
    if (c >= '0' && c <= '9') value |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') value |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw ParseError("model json: bad vocab hash");
  }
  return value;
}

}  // namespace

void save_model_json(const FittedStm& fitted, std::uint64_t vocab_hash,
                     const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "stmaudit-model";
  doc["version"] = 1;
  doc["config"] = config_to_json(fitted.config);
  doc["vocab_hash"] = hash_to_hex(vocab_hash);
  doc["k"] = fitted.model.n_topics();
  doc["v"] = fitted.model.n_terms();
  doc["p"] = kDesignCols;
  doc["beta"] = matrix_to_json(fitted.model.beta);
  doc["gamma"] = matrix_to_json(fitted.model.gamma);
  doc["sigma"] = matrix_to_json(fitted.model.sigma);
  doc["elbo_trace"] = fitted.elbo_trace;
  doc["converged"] = fitted.converged;
  write_file(path, doc.dump(2) + "\n");
}

LoadedModel load_model_json(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model json: ") + e.what());
  }
  if (doc.value("format", "") != "stmaudit-model")
    throw ParseError("model json: unknown format tag");
  if (doc.value("version", 0) != 1)
    throw ParseError("model json: unsupported version");

  LoadedModel loaded;
  loaded.config = config_from_json(doc.at("config"));
  loaded.vocab_hash = hex_to_hash(doc.at("vocab_hash").get<std::string>());
  const int k = doc.at("k").get<int>();
  const Eigen::Index v = doc.at("v").get<Eigen::Index>();
  loaded.model.beta = matrix_from_json(doc.at("beta"), v);
  loaded.model.gamma = matrix_from_json(doc.at("gamma"), k - 1);
  loaded.model.sigma = matrix_from_json(doc.at("sigma"), k - 1);
  if (loaded.model.beta.rows() != k)
    throw ParseError("model json: beta row count does not match k");
  loaded.elbo_trace = doc.at("elbo_trace").get<std::vector<double>>();
  loaded.converged = doc.at("converged").get<bool>();
  return loaded;
}

void write_theta_csv(const FittedStm& fitted, const std::vector<std::string>& doc_ids,
                     const std::filesystem::path& path) {
  if (doc_ids.size() != fitted.posteriors.size())
    throw AlignmentError("write_theta_csv: doc ids do not match posteriors");
  const int k = fitted.model.n_topics();
  std::ostringstream out;
  out << "doc_id";
  for (int topic = 1; topic <= k; ++topic) out << ",theta_" << topic;
  out << '\n';
  for (std::size_t d = 0; d < doc_ids.size(); ++d) {
    out << csv_escape(doc_ids[d]);
    for (int topic = 0; topic < k; ++topic)
      out << ',' << format_double(fitted.posteriors[d].theta(topic));
    out << '\n';
  }
  write_file(path, out.str());
}

}  // namespace stmaudit
