#include "stmaudit/dialect.hpp"

#include <cmath>
#include <sstream>

#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"

namespace stmaudit {

const std::array<std::string, kDialectClasses> kDialectClassNames = {
    "sae", "aae", "hispanic", "asian"};

namespace {

constexpr int kAaeIndex = 1;
constexpr int kMaxEmIters = 100;
constexpr double kPiTol = 1e-9;

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

DialectModel load_dialect_model(const std::filesystem::path& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty()) throw ParseError("dialect model file is empty: " + path.string());

  const auto header = split_tabs(lines[0]);
  if (header.size() != kDialectClasses + 1)
    throw ParseError("dialect model header must have 5 tab-separated columns");
  if (header[0] != "token")
    throw ParseError("dialect model header must start with 'token'");

  // Map each file column to its canonical class slot.
  std::array<int, kDialectClasses> col_to_class{};
  std::array<bool, kDialectClasses> seen{};
  for (int c = 0; c < kDialectClasses; ++c) {
    int slot = -1;
    for (int s = 0; s < kDialectClasses; ++s)
      if (header[static_cast<std::size_t>(c) + 1] == kDialectClassNames[s]) slot = s;
    if (slot < 0)
      throw InvalidModelError("unknown dialect class name: '" +
                              header[static_cast<std::size_t>(c) + 1] + "'");
    if (seen[static_cast<std::size_t>(slot)])
      throw InvalidModelError("duplicate dialect class name: '" +
                              header[static_cast<std::size_t>(c) + 1] + "'");
    seen[static_cast<std::size_t>(slot)] = true;
    col_to_class[static_cast<std::size_t>(c)] = slot;
  }

  DialectModel model;
  std::vector<std::array<double, kDialectClasses>> weights;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_tabs(lines[i]);
    if (fields.size() != kDialectClasses + 1)
      throw ParseError("dialect model line " + std::to_string(i + 1) +
                       ": expected 5 columns, got " + std::to_string(fields.size()));
    const std::string& term = fields[0];
    if (model.term_index.contains(term))
      throw InvalidModelError("duplicate term in dialect model: '" + term + "'");
    std::array<double, kDialectClasses> row{};
    for (int c = 0; c < kDialectClasses; ++c) {
      double w = 0.0;
      try {
        std::size_t pos = 0;
        w = std::stod(fields[static_cast<std::size_t>(c) + 1], &pos);
        if (pos != fields[static_cast<std::size_t>(c) + 1].size())
          throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError("dialect model line " + std::to_string(i + 1) +
                         ": non-numeric weight");
      }
      if (!std::isfinite(w))
        throw InvalidModelError("dialect model line " + std::to_string(i + 1) +
                                ": weight is not finite");
      if (w < 0.0)
        throw InvalidModelError("dialect model line " + std::to_string(i + 1) +
                                ": negative weight");
      row[static_cast<std::size_t>(col_to_class[static_cast<std::size_t>(c)])] = w;
    }
    model.term_index.emplace(term, static_cast<int>(model.terms.size()));
    model.terms.push_back(term);
    weights.push_back(row);
  }
  if (weights.empty())
    throw ParseError("dialect model has no terms: " + path.string());

  model.cond.resize(static_cast<Eigen::Index>(weights.size()), kDialectClasses);
  for (std::size_t t = 0; t < weights.size(); ++t)
    for (int c = 0; c < kDialectClasses; ++c)
      model.cond(static_cast<Eigen::Index>(t), c) = weights[t][static_cast<std::size_t>(c)];

  for (int c = 0; c < kDialectClasses; ++c) {
    const double sum = model.cond.col(c).sum();
    if (!(sum > 0.0))
      throw InvalidModelError("dialect class '" + kDialectClassNames[static_cast<std::size_t>(c)] +
                              "' has all-zero weights");
    model.cond.col(c) /= sum;
  }
  model.prior.setConstant(1.0 / kDialectClasses);
  return model;
}

std::optional<DialectPosterior> score_document(const DialectModel& model,
                                               const std::string& doc_id,
                                               const TokenList& tokens,
                                               std::vector<double>* loglik_trace) {
  // Collect in-vocabulary token rows with multiplicity; all-zero rows are
  // out-of-vocabulary (a zero row would make responsibilities 0/0).
  std::vector<int> term_rows;
  std::vector<double> counts;
  {
    std::unordered_map<int, double> multiplicity;
    for (const std::string& tok : tokens) {
      auto it = model.term_index.find(tok);
      if (it == model.term_index.end()) continue;
      if (model.cond.row(it->second).sum() <= 0.0) continue;
      multiplicity[it->second] += 1.0;
    }
    for (const auto& [row, count] : multiplicity) {
      term_rows.push_back(row);
      counts.push_back(count);
    }
  }
  if (term_rows.empty()) return std::nullopt;

  double n_tokens = 0.0;
  for (double c : counts) n_tokens += c;

  Eigen::Vector4d pi = model.prior;
  double prev_loglik = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxEmIters; ++iter) {
    Eigen::Vector4d next = Eigen::Vector4d::Zero();
    double loglik = 0.0;
    for (std::size_t i = 0; i < term_rows.size(); ++i) {
      const Eigen::Vector4d lik =
          model.cond.row(term_rows[i]).transpose().cwiseProduct(pi);
      const double denom = lik.sum();
      loglik += counts[i] * std::log(denom);
      next += (counts[i] / denom) * lik;
    }
    next /= n_tokens;

    if (loglik_trace) loglik_trace->push_back(loglik);
    if (loglik + 1e-12 * std::abs(loglik) < prev_loglik)
      throw InternalError("dialect EM: log-likelihood decreased");
    prev_loglik = loglik;

    const double delta = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (delta < kPiTol) break;
  }

  DialectPosterior post;
  post.doc_id = doc_id;
  post.pi = pi / pi.sum();
  post.p_aae = post.pi[kAaeIndex];
  post.n_scored_tokens = static_cast<int>(n_tokens);
  return post;
}

ScoreCorpusResult score_corpus(const DialectModel& model,
                               const std::vector<TokenList>& docs,
                               const std::vector<std::string>& doc_ids) {
  if (docs.size() != doc_ids.size())
    throw AlignmentError("score_corpus: tokens and doc ids differ in length");
  ScoreCorpusResult result;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    auto post = score_document(model, doc_ids[d], docs[d]);
    if (post)
      result.posteriors.push_back(std::move(*post));
    else
      result.dropped_doc_ids.push_back(doc_ids[d]);
  }
  if (result.posteriors.empty())
    throw EmptyCorpusError("score_corpus: no document could be scored");
  return result;
}

void write_dialect_scores(const std::vector<DialectPosterior>& posteriors,
                          const std::filesystem::path& path) {
  std::ostringstream out;
  out << "doc_id,p_sae,p_aae,p_hispanic,p_asian,n_scored_tokens\n";
  for (const DialectPosterior& post : posteriors) {
    out << csv_escape(post.doc_id);
    for (int c = 0; c < kDialectClasses; ++c) out << ',' << format_double(post.pi[c]);
    out << ',' << post.n_scored_tokens << '\n';
  }
  write_file(path, out.str());
}

std::vector<DialectPosterior> read_dialect_scores(const std::filesystem::path& path) {
  const auto records = parse_csv(read_file(path));
  if (records.empty()) throw ParseError("dialect scores file is empty: " + path.string());
  const std::vector<std::string> expected = {"doc_id",     "p_sae", "p_aae",
                                             "p_hispanic", "p_asian",
                                             "n_scored_tokens"};
  if (records[0] != expected)
    throw ParseError("dialect scores file has an unexpected header");
  std::vector<DialectPosterior> posteriors;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != expected.size())
      throw ParseError("dialect scores line " + std::to_string(r + 1) +
                       ": wrong field count");
    DialectPosterior post;
    post.doc_id = rec[0];
    for (int c = 0; c < kDialectClasses; ++c)
      post.pi[c] = std::stod(rec[static_cast<std::size_t>(c) + 1]);
    post.p_aae = post.pi[1];
    post.n_scored_tokens = std::stoi(rec[5]);
    posteriors.push_back(std::move(post));
  }
  return posteriors;
}

}  // namespace stmaudit
