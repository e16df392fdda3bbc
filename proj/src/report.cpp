#include "stmaudit/report.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "stmaudit/diagnostics.hpp"
#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"

namespace stmaudit {

std::vector<std::string> top_words(const StmModel& model,
                                   const std::vector<std::string>& vocabulary,
                                   int topic, int m, TopWordRanking ranking) {
  if (topic < 0 || topic >= model.n_topics())
    throw std::out_of_range("top_words: topic index out of range: " +
                            std::to_string(topic));
  if (static_cast<Eigen::Index>(vocabulary.size()) != model.beta.cols())
    throw AlignmentError("top_words: vocabulary does not match beta columns");

  Eigen::VectorXd weights;
  if (ranking == TopWordRanking::probability) {
    weights = model.beta.row(topic).transpose();
  } else {
    weights = frex_scores(model.beta).row(topic).transpose();
  }
  std::vector<std::string> terms;
  for (int term : top_terms_by_weight(weights, m))
    terms.push_back(vocabulary[static_cast<std::size_t>(term)]);
  return terms;
}

std::vector<TopDocument> top_documents(const FittedStm& fitted,
                                       const std::vector<std::string>& doc_ids,
                                       int topic, int n) {
  if (topic < 0 || topic >= fitted.model.n_topics())
    throw std::out_of_range("top_documents: topic index out of range: " +
                            std::to_string(topic));
  if (n < 1) throw InternalError("top_documents: n must be >= 1");
  if (doc_ids.size() != fitted.posteriors.size())
    throw AlignmentError("top_documents: doc ids do not match posteriors");

  std::vector<std::size_t> order(doc_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitted.posteriors[a].theta(topic) > fitted.posteriors[b].theta(topic);
  });
  order.resize(std::min<std::size_t>(static_cast<std::size_t>(n), order.size()));

  std::vector<TopDocument> docs;
  for (std::size_t row : order)
    docs.push_back({doc_ids[row], fitted.posteriors[row].theta(topic), row});
  return docs;
}

void write_topic_report(const FittedStm& fitted,
                        const std::vector<std::string>& vocabulary,
                        const std::vector<std::string>& doc_ids,
                        const std::vector<std::pair<std::string, std::string>>& texts,
                        int top_terms, int top_docs,
                        const std::filesystem::path& path) {
  std::unordered_map<std::string, const std::string*> text_by_id;
  for (const auto& [id, text] : texts) text_by_id.emplace(id, &text);

  nlohmann::json topics = nlohmann::json::array();
  for (int topic = 0; topic < fitted.model.n_topics(); ++topic) {
    nlohmann::json entry;
    entry["topic"] = topic + 1;
    entry["top_words_probability"] = top_words(fitted.model, vocabulary, topic,
                                               top_terms, TopWordRanking::probability);
    entry["top_words_frex"] =
        top_words(fitted.model, vocabulary, topic, top_terms, TopWordRanking::frex);
    nlohmann::json docs = nlohmann::json::array();
    for (const TopDocument& doc : top_documents(fitted, doc_ids, topic, top_docs)) {
      nlohmann::json item;
      item["doc_id"] = doc.doc_id;
      item["theta"] = doc.theta;
      const auto it = text_by_id.find(doc.doc_id);
      if (it != text_by_id.end()) item["text"] = *it->second;
      docs.push_back(std::move(item));
    }
    entry["top_documents"] = std::move(docs);
    topics.push_back(std::move(entry));
  }
  nlohmann::json report;
  report["topics"] = std::move(topics);
  write_file(path, report.dump(2) + "\n");
}

}  // namespace stmaudit
