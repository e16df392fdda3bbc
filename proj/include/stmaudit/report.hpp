#ifndef STMAUDIT_REPORT_HPP_
#define STMAUDIT_REPORT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "stmaudit/stm.hpp"

namespace stmaudit {

enum class TopWordRanking { probability, frex };

/// Top-m vocabulary terms for one topic (0-based), ranked by beta or FREX;
/// ties break toward lexicographically earlier terms.
std::vector<std::string> top_words(const StmModel& model,
                                   const std::vector<std::string>& vocabulary,
                                   int topic, int m, TopWordRanking ranking);

struct TopDocument {
  std::string doc_id;
  double theta = 0.0;
  std::size_t row = 0;
};

/// The n documents with the largest proportion of the topic, descending;
/// ties keep document order. n larger than the corpus returns everything.
std::vector<TopDocument> top_documents(const FittedStm& fitted,
                                       const std::vector<std::string>& doc_ids,
                                       int topic, int n);

/// JSON report with per-topic top words (both rankings) and top documents;
/// texts are included when the caller supplies them keyed by doc id.
void write_topic_report(const FittedStm& fitted,
                        const std::vector<std::string>& vocabulary,
                        const std::vector<std::string>& doc_ids,
                        const std::vector<std::pair<std::string, std::string>>& texts,
                        int top_terms, int top_docs,
                        const std::filesystem::path& path);

}  // namespace stmaudit

#endif  // STMAUDIT_REPORT_HPP_
