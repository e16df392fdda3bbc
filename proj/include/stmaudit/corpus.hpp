#ifndef STMAUDIT_CORPUS_HPP_
#define STMAUDIT_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace stmaudit {

enum class Label { abusive, hateful, spam, normal, positive };
enum class LabelScheme { raw4, binary };

std::string label_name(Label label);
Label parse_label(std::string_view name);

struct Document {
  std::string id;
  std::string text;
  Label label = Label::normal;
};

/// Ordered document collection; binary corpora contain only
/// {positive, normal} labels and never spam.
struct LabeledCorpus {
  std::vector<Document> documents;
  LabelScheme scheme = LabelScheme::raw4;
};

enum class CorpusFormat { jsonl, csv };

/// Loads a corpus from JSON-lines (objects with id/text/label) or CSV with an
/// id,text,label header. Input order is preserved; ids must be unique.
LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// raw4 -> binary: drops spam, maps hateful and abusive to positive.
LabeledCorpus collapse_labels(const LabeledCorpus& corpus);

using StopwordSet = std::unordered_set<std::string>;
using TokenList = std::vector<std::string>;

/// Reads one lowercased token per line; blank lines ignored.
StopwordSet load_stopwords(const std::filesystem::path& path);

constexpr const char* kMentionPlaceholder = "mentionplaceholder";
constexpr const char* kUrlPlaceholder = "urlplaceholder";

/// Tokenization pipeline, applied in this fixed order:
///   1. whole whitespace-delimited chunks that are @mentions or URLs become
///      placeholder tokens (which survive every later step),
///   2. lowercase,
///   3. drop punctuation/symbol characters and digit-only tokens,
///   4. split on whitespace,
///   5. drop stopwords.
TokenList normalize_text(std::string_view text, const StopwordSet& stopwords);

struct DedupResult {
  LabeledCorpus corpus;
  std::size_t duplicates_removed = 0;
};

/// Removes exact duplicates of the normalized text, keeping the first
/// occurrence. Idempotent; survivor order matches input order.
DedupResult dedup(const LabeledCorpus& corpus, const StopwordSet& stopwords);

struct DocumentTermMatrix {
  std::vector<std::string> vocabulary;  // unique, lexicographically sorted
  // One row per document: (term index, count) pairs sorted by term index.
  std::vector<std::vector<std::pair<int, int>>> rows;
  std::vector<std::string> doc_ids;
  std::vector<int> doc_token_totals;

  std::size_t n_docs() const { return rows.size(); }
  std::size_t n_terms() const { return vocabulary.size(); }
};

struct DtmBuild {
  DocumentTermMatrix dtm;
  std::vector<std::string> dropped_doc_ids;  // documents emptied by pruning
  std::size_t terms_before = 0;
  std::size_t terms_after = 0;
  std::int64_t tokens_before = 0;  // all tokens after normalization
  std::int64_t tokens_after = 0;   // tokens surviving vocabulary pruning

  double retained_token_fraction() const {
    return tokens_before > 0
               ? static_cast<double>(tokens_after) / static_cast<double>(tokens_before)
               : 0.0;
  }
};

/// Normalizes every document and prunes terms appearing in fewer than min_df
/// documents; documents left without tokens are dropped and reported.
DtmBuild build_dtm(const LabeledCorpus& corpus, const StopwordSet& stopwords,
                   int min_df);

/// Same pruning logic over pre-tokenized documents (the pipeline normalizes
/// once and reuses the tokens across stages).
DtmBuild build_dtm_from_tokens(const std::vector<TokenList>& docs,
                               const std::vector<std::string>& doc_ids,
                               int min_df);

/// Matrix-market coordinate triplet plus vocabulary and doc-id sidecars.
void write_dtm(const DocumentTermMatrix& dtm, const std::filesystem::path& dir);
DocumentTermMatrix read_dtm(const std::filesystem::path& dir);

std::uint64_t vocabulary_hash(const std::vector<std::string>& vocabulary);

}  // namespace stmaudit

#endif  // STMAUDIT_CORPUS_HPP_
