#include "stmaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "stmaudit/errors.hpp"
#include "stmaudit/io_util.hpp"

namespace stmaudit {

std::string label_name(Label label) {
  switch (label) {
    case Label::abusive: return "abusive";
    case Label::hateful: return "hateful";
    case Label::spam: return "spam";
    case Label::normal: return "normal";
    case Label::positive: return "positive";
  }
  throw InternalError("label_name: bad enum value");
}

Label parse_label(std::string_view name) {
  if (name == "abusive") return Label::abusive;
  if (name == "hateful") return Label::hateful;
  if (name == "spam") return Label::spam;
  if (name == "normal") return Label::normal;
  if (name == "positive") return Label::positive;
  throw InvalidLabelError("unknown label: '" + std::string(name) + "'");
}

namespace {

Label parse_raw4_label(std::string_view name, std::size_t line_no) {
  Label label = [&] {
    try {
      return parse_label(name);
    } catch (const InvalidLabelError&) {
      throw InvalidLabelError("line " + std::to_string(line_no) +
                              ": unknown label '" + std::string(name) + "'");
    }
  }();
  if (label == Label::positive)
    throw InvalidLabelError("line " + std::to_string(line_no) +
                            ": label 'positive' is not a raw annotation");
  return label;
}

std::string json_field_as_string(const nlohmann::json& obj, const char* key,
                                 std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError("line " + std::to_string(line_no) + ": missing field '" +
                     key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer())
    return std::to_string(it->get<std::int64_t>());
  throw ParseError("line " + std::to_string(line_no) + ": field '" + key +
                   "' must be a string");
}

LabeledCorpus load_jsonl(const std::string& content) {
  LabeledCorpus corpus;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!obj.is_object())
      throw ParseError("line " + std::to_string(i + 1) + ": expected an object");
    Document doc;
    doc.id = json_field_as_string(obj, "id", i + 1);
    doc.text = json_field_as_string(obj, "text", i + 1);
    doc.label = parse_raw4_label(json_field_as_string(obj, "label", i + 1), i + 1);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

LabeledCorpus load_csv(const std::string& content) {
  const auto records = parse_csv(content);
  if (records.empty()) return {};
  const auto& header = records[0];
  int id_col = -1, text_col = -1, label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "id") id_col = static_cast<int>(c);
    else if (header[c] == "text") text_col = static_cast<int>(c);
    else if (header[c] == "label") label_col = static_cast<int>(c);
  }
  if (id_col < 0 || text_col < 0 || label_col < 0)
    throw ParseError("csv header must contain id,text,label columns");

  LabeledCorpus corpus;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    const std::size_t needed = static_cast<std::size_t>(
        std::max({id_col, text_col, label_col})) + 1;
    if (rec.size() < needed)
      throw ParseError("line " + std::to_string(r + 1) +
                       ": record has too few fields");
    Document doc;
    doc.id = rec[static_cast<std::size_t>(id_col)];
    doc.text = rec[static_cast<std::size_t>(text_col)];
    doc.label = parse_raw4_label(rec[static_cast<std::size_t>(label_col)], r + 1);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace

LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  if (!std::filesystem::exists(path))
    throw IoError("corpus file does not exist: " + path.string());
  const std::string content = read_file(path);
  LabeledCorpus corpus = format == CorpusFormat::jsonl ? load_jsonl(content)
                                                       : load_csv(content);
  if (corpus.documents.empty())
    throw EmptyCorpusError("corpus has no records: " + path.string());

  std::unordered_set<std::string> seen;
  seen.reserve(corpus.documents.size());
  for (const Document& doc : corpus.documents) {
    if (!seen.insert(doc.id).second)
      throw ParseError("duplicate document id: '" + doc.id + "'");
  }
  corpus.scheme = LabelScheme::raw4;
  return corpus;
}

LabeledCorpus collapse_labels(const LabeledCorpus& corpus) {
  if (corpus.scheme != LabelScheme::raw4)
    throw InvalidSchemeError("collapse_labels requires a raw4 corpus");
  LabeledCorpus out;
  out.scheme = LabelScheme::binary;
  for (const Document& doc : corpus.documents) {
    if (doc.label == Label::spam) continue;
    Document copy = doc;
    if (copy.label == Label::abusive || copy.label == Label::hateful)
      copy.label = Label::positive;
    out.documents.push_back(std::move(copy));
  }
  if (out.documents.empty())
    throw EmptyCorpusError("corpus is empty after dropping spam");
  return out;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  StopwordSet set;
  for (std::string line : split_lines(content)) {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    std::string word = line.substr(start);
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) {
      return static_cast<char>(std::tolower(c));
    });
    set.insert(std::move(word));
  }
  return set;
}

namespace {

bool is_mention(std::string_view chunk) {
  if (chunk.size() < 2 || chunk[0] != '@') return false;
  const unsigned char c = static_cast<unsigned char>(chunk[1]);
  return std::isalnum(c) != 0 || c == '_';
}

bool is_url(std::string_view chunk) {
  return chunk.starts_with("http://") || chunk.starts_with("https://") ||
         chunk.starts_with("www.");
}

// ASCII alphanumerics only; everything else (punctuation, symbols, emoji
// bytes) is stripped.
std::string strip_and_lower(std::string_view chunk) {
  std::string out;
  out.reserve(chunk.size());
  for (unsigned char c : chunk) {
    if (c < 0x80 && std::isalnum(c))
      out += static_cast<char>(std::tolower(c));
  }
  return out;
}

bool all_digits(std::string_view token) {
  for (unsigned char c : token)
    if (!std::isdigit(c)) return false;
  return !token.empty();
}

}  // namespace

TokenList normalize_text(std::string_view text, const StopwordSet& stopwords) {
  TokenList tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    if (i == start) continue;
    const std::string_view chunk = text.substr(start, i - start);

    if (is_mention(chunk)) {
      tokens.emplace_back(kMentionPlaceholder);
      continue;
    }
    if (is_url(chunk)) {
      tokens.emplace_back(kUrlPlaceholder);
      continue;
    }
    std::string token = strip_and_lower(chunk);
    if (token.empty() || all_digits(token)) continue;
    if (stopwords.contains(token)) continue;
    tokens.push_back(std::move(token));
  }
  return tokens;
}

namespace {

std::string join_tokens(const TokenList& tokens) {
  std::string key;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) key += ' ';
    key += tokens[i];
  }
  return key;
}

}  // namespace

DedupResult dedup(const LabeledCorpus& corpus, const StopwordSet& stopwords) {
  DedupResult result;
  result.corpus.scheme = corpus.scheme;
  std::unordered_set<std::string> seen;
  seen.reserve(corpus.documents.size());
  for (const Document& doc : corpus.documents) {
    std::string key = join_tokens(normalize_text(doc.text, stopwords));
    if (seen.insert(std::move(key)).second) {
      result.corpus.documents.push_back(doc);
    } else {
      ++result.duplicates_removed;
    }
  }
  return result;
}

DtmBuild build_dtm(const LabeledCorpus& corpus, const StopwordSet& stopwords,
                   int min_df) {
  if (corpus.documents.empty())
    throw EmptyCorpusError("build_dtm: corpus is empty");
  std::vector<TokenList> docs;
  std::vector<std::string> doc_ids;
  docs.reserve(corpus.documents.size());
  doc_ids.reserve(corpus.documents.size());
  for (const Document& doc : corpus.documents) {
    docs.push_back(normalize_text(doc.text, stopwords));
    doc_ids.push_back(doc.id);
  }
  return build_dtm_from_tokens(docs, doc_ids, min_df);
}

DtmBuild build_dtm_from_tokens(const std::vector<TokenList>& docs,
                               const std::vector<std::string>& doc_ids,
                               int min_df) {
  if (docs.size() != doc_ids.size())
    throw AlignmentError("build_dtm: tokens and doc ids differ in length");
  if (docs.empty()) throw EmptyCorpusError("build_dtm: corpus is empty");
  if (min_df < 1) throw InternalError("build_dtm: min_df must be >= 1");

  // Document frequencies over a sorted map give a lexicographic vocabulary.
  std::map<std::string, int> doc_freq;
  for (const TokenList& tokens : docs) {
    std::unordered_set<std::string_view> uniq(tokens.begin(), tokens.end());
    for (std::string_view tok : uniq) ++doc_freq[std::string(tok)];
  }

  DtmBuild build;
  build.terms_before = doc_freq.size();
  std::unordered_map<std::string, int> term_index;
  for (const auto& [term, df] : doc_freq) {
    if (df >= min_df) {
      term_index.emplace(term, static_cast<int>(build.dtm.vocabulary.size()));
      build.dtm.vocabulary.push_back(term);
    }
  }
  build.terms_after = build.dtm.vocabulary.size();

  for (std::size_t d = 0; d < docs.size(); ++d) {
    build.tokens_before += static_cast<std::int64_t>(docs[d].size());
    std::map<int, int> counts;
    for (const std::string& tok : docs[d]) {
      auto it = term_index.find(tok);
      if (it != term_index.end()) ++counts[it->second];
    }
    if (counts.empty()) {
      build.dropped_doc_ids.push_back(doc_ids[d]);
      continue;
    }
    std::vector<std::pair<int, int>> row(counts.begin(), counts.end());
    int total = 0;
    for (const auto& [term, count] : row) total += count;
    build.tokens_after += total;
    build.dtm.rows.push_back(std::move(row));
    build.dtm.doc_ids.push_back(doc_ids[d]);
    build.dtm.doc_token_totals.push_back(total);
  }
  if (build.dtm.rows.empty())
    throw EmptyCorpusError("build_dtm: every document lost all tokens");
  return build;
}

void write_dtm(const DocumentTermMatrix& dtm, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream mtx;
  std::size_t nnz = 0;
  for (const auto& row : dtm.rows) nnz += row.size();
  mtx << "%%MatrixMarket matrix coordinate integer general\n";
  mtx << dtm.n_docs() << ' ' << dtm.n_terms() << ' ' << nnz << '\n';
  for (std::size_t d = 0; d < dtm.rows.size(); ++d)
    for (const auto& [term, count] : dtm.rows[d])
      mtx << (d + 1) << ' ' << (term + 1) << ' ' << count << '\n';
  write_file(dir / "dtm.mtx", mtx.str());

  std::string vocab;
  for (const std::string& term : dtm.vocabulary) {
    vocab += term;
    vocab += '\n';
  }
  write_file(dir / "vocabulary.txt", vocab);

  std::string ids;
  for (const std::string& id : dtm.doc_ids) {
    ids += id;
    ids += '\n';
  }
  write_file(dir / "doc_ids.txt", ids);
}

DocumentTermMatrix read_dtm(const std::filesystem::path& dir) {
  DocumentTermMatrix dtm;
  dtm.vocabulary = split_lines(read_file(dir / "vocabulary.txt"));
  dtm.doc_ids = split_lines(read_file(dir / "doc_ids.txt"));

  std::istringstream mtx(read_file(dir / "dtm.mtx"));
  std::string line;
  if (!std::getline(mtx, line) || !line.starts_with("%%MatrixMarket"))
    throw ParseError("dtm.mtx: missing MatrixMarket banner");
  std::size_t n_docs = 0, n_terms = 0, nnz = 0;
  mtx >> n_docs >> n_terms >> nnz;
  if (!mtx) throw ParseError("dtm.mtx: bad size line");
  if (n_docs != dtm.doc_ids.size() || n_terms != dtm.vocabulary.size())
    throw AlignmentError("dtm.mtx dimensions do not match sidecar files");

  dtm.rows.assign(n_docs, {});
  for (std::size_t i = 0; i < nnz; ++i) {
    std::size_t d = 0, v = 0;
    int c = 0;
    mtx >> d >> v >> c;
    if (!mtx) throw ParseError("dtm.mtx: bad triplet at entry " + std::to_string(i));
    if (d < 1 || d > n_docs || v < 1 || v > n_terms || c < 0)
      throw ParseError("dtm.mtx: triplet out of range at entry " + std::to_string(i));
    dtm.rows[d - 1].emplace_back(static_cast<int>(v - 1), c);
  }
  dtm.doc_token_totals.resize(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    auto& row = dtm.rows[d];
    std::sort(row.begin(), row.end());
    int total = 0;
    for (const auto& [term, count] : row) total += count;
    dtm.doc_token_totals[d] = total;
    if (total < 1)
      throw ParseError("dtm.mtx: document row " + std::to_string(d + 1) +
                       " has no tokens");
  }
  return dtm;
}

std::uint64_t vocabulary_hash(const std::vector<std::string>& vocabulary) {
  std::string joined;
  for (const std::string& term : vocabulary) {
    joined += term;
    joined += '\n';
  }
  return fnv1a64_hash(joined);
}

}  // namespace stmaudit
