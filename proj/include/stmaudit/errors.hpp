#ifndef STMAUDIT_ERRORS_HPP_
#define STMAUDIT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace stmaudit {

// One exception type per contract violation so callers (and tests) can
// distinguish failure modes without parsing messages.

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyCorpusError : std::runtime_error {
  explicit EmptyCorpusError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidLabelError : std::runtime_error {
  explicit InvalidLabelError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidSchemeError : std::runtime_error {
  explicit InvalidSchemeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidModelError : std::runtime_error {
  explicit InvalidModelError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidCovariateError : std::runtime_error {
  explicit InvalidCovariateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AlignmentError : std::runtime_error {
  explicit AlignmentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyDocumentError : std::runtime_error {
  explicit EmptyDocumentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SingularDesignError : std::runtime_error {
  explicit SingularDesignError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::logic_error {
  explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace stmaudit

#endif  // STMAUDIT_ERRORS_HPP_
