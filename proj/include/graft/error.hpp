#pragma once

#include <stdexcept>
#include <utility>
#include <string>

namespace graft {

// Every error carries a short machine-readable category. The CLI prints it
// as the first token of its one-line failure message.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error("domain_error", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

struct KindError : Error {
  explicit KindError(const std::string& what) : Error("kind_error", what) {}
};

struct GraftError : Error {
  explicit GraftError(const std::string& what) : Error("graft_error", what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation_error", what) {}
};

// Raised when a training step produces a non-finite loss.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, int worker, int epoch, long iteration, double loss)
      : Error("divergence_error", what), worker_id(worker), epoch(epoch), iteration(iteration),
        loss(loss) {}

  int worker_id;
  int epoch;
  long iteration;
  double loss;
};

// Snapshot/config file parse failures. Sub-categories are distinct so callers
// can tell a corrupt magic from a truncated payload.
struct ParseError : Error {
  ParseError(const std::string& kind, const std::string& what) : Error("parse_error." + kind, what) {}
};

struct BadMagicError : ParseError {
  explicit BadMagicError(const std::string& what) : ParseError("bad_magic", what) {}
};

struct TruncatedError : ParseError {
  explicit TruncatedError(const std::string& what) : ParseError("truncated", what) {}
};

struct ManifestError : ParseError {
  explicit ManifestError(const std::string& what) : ParseError("manifest", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

}  // namespace graft
