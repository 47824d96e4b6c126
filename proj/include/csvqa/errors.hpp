#pragma once

#include <stdexcept>
#include <string>

namespace csvqa {

// Error taxonomy shared across the library. The CLI maps `invalid_argument`
// and `config` to exit code 1, everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    invalid_dimensions,
    invalid_argument,
    rank_deficient,
    divergence,
    ill_conditioned,
    generation_failure,
    malformed_question,
    config,
    incompatible_checkpoint,
    io,
  };

  Error(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

  bool is_validation() const {
    return kind_ == Kind::invalid_dimensions || kind_ == Kind::invalid_argument ||
           kind_ == Kind::config || kind_ == Kind::malformed_question;
  }

 private:
  Kind kind_;
};

[[noreturn]] inline void throw_error(Error::Kind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, Error::Kind kind, const std::string& message) {
  if (!cond) throw Error(kind, message);
}

}  // namespace csvqa
