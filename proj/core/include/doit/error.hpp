#pragma once

#include <stdexcept>
#include <string>

namespace doit {

enum class Errc {
  invalid_argument,
  degenerate_kernel,
  degenerate_transition,
  schedule_inconsistency,
  non_monotone_schedule,
  unsupported,
  evaluation,
  reward_bound,
  low_acceptance,
  config,
  io,
};

const char* errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so callers
/// (and the CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace doit
