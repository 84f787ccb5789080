#include "doit/error.hpp"

namespace doit {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::degenerate_kernel: return "degenerate_kernel";
    case Errc::degenerate_transition: return "degenerate_transition";
    case Errc::schedule_inconsistency: return "schedule_inconsistency";
    case Errc::non_monotone_schedule: return "non_monotone_schedule";
    case Errc::unsupported: return "unsupported";
    case Errc::evaluation: return "evaluation";
    case Errc::reward_bound: return "reward_bound";
    case Errc::low_acceptance: return "low_acceptance";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

}  // namespace doit
