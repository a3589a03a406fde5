#include "bespoke/error.hpp"

namespace bespoke {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::parse: return "parse-error";
    case Errc::unsupported_format: return "unsupported-format";
    case Errc::out_of_range: return "out-of-range";
    case Errc::io: return "io-error";
    case Errc::validation: return "validation-error";
    case Errc::configuration: return "configuration-error";
    case Errc::dependency: return "dependency-error";
    case Errc::incompatible_checkpoint: return "incompatible-checkpoint";
    case Errc::selector: return "selector-error";
    case Errc::degenerate_silence: return "degenerate-silence";
    case Errc::empty_score: return "empty-score";
    case Errc::too_short: return "too-short";
    case Errc::numeric: return "numeric-error";
    case Errc::runtime: return "runtime-error";
  }
  return "unknown";
}

}  // namespace bespoke
