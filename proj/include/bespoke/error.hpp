#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace bespoke {

enum class Errc {
  invalid_argument,
  parse,
  unsupported_format,
  out_of_range,
  io,
  validation,
  configuration,
  dependency,
  incompatible_checkpoint,
  selector,
  degenerate_silence,
  empty_score,
  too_short,
  numeric,
  runtime,
};

const char* errc_name(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so the C
// boundary can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(Errc::parse, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) {
    throw Error(Errc::invalid_argument, what);
  }
}

}  // namespace bespoke
