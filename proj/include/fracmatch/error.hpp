#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fracmatch {

enum class ErrorCode {
  invalid_argument,
  // file formats
  io_failure,
  bad_magic,
  bad_version,
  malformed_header,
  parse_error,
  non_rectangular,
  non_finite,
  bad_pitch,
  too_small,
  // geometry / spectral
  shape_mismatch,
  strip_too_narrow,
  empty_band,
  // estimation
  degenerate_scatter,
  not_converged,
  fingerprint_mismatch,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fracmatch
