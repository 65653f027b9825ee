#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mural {

enum class ErrorCode {
  invalid_argument,
  degenerate_geometry,
  not_adjacent,
  parse_error,
  unsupported_feature,
  open_contour,
  empty_plan,
  insufficient_data,
  no_wall,
  no_pattern,
  degenerate_config,
  stale_sensor,
  no_intersection,
  infeasible_profile,
  tampered,
  replayed,
  malformed_frame,
  bad_selection,
  bad_geometry,
  plan_changed,
  mission_busy,
  io_error,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. The code identifies the failure
/// class named in the interface docs; the message carries context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mural
