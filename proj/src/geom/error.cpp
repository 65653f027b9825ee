#include "mural/error.hpp"

namespace mural {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::degenerate_geometry: return "DegenerateGeometry";
    case ErrorCode::not_adjacent: return "NotAdjacent";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::unsupported_feature: return "UnsupportedFeature";
    case ErrorCode::open_contour: return "OpenContour";
    case ErrorCode::empty_plan: return "EmptyPlan";
    case ErrorCode::insufficient_data: return "InsufficientData";
    case ErrorCode::no_wall: return "NoWall";
    case ErrorCode::no_pattern: return "NoPattern";
    case ErrorCode::degenerate_config: return "DegenerateConfig";
    case ErrorCode::stale_sensor: return "StaleSensor";
    case ErrorCode::no_intersection: return "NoIntersection";
    case ErrorCode::infeasible_profile: return "InfeasibleProfile";
    case ErrorCode::tampered: return "Tampered";
    case ErrorCode::replayed: return "Replayed";
    case ErrorCode::malformed_frame: return "MalformedFrame";
    case ErrorCode::bad_selection: return "BadSelection";
    case ErrorCode::bad_geometry: return "BadGeometry";
    case ErrorCode::plan_changed: return "PlanChanged";
    case ErrorCode::mission_busy: return "MissionBusy";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

}  // namespace mural
