#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace funcox {

// Every failure the library reports carries one of these codes.
enum class errc {
  // ingestion
  empty_file,
  ragged_rows,
  non_numeric_cell,
  missing_cell,
  value_out_of_domain,
  insufficient_days,
  // basis / design
  grid_outside_domain,
  too_few_knots,
  order_too_high,
  grid_mismatch,
  value_outside_domain,
  // fitting
  no_events,
  divergence,
  singular_hessian,
  validation_failed,
  // inference
  unknown_term,
  not_psd_after_clip,
  zero_se,
  // simulation
  degenerate_data,
  too_many_failures,
  // plumbing
  invalid_argument,
  config,
  io_failure,
};

enum class error_category { validation, numerical, io };

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::empty_file: return "EmptyFile";
    case errc::ragged_rows: return "RaggedRows";
    case errc::non_numeric_cell: return "NonNumericCell";
    case errc::missing_cell: return "MissingCell";
    case errc::value_out_of_domain: return "ValueOutOfDomain";
    case errc::insufficient_days: return "InsufficientDays";
    case errc::grid_outside_domain: return "GridOutsideDomain";
    case errc::too_few_knots: return "TooFewKnots";
    case errc::order_too_high: return "OrderTooHigh";
    case errc::grid_mismatch: return "GridMismatch";
    case errc::value_outside_domain: return "ValueOutsideDomain";
    case errc::no_events: return "NoEvents";
    case errc::divergence: return "Divergence";
    case errc::singular_hessian: return "SingularHessian";
    case errc::validation_failed: return "ValidationFailed";
    case errc::unknown_term: return "UnknownTerm";
    case errc::not_psd_after_clip: return "NotPSDAfterClip";
    case errc::zero_se: return "ZeroSe";
    case errc::degenerate_data: return "DegenerateData";
    case errc::too_many_failures: return "TooManyFailures";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::config: return "ConfigError";
    case errc::io_failure: return "IoFailure";
  }
  return "Unknown";
}

constexpr error_category category_of(errc code) noexcept {
  switch (code) {
    case errc::divergence:
    case errc::singular_hessian:
    case errc::not_psd_after_clip:
    case errc::zero_se:
    case errc::degenerate_data:
    case errc::too_many_failures:
      return error_category::numerical;
    case errc::io_failure:
      return error_category::io;
    default:
      return error_category::validation;
  }
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }
  error_category category() const noexcept { return category_of(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace funcox
