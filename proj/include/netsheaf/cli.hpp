#pragma once

#include <string>
#include <vector>

#include "netsheaf/dsem.hpp"

namespace netsheaf {

// One applied per-variable data transform, reported so output series can be
// mapped back: raw = exp(value + center) for the log_center kind.
struct TransformReport {
  std::string variable;
  std::string kind;
  double center = 0.0;
};

// Model files are JSON: `variables` [{name, ar_order, transform}], `paths`
// [{from, to, lag, coefficient: number | "free", sign}], `options`
// ({h, p_norm, weights}). Throws ParseError with a location on bad input.
DsemSpec parse_model_text(const std::string& text, const std::string& origin = "model");
DsemSpec ingest_model(const std::string& path);

// Data files are CSV with a header row, first column `time`, one column per
// variable; an empty cell marks a missing value. Unknown columns are errors;
// absent variables are treated as entirely missing.
TimeseriesTable parse_csv_text(const std::string& text, const DsemSpec& spec,
                               const std::string& origin = "data");

// Applies declared transforms in place: log, then centering over the observed
// entries of each column. Throws NonPositiveForLog.
std::vector<TransformReport> apply_transforms(const DsemSpec& spec, TimeseriesTable& table);

TimeseriesTable ingest_data(const std::string& path, const DsemSpec& spec,
                            std::vector<TransformReport>* transforms = nullptr);

std::string format_csv(const TimeseriesTable& table);

// Full command-line entry point (args excludes the program name). Returns the
// process exit code: 0 success, 1 model/data failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace netsheaf
