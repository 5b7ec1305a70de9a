#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "icr/discrete_icr.hpp"
#include "icr/gaussian.hpp"
#include "icr/model.hpp"
#include "icr/sampler.hpp"

namespace icr {

inline constexpr std::string_view kFormatVersion = "icr-report 1";

/// Model documents:
///   {"family": "discrete" | "gaussian",
///    "variables": [{"name", "kind": "discrete" | "continuous", "support_size"?}],
///    "conditionals": [{"target": [names], "parents": [names],
///                      "table": nested array   (discrete; parents outermost,
///                                               targets innermost, both sorted)
///                      | "coef", "intercept", "cond_cov"  (gaussian)}]}
/// Throws Error(ParseError) with the byte position for malformed JSON and
/// Error(InvalidModel) for well-formed documents that break the model rules.
ConditionalModel parse_model(std::string_view text);
ConditionalModel model_from_json(const nlohmann::json& doc);
ConditionalModel load_model(const std::filesystem::path& path);

nlohmann::json model_to_json(const ConditionalModel& model);

nlohmann::json to_json(const DiscreteDistribution& d, const ConditionalModel& model);
nlohmann::json to_json(const GaussianDistribution& g, const ConditionalModel& model);
DiscreteDistribution discrete_from_json(const nlohmann::json& j,
                                        const ConditionalModel& model);
GaussianDistribution gaussian_from_json(const nlohmann::json& j,
                                        const ConditionalModel& model);

nlohmann::json report_to_json(const IcrReport& report, const ConditionalModel& model);
nlohmann::json report_to_json(const GaussianIcrReport& report,
                              const ConditionalModel& model);

/// Cycle (zero-based) stored in a report document.
std::vector<std::size_t> report_cycle(const nlohmann::json& report);

nlohmann::json batches_to_json(const std::vector<BatchSummary>& batches,
                               const ConditionalModel& model);
void write_batches_csv(const std::vector<BatchSummary>& batches,
                       const ConditionalModel& model, std::ostream& out);

/// Reads and parses a JSON file; ParseError carries the byte offset.
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace icr
