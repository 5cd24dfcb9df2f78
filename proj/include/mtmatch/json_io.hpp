#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mtmatch/comparators.hpp"
#include "mtmatch/estimators.hpp"
#include "mtmatch/gps.hpp"
#include "mtmatch/inference.hpp"
#include "mtmatch/simulation.hpp"

namespace mtmatch {

// Field order is part of the output contract; ordered_json keeps insertion order.
// Doubles are written in shortest round-trip form, NaN as null.
using Json = nlohmann::ordered_json;

Json to_json(const EffectEstimate& est, const std::vector<std::string>& labels);
Json to_json(const InferenceReport& report, const std::vector<std::string>& labels);
Json to_json(const OverlapReport& report, const std::vector<std::string>& labels, const std::vector<int>& source_rows);
Json to_json(const ComparatorEstimate& est, const std::vector<std::string>& labels);
Json to_json(const GpsModel& gps, const Dataset& ds);

Json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const Json& j);
Json to_json(const EstimatorMetrics& em);
EstimatorMetrics estimator_metrics_from_json(const Json& j);
Json to_json(const SimReport& report);
SimReport sim_report_from_json(const Json& j);

std::string pair_name(const Pair& p, const std::vector<std::string>& labels);

// Two-space indent plus trailing newline.
std::string dump(const Json& j);

}  // namespace mtmatch
