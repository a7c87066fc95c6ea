#pragma once

#include <string>

#include <json.hpp>

#include "cascade/cascade.hpp"

namespace cascade {

using ordered_json = nlohmann::ordered_json;

ordered_json accuracy_model_to_json(const AccuracyModel& model);
AccuracyModel accuracy_model_from_json(const ordered_json& j);

// threshold <-> float or the strings "-inf" / "+inf"
ordered_json threshold_to_json(double threshold);
double threshold_from_json(const ordered_json& j);

ordered_json constraint_to_json(const AccuracyConstraint& ac);
AccuracyConstraint constraint_from_json(const ordered_json& j);

ordered_json cascade_to_json(const Cascade& cascade);
Cascade cascade_from_json(const ordered_json& j);

void save_cascade(const Cascade& cascade, const std::string& path);
Cascade load_cascade(const std::string& path);

// FNV-1a 64 over the file bytes, as "fnv1a64:<hex>"; used by the
// train/test separation guard.
std::string file_content_hash(const std::string& path);

}  // namespace cascade
