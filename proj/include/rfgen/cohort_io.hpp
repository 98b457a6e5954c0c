#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "rfgen/phantom.hpp"

namespace rfgen {

nlohmann::json to_json(const PhantomParams& p);
PhantomParams params_from_json(const nlohmann::json& j);

/// Writes `cohort.json` plus `<id>_baseline.raw` and `<id>_dose.raw`.
void save_cohort(const std::filesystem::path& dir, const std::vector<PhantomRecord>& records, const nlohmann::json& extra = {});
std::vector<PhantomRecord> load_cohort(const std::filesystem::path& dir);
nlohmann::json load_cohort_manifest(const std::filesystem::path& dir);

}  // namespace rfgen
