#pragma once

#include <filesystem>

#include <json.hpp>

#include "fedunlearn/unlearn.hpp"

namespace fedunlearn {

/// Structured report: metrics, per-round traces as arrays, bound inputs and a config echo.
nlohmann::json report_to_json(const UnlearnReport& report, const nlohmann::json& config_echo);

/// Inverse of report_to_json for the fields the bound checker and tables need.
UnlearnReport report_from_json(const nlohmann::json& doc);

UnlearnReport load_report(const std::filesystem::path& path);

}  // namespace fedunlearn
