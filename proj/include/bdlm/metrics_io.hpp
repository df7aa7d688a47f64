#pragma once

#include <filesystem>
#include <vector>

#include "bdlm/eval.hpp"
#include "bdlm/io.hpp"

namespace bdlm::eval {

io::json report_to_json(const MetricReport& rep);
MetricReport report_from_json(const io::json& j);

void save_reports(const std::filesystem::path& json_path, const std::vector<MetricReport>& reps);
std::vector<MetricReport> load_reports(const std::filesystem::path& json_path);
void save_reports_csv(const std::filesystem::path& csv_path, const std::vector<MetricReport>& reps);

// fixed-width console table
std::string format_report_table(const std::vector<MetricReport>& reps);

}  // namespace bdlm::eval
