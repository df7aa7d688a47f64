#include "bdlm/metrics_io.hpp"

#include <iomanip>
#include <sstream>

namespace bdlm::eval {

io::json report_to_json(const MetricReport& rep) {
    return io::json{{"model_tag", rep.model_tag}, {"task", rep.task},
                    {"n_cases", rep.n_cases},     {"hr_at_1", rep.hr_at_1},
                    {"hr_at_2", rep.hr_at_2},     {"precision", rep.precision},
                    {"recall", rep.recall},       {"f1", rep.f1},
                    {"degenerate", rep.degenerate}};
}

MetricReport report_from_json(const io::json& j) {
    MetricReport rep;
    rep.model_tag = j.at("model_tag").get<std::string>();
    rep.task = j.at("task").get<std::string>();
    rep.n_cases = j.at("n_cases").get<int64_t>();
    rep.hr_at_1 = j.at("hr_at_1").get<double>();
    rep.hr_at_2 = j.at("hr_at_2").get<double>();
    rep.precision = j.at("precision").get<double>();
    rep.recall = j.at("recall").get<double>();
    rep.f1 = j.at("f1").get<double>();
    rep.degenerate = j.value("degenerate", false);
    return rep;
}

void save_reports(const std::filesystem::path& json_path, const std::vector<MetricReport>& reps) {
    io::json arr = io::json::array();
    for (const auto& r : reps) arr.push_back(report_to_json(r));
    io::write_json(json_path, arr);
}

std::vector<MetricReport> load_reports(const std::filesystem::path& json_path) {
    auto arr = io::read_json(json_path);
    std::vector<MetricReport> out;
    for (const auto& j : arr) out.push_back(report_from_json(j));
    return out;
}

void save_reports_csv(const std::filesystem::path& csv_path,
                      const std::vector<MetricReport>& reps) {
    std::ostringstream os;
    os << "model_tag,task,n_cases,hr_at_1,hr_at_2,precision,recall,f1\n";
    os << std::setprecision(6) << std::fixed;
    for (const auto& r : reps) {
        os << r.model_tag << "," << r.task << "," << r.n_cases << "," << r.hr_at_1 << ","
           << r.hr_at_2 << "," << r.precision << "," << r.recall << "," << r.f1 << "\n";
    }
    io::write_text(csv_path, os.str());
}

std::string format_report_table(const std::vector<MetricReport>& reps) {
    std::ostringstream os;
    os << std::left << std::setw(20) << "model" << std::setw(13) << "task" << std::right
       << std::setw(8) << "cases" << std::setw(8) << "HR@1" << std::setw(8) << "HR@2"
       << std::setw(8) << "prec" << std::setw(8) << "rec" << std::setw(8) << "f1" << "\n";
    os << std::string(81, '-') << "\n";
    os << std::setprecision(3) << std::fixed;
    for (const auto& r : reps) {
        os << std::left << std::setw(20) << r.model_tag << std::setw(13) << r.task << std::right
           << std::setw(8) << r.n_cases << std::setw(8) << r.hr_at_1 << std::setw(8) << r.hr_at_2
           << std::setw(8) << r.precision << std::setw(8) << r.recall << std::setw(8) << r.f1
           << "\n";
    }
    return os.str();
}

}  // namespace bdlm::eval
