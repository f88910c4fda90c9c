#pragma once

#include <string>
#include <utility>
#include <vector>

namespace caedet::harness {

/// One result row. Every experiment writes the same schema; sweep
/// experiments put their swept quantity into param_name/param, and
/// per-round rows carry scope "round" while aggregates carry "mean".
struct ReportRow {
    std::string task;
    std::string attack;
    double rate = 0.0;
    std::string detector;   // "none" for attack-only rows
    std::string separator;  // "gmm" or "top<K>"
    double alpha = 0.0;
    std::string param_name;
    double param = 0.0;
    std::string scope = "round";
    int round = -1;  // evaluation-round index; -1 on mean rows
    std::string note;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double acc_clean = 0.0;       // SVM trained on the round's clean train split
    double acc_undefended = 0.0;  // trained on the poisoned split, no filtering
    double acc_filtered = 0.0;    // trained on the detector-filtered split
};

struct Report {
    std::string experiment;
    std::vector<std::pair<std::string, std::string>> config;  // ordered echo
    std::vector<ReportRow> rows;
};

enum class ReportFormat { Csv, Json };

ReportFormat format_from_name(const std::string& name);

/// Format a value with 6 significant digits, the precision every report
/// number is emitted with.
std::string fmt6(double v);

/// Write the report. CSV carries the config echo as leading '#' comment
/// lines; JSON nests it under "config". Refuses to write a report with
/// no rows.
void emit_report(const Report& report, ReportFormat format, const std::string& path);

std::string render_report(const Report& report, ReportFormat format);

}  // namespace caedet::harness
