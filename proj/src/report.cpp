#include "caedet/report.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace caedet::harness {

ReportFormat format_from_name(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw std::invalid_argument("unknown report format: " + name);
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

/// Round through the 6-significant-digit representation so JSON numbers
/// match the CSV text.
double round6(double v) { return std::stod(fmt6(v)); }

std::string render_csv(const Report& report) {
    std::string out;
    out += "# experiment = " + report.experiment + "\n";
    for (const auto& [k, v] : report.config) out += "# " + k + " = " + v + "\n";
    out +=
        "task,attack,rate,detector,separator,alpha,param_name,param,scope,round,note,"
        "f1,precision,recall,acc_clean,acc_undefended,acc_filtered\n";
    for (const ReportRow& r : report.rows) {
        out += r.task + "," + r.attack + "," + fmt6(r.rate) + "," + r.detector + "," +
               r.separator + "," + fmt6(r.alpha) + "," + r.param_name + "," + fmt6(r.param) +
               "," + r.scope + "," + std::to_string(r.round) + "," + r.note + "," + fmt6(r.f1) +
               "," + fmt6(r.precision) + "," + fmt6(r.recall) + "," + fmt6(r.acc_clean) + "," +
               fmt6(r.acc_undefended) + "," + fmt6(r.acc_filtered) + "\n";
    }
    return out;
}

std::string render_json(const Report& report) {
    nlohmann::ordered_json j;
    j["experiment"] = report.experiment;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : report.config) cfg[k] = v;
    j["config"] = std::move(cfg);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const ReportRow& r : report.rows) {
        nlohmann::ordered_json o;
        o["task"] = r.task;
        o["attack"] = r.attack;
        o["rate"] = round6(r.rate);
        o["detector"] = r.detector;
        o["separator"] = r.separator;
        o["alpha"] = round6(r.alpha);
        o["param_name"] = r.param_name;
        o["param"] = round6(r.param);
        o["scope"] = r.scope;
        o["round"] = r.round;
        o["note"] = r.note;
        o["f1"] = round6(r.f1);
        o["precision"] = round6(r.precision);
        o["recall"] = round6(r.recall);
        o["acc_clean"] = round6(r.acc_clean);
        o["acc_undefended"] = round6(r.acc_undefended);
        o["acc_filtered"] = round6(r.acc_filtered);
        rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
}

}  // namespace

std::string render_report(const Report& report, ReportFormat format) {
    if (report.rows.empty())
        throw std::runtime_error("report has no rows; refusing to write an empty report");
    return format == ReportFormat::Csv ? render_csv(report) : render_json(report);
}

void emit_report(const Report& report, ReportFormat format, const std::string& path) {
    const std::string body = render_report(report, format);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace caedet::harness
