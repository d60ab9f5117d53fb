#pragma once

// Minimal CSV support for the canonical file schemas:
//   tasks:    task_id,time_hours,hrv_ms
//   features: task_id,<named feature columns>
// UTF-8, header row, '.' decimal separator, no quoting.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "physiomtl/errors.hpp"
#include "physiomtl/task.hpp"

namespace physiomtl::csv {

struct Table {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line_numbers;  // 1-based source line of each row

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    int require_column(const std::string& name) const {
        const int c = column(name);
        if (c < 0) throw IngestError(path + ": missing column '" + name + "'");
        return c;
    }
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw IngestError(where + ": cannot parse number '" + s + "'");
    return v;
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open " + path.string());
    Table t;
    t.path = path.string();
    std::string line;
    int line_no = 0;
    size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            width = t.header.size();
            continue;
        }
        if (cells.size() != width)
            throw IngestError(t.path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(width) + " fields, got " +
                              std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(line_no);
    }
    if (t.header.empty()) throw IngestError(t.path + ": empty file");
    return t;
}

// Shortest of 17 significant digits: reruns produce byte-identical files.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct FeatureTable {
    std::vector<std::string> names;      // feature column names (without task_id)
    std::vector<std::string> task_ids;   // row order as in the file
    Eigen::MatrixXd values;              // rows aligned with task_ids
};

inline FeatureTable load_features_csv(const std::filesystem::path& path) {
    const Table t = read_table(path);
    const int id_col = t.require_column("task_id");
    FeatureTable f;
    for (size_t c = 0; c < t.header.size(); ++c)
        if (static_cast<int>(c) != id_col) f.names.push_back(t.header[c]);
    f.values.resize(static_cast<Eigen::Index>(t.rows.size()),
                    static_cast<Eigen::Index>(f.names.size()));
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = t.path + ":" + std::to_string(t.line_numbers[r]);
        f.task_ids.push_back(t.rows[r][static_cast<size_t>(id_col)]);
        Eigen::Index k = 0;
        for (size_t c = 0; c < t.header.size(); ++c) {
            if (static_cast<int>(c) == id_col) continue;
            f.values(static_cast<Eigen::Index>(r), k++) = parse_double(t.rows[r][c], where);
        }
    }
    return f;
}

/// Joins the canonical tasks and features CSVs into TaskRecords. Observation
/// timestamps are folded into [0, 24). Task order follows the features file;
/// every task needs at least one observation and vice versa.
inline std::vector<TaskRecord> load_tasks(const std::filesystem::path& tasks_csv,
                                          const std::filesystem::path& features_csv,
                                          std::vector<std::string>* feature_names = nullptr) {
    const FeatureTable f = load_features_csv(features_csv);
    if (feature_names) *feature_names = f.names;

    const Table t = read_table(tasks_csv);
    const int id_col = t.require_column("task_id");
    const int time_col = t.require_column("time_hours");
    const int hrv_col = t.require_column("hrv_ms");

    std::map<std::string, size_t> index;
    std::vector<TaskRecord> tasks(f.task_ids.size());
    for (size_t i = 0; i < f.task_ids.size(); ++i) {
        if (!index.emplace(f.task_ids[i], i).second)
            throw IngestError(features_csv.string() + ": duplicate task_id '" + f.task_ids[i] +
                              "'");
        tasks[i].task_id = f.task_ids[i];
        tasks[i].features = f.values.row(static_cast<Eigen::Index>(i));
    }
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = t.path + ":" + std::to_string(t.line_numbers[r]);
        const std::string& id = t.rows[r][static_cast<size_t>(id_col)];
        const auto it = index.find(id);
        if (it == index.end())
            throw IngestError(where + ": task_id '" + id + "' not present in features file");
        tasks[it->second].times.push_back(
            fold_hours(parse_double(t.rows[r][static_cast<size_t>(time_col)], where)));
        tasks[it->second].values.push_back(
            parse_double(t.rows[r][static_cast<size_t>(hrv_col)], where));
    }
    for (const auto& task : tasks)
        if (task.times.empty())
            throw IngestError(tasks_csv.string() + ": task '" + task.task_id +
                              "' has no observations");
    validate_tasks(tasks);
    return tasks;
}

inline void write_tasks_csv(const std::filesystem::path& path,
                            const std::vector<TaskRecord>& tasks) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    out << "task_id,time_hours,hrv_ms\n";
    for (const auto& t : tasks)
        for (size_t i = 0; i < t.times.size(); ++i)
            out << t.task_id << ',' << format_double(t.times[i]) << ','
                << format_double(t.values[i]) << '\n';
}

inline void write_features_csv(const std::filesystem::path& path,
                               const std::vector<TaskRecord>& tasks,
                               const std::vector<std::string>& feature_names) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    out << "task_id";
    for (const auto& n : feature_names) out << ',' << n;
    out << '\n';
    for (const auto& t : tasks) {
        if (t.features.size() != static_cast<Eigen::Index>(feature_names.size()))
            throw InvalidInput("write_features_csv: feature dimension mismatch for '" +
                               t.task_id + "'");
        out << t.task_id;
        for (Eigen::Index k = 0; k < t.features.size(); ++k)
            out << ',' << format_double(t.features[k]);
        out << '\n';
    }
}

}  // namespace physiomtl::csv
