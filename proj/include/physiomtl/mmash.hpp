#pragma once

// MMASH dataset pipeline: inter-beat intervals -> 5-minute RMSSD series with
// outlier removal, plus the per-subject feature vector (age, BMI, activity,
// sleep, stress). Expects the PhysioNet per-subject layout: one user_<N>
// directory per subject containing RR.csv, user_info.csv, sleep.csv,
// Activity.csv and questionnaire.csv.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "physiomtl/csv.hpp"
#include "physiomtl/errors.hpp"
#include "physiomtl/task.hpp"

namespace physiomtl::mmash {

inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names{"age", "bmi", "activity", "sleep", "stress"};
    return names;
}

/// Root mean square of successive differences of inter-beat intervals.
inline double rmssd(std::span<const double> ibis_ms) {
    if (ibis_ms.size() < 2)
        throw InsufficientData("rmssd: need at least 2 inter-beat intervals");
    double s = 0.0;
    for (size_t i = 0; i + 1 < ibis_ms.size(); ++i) {
        const double d = ibis_ms[i + 1] - ibis_ms[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(ibis_ms.size() - 1));
}

// Beat-aligned inter-beat intervals on a monotone hour timeline.
struct BeatSeries {
    std::string subject_id;
    std::vector<double> times_hours;
    std::vector<double> ibis_ms;
};

struct WindowPoint {
    double midpoint_hours;
    double rmssd_ms;
};

struct WindowCounts {
    int total = 0;    // windows spanned by the recording
    int kept = 0;     // windows with >= 2 beats
    int skipped = 0;  // windows with < 2 beats
};

/// RMSSD per contiguous non-overlapping window aligned to the recording
/// start; windows with fewer than 2 beats are skipped (counted, not errors).
inline std::vector<WindowPoint> window_rmssd(const BeatSeries& series,
                                             double window_minutes = 5.0,
                                             WindowCounts* counts = nullptr) {
    if (!(window_minutes > 0.0)) throw InvalidInput("window_rmssd: window must be positive");
    std::vector<WindowPoint> out;
    WindowCounts wc;
    if (!series.times_hours.empty()) {
        const double t0 = series.times_hours.front();
        const double dt = window_minutes / 60.0;
        const double t_last = series.times_hours.back();
        wc.total = static_cast<int>(std::floor((t_last - t0) / dt)) + 1;

        std::vector<std::vector<double>> buckets(static_cast<size_t>(wc.total));
        for (size_t i = 0; i < series.times_hours.size(); ++i) {
            int w = static_cast<int>(std::floor((series.times_hours[i] - t0) / dt));
            w = std::clamp(w, 0, wc.total - 1);
            buckets[static_cast<size_t>(w)].push_back(series.ibis_ms[i]);
        }
        for (int w = 0; w < wc.total; ++w) {
            const auto& b = buckets[static_cast<size_t>(w)];
            if (b.size() < 2) {
                ++wc.skipped;
                continue;
            }
            out.push_back({t0 + (w + 0.5) * dt, rmssd(b)});
            ++wc.kept;
        }
    }
    if (counts) *counts = wc;
    return out;
}

struct ZscoreResult {
    std::vector<double> kept;
    std::vector<size_t> removed_indices;
};

/// Single-pass z-score outlier removal with statistics from the full input.
/// Zero variance (or fewer than 2 values) returns the input unchanged.
inline ZscoreResult zscore_filter(const std::vector<double>& values, double threshold = 2.5) {
    if (!(threshold > 0.0)) throw InvalidInput("zscore_filter: threshold must be positive");
    ZscoreResult out;
    if (values.size() < 2) {
        out.kept = values;
        return out;
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    const double sd = std::sqrt(var);
    if (sd == 0.0) {
        out.kept = values;
        return out;
    }
    for (size_t i = 0; i < values.size(); ++i) {
        if (std::abs(values[i] - mean) / sd > threshold)
            out.removed_indices.push_back(i);
        else
            out.kept.push_back(values[i]);
    }
    return out;
}

struct IngestOptions {
    std::vector<int> exclude_subjects{4};
    // (subject number, feature) pairs whose raw value may be absent; they are
    // imputed with the mean over included subjects. Anything else missing is
    // an error.
    std::vector<std::pair<int, std::string>> imputable{{11, "sleep"}, {18, "age"}};
    double window_minutes = 5.0;
    double zscore_threshold = 2.5;
};

struct SubjectReport {
    std::string subject_id;
    bool excluded = false;
    int windows_total = 0;
    int windows_skipped = 0;
    int outliers_removed = 0;
    int windows_kept = 0;
    int beats_dropped = 0;
    double mean_rmssd = 0.0;
    std::vector<std::string> imputed_fields;
};

struct Imputation {
    std::string subject_id;
    std::string field;
    double value = 0.0;
};

struct IngestReport {
    std::vector<SubjectReport> subjects;
    std::vector<std::string> excluded_subjects;
    std::vector<Imputation> imputations;
};

inline void to_json(nlohmann::json& j, const SubjectReport& r) {
    j = nlohmann::json{{"subject_id", r.subject_id},
                       {"excluded", r.excluded},
                       {"windows_total", r.windows_total},
                       {"windows_skipped", r.windows_skipped},
                       {"outliers_removed", r.outliers_removed},
                       {"windows_kept", r.windows_kept},
                       {"beats_dropped", r.beats_dropped},
                       {"mean_rmssd", r.mean_rmssd},
                       {"imputed_fields", r.imputed_fields}};
}

inline void to_json(nlohmann::json& j, const Imputation& im) {
    j = nlohmann::json{{"subject_id", im.subject_id}, {"field", im.field}, {"value", im.value}};
}

inline void to_json(nlohmann::json& j, const IngestReport& r) {
    j = nlohmann::json{{"subjects", r.subjects},
                       {"excluded_subjects", r.excluded_subjects},
                       {"imputations", r.imputations}};
}

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::optional<std::filesystem::path> find_file_ci(const std::filesystem::path& dir,
                                                         const std::string& name) {
    const std::string want = lower(name);
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && lower(e.path().filename().string()) == want) return e.path();
    return std::nullopt;
}

inline int column_ci(const csv::Table& t, const std::string& name) {
    const std::string want = lower(name);
    for (size_t i = 0; i < t.header.size(); ++i)
        if (lower(t.header[i]) == want) return static_cast<int>(i);
    return -1;
}

inline int require_column_ci(const csv::Table& t, const std::string& name) {
    const int c = column_ci(t, name);
    if (c < 0) throw IngestError(t.path + ": missing column '" + name + "'");
    return c;
}

// "H:MM", "H:MM:SS" or "H:MM:SS.fff" -> hours
inline double parse_clock_hours(const std::string& s, const std::string& where) {
    std::array<double, 3> parts{0.0, 0.0, 0.0};
    size_t n = 0, begin = 0;
    const std::string t = csv::trim(s);
    for (size_t i = 0; i <= t.size(); ++i) {
        if (i == t.size() || t[i] == ':') {
            if (n >= 3) throw IngestError(where + ": bad clock time '" + s + "'");
            parts[n++] = csv::parse_double(t.substr(begin, i - begin), where);
            begin = i + 1;
        }
    }
    if (n < 2) throw IngestError(where + ": bad clock time '" + s + "'");
    return parts[0] + parts[1] / 60.0 + parts[2] / 3600.0;
}

inline BeatSeries load_rr(const std::filesystem::path& file, const std::string& subject_id,
                          int* beats_dropped) {
    const csv::Table t = csv::read_table(file);
    const int ibi_col = require_column_ci(t, "ibi_s");
    const int day_col = require_column_ci(t, "day");
    const int time_col = require_column_ci(t, "time");

    std::vector<std::pair<double, double>> beats;  // (hours, ibi ms)
    int dropped = 0;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = t.path + ":" + std::to_string(t.line_numbers[r]);
        const double ibi_ms =
            1000.0 * csv::parse_double(t.rows[r][static_cast<size_t>(ibi_col)], where);
        const int day =
            static_cast<int>(csv::parse_double(t.rows[r][static_cast<size_t>(day_col)], where));
        const double clock =
            parse_clock_hours(t.rows[r][static_cast<size_t>(time_col)], where);
        if (!std::isfinite(ibi_ms) || ibi_ms <= 0.0) {
            ++dropped;
            continue;
        }
        beats.emplace_back((day - 1) * 24.0 + clock, ibi_ms);
    }
    std::stable_sort(beats.begin(), beats.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    BeatSeries s;
    s.subject_id = subject_id;
    for (const auto& [hours, ibi] : beats) {
        s.times_hours.push_back(hours);
        s.ibis_ms.push_back(ibi);
    }
    if (beats_dropped) *beats_dropped = dropped;
    return s;
}

struct RawProfile {
    // NaN marks a missing value awaiting imputation (or an error if the
    // subject/field pair is not declared imputable).
    double age = std::numeric_limits<double>::quiet_NaN();
    double bmi = std::numeric_limits<double>::quiet_NaN();
    double activity = std::numeric_limits<double>::quiet_NaN();
    double sleep = std::numeric_limits<double>::quiet_NaN();
    double stress = std::numeric_limits<double>::quiet_NaN();

    double& field(const std::string& name) {
        if (name == "age") return age;
        if (name == "bmi") return bmi;
        if (name == "activity") return activity;
        if (name == "sleep") return sleep;
        if (name == "stress") return stress;
        throw InvalidInput("unknown MMASH feature '" + name + "'");
    }
};

inline bool is_imputable(const IngestOptions& opt, int subject_num, const std::string& field) {
    for (const auto& [num, f] : opt.imputable)
        if (num == subject_num && f == field) return true;
    return false;
}

}  // namespace detail

/// Loads the MMASH tree into TaskRecords (feature order: age, bmi, activity,
/// sleep, stress). Excluded subjects are dropped before dataset-wide means
/// are computed for imputation. Output is ordered by subject number.
inline std::vector<TaskRecord> load_mmash(const std::filesystem::path& root,
                                          const IngestOptions& opt = {},
                                          IngestReport* report_out = nullptr) {
    namespace fs = std::filesystem;
    fs::path base = root;
    if (!fs::is_directory(base)) throw IngestError("MMASH root not found: " + root.string());
    if (fs::is_directory(base / "DataPaper")) base /= "DataPaper";

    std::vector<std::pair<int, fs::path>> subjects;
    for (const auto& e : fs::directory_iterator(base)) {
        if (!e.is_directory()) continue;
        const std::string name = e.path().filename().string();
        if (name.rfind("user_", 0) != 0) continue;
        try {
            subjects.emplace_back(std::stoi(name.substr(5)), e.path());
        } catch (const std::exception&) {
            throw IngestError("unexpected subject directory name: " + name);
        }
    }
    if (subjects.empty())
        throw IngestError("no user_<N> directories under " + base.string());
    std::sort(subjects.begin(), subjects.end());

    struct Loaded {
        int num;
        std::string id;
        std::vector<double> times;
        std::vector<double> values;
        detail::RawProfile profile;
        SubjectReport report;
    };
    std::vector<Loaded> loaded;
    IngestReport report;

    for (const auto& [num, dir] : subjects) {
        Loaded sub;
        sub.num = num;
        sub.id = "user_" + std::to_string(num);
        sub.report.subject_id = sub.id;

        const auto require_file = [&](const std::string& name) {
            auto p = detail::find_file_ci(dir, name);
            if (!p) throw IngestError(sub.id + ": missing required file " + name);
            return *p;
        };

        // HRV series
        const BeatSeries beats =
            detail::load_rr(require_file("RR.csv"), sub.id, &sub.report.beats_dropped);
        WindowCounts wc;
        const auto points = window_rmssd(beats, opt.window_minutes, &wc);
        std::vector<double> rmssd_values;
        rmssd_values.reserve(points.size());
        for (const auto& p : points) rmssd_values.push_back(p.rmssd_ms);
        const ZscoreResult zr = zscore_filter(rmssd_values, opt.zscore_threshold);
        sub.report.windows_total = wc.total;
        sub.report.windows_skipped = wc.skipped;
        sub.report.outliers_removed = static_cast<int>(zr.removed_indices.size());
        sub.report.windows_kept = wc.kept - sub.report.outliers_removed;
        {
            size_t next_removed = 0;
            for (size_t i = 0; i < points.size(); ++i) {
                if (next_removed < zr.removed_indices.size() &&
                    zr.removed_indices[next_removed] == i) {
                    ++next_removed;
                    continue;
                }
                sub.times.push_back(fold_hours(points[i].midpoint_hours));
                sub.values.push_back(points[i].rmssd_ms);
            }
        }
        if (sub.values.empty()) throw IngestError(sub.id + ": no usable HRV windows");
        sub.report.mean_rmssd =
            std::accumulate(sub.values.begin(), sub.values.end(), 0.0) /
            static_cast<double>(sub.values.size());

        // age, height/weight -> BMI
        {
            const csv::Table t = csv::read_table(require_file("user_info.csv"));
            const int age_c = detail::column_ci(t, "Age");
            const int h_c = detail::column_ci(t, "Height");
            const int w_c = detail::column_ci(t, "Weight");
            if (t.rows.empty()) throw IngestError(sub.id + ": user_info.csv has no rows");
            const std::string where = t.path + ":" + std::to_string(t.line_numbers[0]);
            const auto numeric = [&](int c) -> double {
                if (c < 0) return std::numeric_limits<double>::quiet_NaN();
                const std::string& cell = t.rows[0][static_cast<size_t>(c)];
                if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
                return csv::parse_double(cell, where);
            };
            const double age = numeric(age_c);
            if (std::isfinite(age) && age > 0.0) sub.profile.age = age;
            const double h = numeric(h_c), w = numeric(w_c);
            if (std::isfinite(h) && h > 0.0 && std::isfinite(w) && w > 0.0)
                sub.profile.bmi = w / ((h / 100.0) * (h / 100.0));
        }

        // diary hours of medium (5) and heavy (6) activity
        {
            const csv::Table t = csv::read_table(require_file("Activity.csv"));
            const int act_c = detail::require_column_ci(t, "Activity");
            const int start_c = detail::require_column_ci(t, "Start");
            const int end_c = detail::require_column_ci(t, "End");
            double hours = 0.0;
            for (size_t r = 0; r < t.rows.size(); ++r) {
                const std::string where = t.path + ":" + std::to_string(t.line_numbers[r]);
                const std::string& cat_cell = t.rows[r][static_cast<size_t>(act_c)];
                if (cat_cell.empty()) continue;
                const int cat = static_cast<int>(csv::parse_double(cat_cell, where));
                if (cat != 5 && cat != 6) continue;
                const double start =
                    detail::parse_clock_hours(t.rows[r][static_cast<size_t>(start_c)], where);
                const double end =
                    detail::parse_clock_hours(t.rows[r][static_cast<size_t>(end_c)], where);
                hours += end >= start ? end - start : end - start + 24.0;
            }
            sub.profile.activity = hours;
        }

        // mean nightly hours in bed
        {
            const auto sleep_file = detail::find_file_ci(dir, "sleep.csv");
            if (sleep_file) {
                const csv::Table t = csv::read_table(*sleep_file);
                const int col = detail::column_ci(t, "Total Minutes in Bed");
                double sum = 0.0;
                int n = 0;
                if (col >= 0) {
                    for (size_t r = 0; r < t.rows.size(); ++r) {
                        const std::string& cell = t.rows[r][static_cast<size_t>(col)];
                        if (cell.empty()) continue;
                        sum += csv::parse_double(
                            cell, t.path + ":" + std::to_string(t.line_numbers[r]));
                        ++n;
                    }
                }
                if (n > 0) sub.profile.sleep = (sum / n) / 60.0;
            }
            if (!std::isfinite(sub.profile.sleep) && !sleep_file &&
                !detail::is_imputable(opt, num, "sleep"))
                throw IngestError(sub.id + ": missing required file sleep.csv");
        }

        // Daily Stress Inventory score
        {
            const csv::Table t = csv::read_table(require_file("questionnaire.csv"));
            const int col = detail::column_ci(t, "Daily_stress");
            if (col >= 0 && !t.rows.empty() &&
                !t.rows[0][static_cast<size_t>(col)].empty())
                sub.profile.stress = csv::parse_double(
                    t.rows[0][static_cast<size_t>(col)],
                    t.path + ":" + std::to_string(t.line_numbers[0]));
        }

        loaded.push_back(std::move(sub));
    }

    // exclusions first, so excluded subjects never enter the imputation means
    for (auto& sub : loaded) {
        sub.report.excluded =
            std::find(opt.exclude_subjects.begin(), opt.exclude_subjects.end(), sub.num) !=
            opt.exclude_subjects.end();
        if (sub.report.excluded) report.excluded_subjects.push_back(sub.id);
    }

    // dataset-wide means over included subjects, then imputation
    for (const auto& field : feature_names()) {
        double sum = 0.0;
        int n = 0;
        for (auto& sub : loaded) {
            if (sub.report.excluded) continue;
            const double v = sub.profile.field(field);
            if (std::isfinite(v)) {
                sum += v;
                ++n;
            }
        }
        for (auto& sub : loaded) {
            if (sub.report.excluded) continue;
            double& v = sub.profile.field(field);
            if (std::isfinite(v)) continue;
            if (!detail::is_imputable(opt, sub.num, field))
                throw IngestError(sub.id + ": missing value for '" + field +
                                  "' and not declared imputable");
            if (n == 0)
                throw IngestError("cannot impute '" + field + "': no subject provides it");
            v = sum / n;
            sub.report.imputed_fields.push_back(field);
            report.imputations.push_back({sub.id, field, v});
        }
    }

    std::vector<TaskRecord> tasks;
    for (auto& sub : loaded) {
        report.subjects.push_back(sub.report);
        if (sub.report.excluded) continue;
        TaskRecord t;
        t.task_id = sub.id;
        t.times = std::move(sub.times);
        t.values = std::move(sub.values);
        t.features.resize(5);
        t.features << sub.profile.age, sub.profile.bmi, sub.profile.activity, sub.profile.sleep,
            sub.profile.stress;
        t.validate();
        tasks.push_back(std::move(t));
    }
    if (report_out) *report_out = report;
    return tasks;
}

}  // namespace physiomtl::mmash
