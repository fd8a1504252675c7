#pragma once

// Measurement series and the CSV exchange format
//   timestamp,transformer_id,p_kw,q_kvar
// Timestamps are integer seconds. Values are converted to per-unit on read.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cvr/error.hpp"

namespace cvr::enrich {

inline constexpr std::int64_t kSecondsPerHour = 3600;

// Hourly averages P_a(t).
struct HourlySeries {
    std::string id;
    std::vector<std::int64_t> timestamps;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }

    void validate() const {
        if (timestamps.size() != values.size()) {
            throw DataError("series '" + id + "': timestamp/value count mismatch");
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) {
                throw DataError("series '" + id + "': non-finite value at index " + std::to_string(i));
            }
            if (i > 0 && timestamps[i] <= timestamps[i - 1]) {
                throw DataError("series '" + id + "': timestamps not strictly increasing at index " +
                                std::to_string(i));
            }
        }
    }

    // Consecutive 24-hour patterns (incomplete trailing day dropped).
    std::vector<std::vector<double>> daily_patterns() const {
        std::vector<std::vector<double>> out;
        for (std::size_t d = 0; (d + 1) * 24 <= values.size(); ++d) {
            out.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(d * 24),
                             values.begin() + static_cast<std::ptrdiff_t>((d + 1) * 24));
        }
        return out;
    }
};

// Contiguous within-hour samples, samples_per_hour per hour, starting at start.
struct HighResSeries {
    std::string id;
    std::int64_t start = 0;
    std::size_t samples_per_hour = 3600;
    std::vector<double> values;

    std::size_t hours() const { return samples_per_hour == 0 ? 0 : values.size() / samples_per_hour; }

    std::span<const double> hour(std::size_t t) const {
        return std::span<const double>(values).subspan(t * samples_per_hour, samples_per_hour);
    }
    std::span<double> hour(std::size_t t) {
        return std::span<double>(values).subspan(t * samples_per_hour, samples_per_hour);
    }

    void validate() const {
        if (samples_per_hour == 0 || values.size() % samples_per_hour != 0) {
            throw DataError("series '" + id + "': sample count is not a whole number of hours");
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) {
                throw DataError("series '" + id + "': non-finite sample at index " + std::to_string(i));
            }
        }
    }

    HourlySeries hourly_means() const {
        HourlySeries h;
        h.id = id;
        for (std::size_t t = 0; t < hours(); ++t) {
            double s = 0.0;
            for (double x : hour(t)) {
                s += x;
            }
            h.timestamps.push_back(start + static_cast<std::int64_t>(t) * kSecondsPerHour);
            h.values.push_back(s / static_cast<double>(samples_per_hour));
        }
        return h;
    }
};

// Active and reactive series of one transformer.
template <class S>
struct MeterSeries {
    S p;
    S q;
};

using HighResMeter = MeterSeries<HighResSeries>;
using HourlyMeter = MeterSeries<HourlySeries>;

struct CsvRow {
    std::int64_t timestamp = 0;
    double p = 0.0;
    double q = 0.0;
};

// Rows grouped by transformer, sorted by timestamp. Values divided by base_kva.
inline std::map<std::string, std::vector<CsvRow>> read_measurement_csv(std::istream& in, double base_kva,
                                                                       const std::string& name = "csv") {
    std::map<std::string, std::vector<CsvRow>> out;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("timestamp", 0) == 0) {
                continue;
            }
        }
        std::stringstream ss(line);
        std::string ts, id, p, q;
        if (!std::getline(ss, ts, ',') || !std::getline(ss, id, ',') || !std::getline(ss, p, ',') ||
            !std::getline(ss, q)) {
            throw SchemaError(name + ":" + std::to_string(lineno) + ": expected 4 columns");
        }
        CsvRow row;
        try {
            std::size_t used = 0;
            row.timestamp = std::stoll(ts, &used);
            if (used != ts.size()) {
                throw std::invalid_argument("timestamp");
            }
            row.p = std::stod(p) / base_kva;
            row.q = std::stod(q) / base_kva;
        } catch (const std::exception&) {
            throw SchemaError(name + ":" + std::to_string(lineno) + ": malformed number");
        }
        if (!std::isfinite(row.p) || !std::isfinite(row.q)) {
            throw DataError(name + ":" + std::to_string(lineno) + ": non-finite value");
        }
        out[id].push_back(row);
    }
    for (auto& [id, rows] : out) {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const CsvRow& a, const CsvRow& b) { return a.timestamp < b.timestamp; });
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].timestamp == rows[i - 1].timestamp) {
                throw DataError(name + ": duplicate timestamp " + std::to_string(rows[i].timestamp) +
                                " for transformer '" + id + "'");
            }
        }
    }
    return out;
}

inline std::map<std::string, std::vector<CsvRow>> read_measurement_csv(const std::string& path, double base_kva) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return read_measurement_csv(in, base_kva, path);
}

// Regular-cadence rows to a high-resolution meter; the first sample opens hour 0.
inline HighResMeter to_high_res(const std::string& id, const std::vector<CsvRow>& rows) {
    if (rows.size() < 2) {
        throw DataError("transformer '" + id + "': too few high-resolution samples");
    }
    const std::int64_t step = rows[1].timestamp - rows[0].timestamp;
    if (step <= 0 || kSecondsPerHour % step != 0) {
        throw DataError("transformer '" + id + "': cadence must divide one hour");
    }
    HighResMeter m;
    m.p.id = m.q.id = id;
    m.p.start = m.q.start = rows[0].timestamp;
    m.p.samples_per_hour = m.q.samples_per_hour = static_cast<std::size_t>(kSecondsPerHour / step);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].timestamp - rows[i - 1].timestamp != step) {
            throw DataError("transformer '" + id + "': irregular cadence at t=" + std::to_string(rows[i].timestamp));
        }
        m.p.values.push_back(rows[i].p);
        m.q.values.push_back(rows[i].q);
    }
    m.p.validate();
    return m;
}

inline HourlyMeter to_hourly(const std::string& id, const std::vector<CsvRow>& rows) {
    HourlyMeter m;
    m.p.id = m.q.id = id;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].timestamp - rows[i - 1].timestamp != kSecondsPerHour) {
            throw DataError("transformer '" + id + "': smart-meter rows must be hourly (t=" +
                            std::to_string(rows[i].timestamp) + ")");
        }
        m.p.timestamps.push_back(rows[i].timestamp);
        m.q.timestamps.push_back(rows[i].timestamp);
        m.p.values.push_back(rows[i].p);
        m.q.values.push_back(rows[i].q);
    }
    return m;
}

inline void write_high_res_csv(std::ostream& out, const std::map<std::string, HighResMeter>& meters, double base_kva,
                               bool header = true) {
    if (header) {
        out << "timestamp,transformer_id,p_kw,q_kvar\n";
    }
    char buf[64];
    for (const auto& [id, m] : meters) {
        const std::int64_t step = kSecondsPerHour / static_cast<std::int64_t>(m.p.samples_per_hour);
        for (std::size_t i = 0; i < m.p.values.size(); ++i) {
            out << (m.p.start + static_cast<std::int64_t>(i) * step) << ',' << id << ',';
            std::snprintf(buf, sizeof buf, "%.9g", m.p.values[i] * base_kva);
            out << buf << ',';
            std::snprintf(buf, sizeof buf, "%.9g", m.q.values[i] * base_kva);
            out << buf << '\n';
        }
    }
}

inline void write_hourly_csv(std::ostream& out, const std::map<std::string, HourlyMeter>& meters, double base_kva,
                             bool header = true) {
    if (header) {
        out << "timestamp,transformer_id,p_kw,q_kvar\n";
    }
    char buf[64];
    for (const auto& [id, m] : meters) {
        for (std::size_t i = 0; i < m.p.values.size(); ++i) {
            out << m.p.timestamps[i] << ',' << id << ',';
            std::snprintf(buf, sizeof buf, "%.9g", m.p.values[i] * base_kva);
            out << buf << ',';
            std::snprintf(buf, sizeof buf, "%.9g", m.q.values[i] * base_kva);
            out << buf << '\n';
        }
    }
}

} // namespace cvr::enrich
