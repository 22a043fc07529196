#pragma once

// Standalone SVG line charts from the harness CSV schemas: one polyline per
// arm (mean across trials) plus one shaded +-1 std band polygon per arm.
// Schemas are recognized by their exact header row.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ticketlab/csv.hpp"
#include "ticketlab/errors.hpp"
#include "ticketlab/fsutil.hpp"

namespace ticketlab {
namespace svg {

struct ChartSchema {
    std::string name;
    std::string header;
    std::string x_column;
    std::string y_column;
    std::string x_label;
    std::string y_label;
};

inline const std::vector<ChartSchema>& chart_schemas() {
    static const std::vector<ChartSchema> schemas = {
        {"metrics", kMetricsHeader, "epoch", "test_acc", "epoch", "test accuracy"},
        {"barrier", kBarrierHeader, "alpha", "barrier", "alpha", "error barrier"},
        {"sparsity", kSparsityHeader, "remaining_ratio", "test_acc", "remaining parameter ratio",
         "test accuracy"},
    };
    return schemas;
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("not a number in CSV: '" + s + "'");
    return v;
}

inline const ChartSchema& match_schema(const CsvTable& table, const std::string& name) {
    std::string joined;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) joined += ',';
        joined += table.header[i];
    }
    for (const auto& schema : chart_schemas())
        if (joined == schema.header) return schema;

    // Closest schema by shared columns; report its first missing column.
    const ChartSchema* best = nullptr;
    int best_shared = -1;
    for (const auto& schema : chart_schemas()) {
        int shared = 0;
        for (const auto& col : split_csv_line(schema.header))
            if (table.column(col) >= 0) ++shared;
        if (shared > best_shared) {
            best_shared = shared;
            best = &schema;
        }
    }
    for (const auto& col : split_csv_line(best->header))
        if (table.column(col) < 0)
            throw FormatError(name + ": header does not match schema '" + best->name +
                              "': missing column '" + col + "'");
    throw FormatError(name + ": header does not match any known CSV schema");
}

struct Series {
    std::string arm;
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> std_dev;
};

inline std::vector<Series> aggregate(const CsvTable& table, const ChartSchema& schema,
                                     const std::string& name) {
    if (table.rows.empty()) throw FormatError(name + ": CSV has no data rows");
    const int arm_col = table.column("arm");
    const int x_col = table.column(schema.x_column);
    const int y_col = table.column(schema.y_column);

    // arm -> x -> samples across trials; arms keep first-appearance order.
    std::vector<std::string> arm_order;
    std::map<std::string, std::map<double, std::vector<double>>> groups;
    for (const auto& row : table.rows) {
        const std::string& arm = row[arm_col];
        const double x = parse_double(row[x_col]);
        const double y = parse_double(row[y_col]);
        if (std::isnan(y)) continue;
        if (!groups.count(arm)) arm_order.push_back(arm);
        groups[arm][x].push_back(y);
    }

    std::vector<Series> out;
    for (const auto& arm : arm_order) {
        Series s;
        s.arm = arm;
        for (const auto& [x, ys] : groups[arm]) {
            double mean = 0.0;
            for (double y : ys) mean += y;
            mean /= static_cast<double>(ys.size());
            double sd = 0.0;
            if (ys.size() > 1) {
                double ss = 0.0;
                for (double y : ys) ss += (y - mean) * (y - mean);
                sd = std::sqrt(ss / static_cast<double>(ys.size() - 1));
            }
            s.x.push_back(x);
            s.mean.push_back(mean);
            s.std_dev.push_back(sd);
        }
        if (!s.x.empty()) out.push_back(std::move(s));
    }
    if (out.empty()) throw FormatError(name + ": no plottable rows");
    return out;
}

inline std::string tick_label(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 4);
    return std::string(buf, ptr);
}

inline std::string render_chart(const std::vector<Series>& series, const ChartSchema& schema,
                                const std::string& title) {
    constexpr double W = 640, H = 420;
    constexpr double L = 70, R = 620, T = 40, B = 370;  // plot area
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

    double xmin = series[0].x[0], xmax = xmin;
    double ymin = series[0].mean[0], ymax = ymin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.mean[i] - s.std_dev[i]);
            ymax = std::max(ymax, s.mean[i] + s.std_dev[i]);
        }
    if (xmax == xmin) xmax = xmin + 1.0;
    const double ypad = (ymax - ymin) == 0.0 ? 0.5 : 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (R - L); };
    auto py = [&](double y) { return B - (y - ymin) / (ymax - ymin) * (B - T); };
    auto fx = [](double v) { return format_fixed(v, 2); };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + fx(W) + " " + fx(H) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"" + fx(W) + "\" height=\"" + fx(H) + "\" fill=\"white\"/>\n";
    out += "<text x=\"" + fx((L + R) / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
           title + "</text>\n";

    // Bands first so lines draw on top.
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            pts += fx(px(s.x[i])) + "," + fx(py(s.mean[i] + s.std_dev[i])) + " ";
        for (std::size_t i = s.x.size(); i-- > 0;)
            pts += fx(px(s.x[i])) + "," + fx(py(s.mean[i] - s.std_dev[i])) + " ";
        out += "<polygon points=\"" + pts + "\" fill=\"" + palette[k % 8] +
               "\" opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            pts += fx(px(s.x[i])) + "," + fx(py(s.mean[i])) + " ";
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + palette[k % 8] +
               "\" stroke-width=\"1.5\"/>\n";
    }

    // Axes and ticks.
    out += "<line x1=\"" + fx(L) + "\" y1=\"" + fx(B) + "\" x2=\"" + fx(R) + "\" y2=\"" + fx(B) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + fx(L) + "\" y1=\"" + fx(T) + "\" x2=\"" + fx(L) + "\" y2=\"" + fx(B) +
           "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        out += "<line x1=\"" + fx(px(xv)) + "\" y1=\"" + fx(B) + "\" x2=\"" + fx(px(xv)) +
               "\" y2=\"" + fx(B + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fx(px(xv)) + "\" y=\"" + fx(B + 18) +
               "\" text-anchor=\"middle\">" + tick_label(xv) + "</text>\n";
        out += "<line x1=\"" + fx(L - 5) + "\" y1=\"" + fx(py(yv)) + "\" x2=\"" + fx(L) +
               "\" y2=\"" + fx(py(yv)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fx(L - 8) + "\" y=\"" + fx(py(yv) + 4) +
               "\" text-anchor=\"end\">" + tick_label(yv) + "</text>\n";
    }
    out += "<text x=\"" + fx((L + R) / 2) + "\" y=\"" + fx(H - 12) +
           "\" text-anchor=\"middle\">" + schema.x_label + "</text>\n";
    out += "<text x=\"18\" y=\"" + fx((T + B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
           fx((T + B) / 2) + ")\">" + schema.y_label + "</text>\n";

    // Legend.
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double ly = T + 14.0 * static_cast<double>(k) + 4;
        out += "<rect x=\"" + fx(R - 150) + "\" y=\"" + fx(ly - 9) +
               "\" width=\"10\" height=\"10\" fill=\"" + std::string(palette[k % 8]) + "\"/>\n";
        out += "<text x=\"" + fx(R - 136) + "\" y=\"" + fx(ly) + "\">" + series[k].arm +
               "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace svg

// Renders one SVG per input CSV into out_dir, named after the CSV stem.
// Throws FormatError for schema mismatches or empty bodies.
inline std::vector<std::filesystem::path> emit_plots(
    const std::vector<std::filesystem::path>& csv_paths, const std::filesystem::path& out_dir) {
    std::vector<std::filesystem::path> written;
    for (const auto& csv_path : csv_paths) {
        const CsvTable table = read_csv(csv_path);
        const auto& schema = svg::match_schema(table, csv_path.string());
        const auto series = svg::aggregate(table, schema, csv_path.string());
        const std::string chart = svg::render_chart(series, schema, csv_path.stem().string());
        const std::filesystem::path out = out_dir / (csv_path.stem().string() + ".svg");
        atomic_write_file(out, chart);
        written.push_back(out);
    }
    return written;
}

}  // namespace ticketlab
