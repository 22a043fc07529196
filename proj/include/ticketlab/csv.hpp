#pragma once

// CSV emitters and a small reader. Schemas are identified by their exact
// header row; '.' decimal separator, LF line endings, values never contain
// commas. Doubles are written in shortest round-trip form, so identical
// computations serialize to identical bytes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ticketlab/errors.hpp"
#include "ticketlab/fsutil.hpp"

namespace ticketlab {

constexpr const char* kMetricsHeader = "arm,trial,epoch,train_loss,train_acc,test_acc";
constexpr const char* kBarrierHeader = "arm,trial,alpha,error,barrier";
constexpr const char* kSparsityHeader = "arm,trial,remaining_ratio,test_acc";

class CsvWriter {
public:
    explicit CsvWriter(std::string header) { out_ += header + "\n"; }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += cells[i];
        }
        out_ += '\n';
    }

    const std::string& str() const { return out_; }

    void save(const std::filesystem::path& path) const { atomic_write_file(path, out_); }

private:
    std::string out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open CSV: " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty CSV: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != table.header.size())
            throw FormatError("ragged CSV row in " + path.string());
        table.rows.push_back(std::move(cells));
    }
    return table;
}

}  // namespace ticketlab
