#include "csv.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace happymap {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
    out << content;
    if (!out) fail(ErrorCode::Io, "failed writing '" + path + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

[[noreturn]] void cell_error(std::size_t line_no, const std::string& col, const std::string& what) {
    fail(ErrorCode::Parse,
         "line " + std::to_string(line_no) + ", column '" + col + "': " + what);
}

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& col) {
    try {
        return decode_real(cell);
    } catch (const Error&) {
        cell_error(line_no, col, "not a number: '" + cell + "'");
    }
}

} // namespace

Dataset parse_dataset_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::Parse, "empty dataset file");

    enum class ColKind { Feature, Label, Group, Domain };
    struct Col {
        ColKind kind;
        std::string name; // without prefix
    };
    std::vector<Col> cols;
    const auto header = split_line(line);
    int label_col = -1, domain_col = -1;
    for (const auto& h : header) {
        if (h == "y") {
            if (label_col >= 0) fail(ErrorCode::Parse, "duplicate y column");
            label_col = static_cast<int>(cols.size());
            cols.push_back({ColKind::Label, "y"});
        } else if (h == "z") {
            if (domain_col >= 0) fail(ErrorCode::Parse, "duplicate z column");
            domain_col = static_cast<int>(cols.size());
            cols.push_back({ColKind::Domain, "z"});
        } else if (h.rfind("x_", 0) == 0) {
            cols.push_back({ColKind::Feature, h.substr(2)});
        } else if (h.rfind("g_", 0) == 0) {
            cols.push_back({ColKind::Group, h.substr(2)});
        } else {
            fail(ErrorCode::Parse, "unknown column '" + h + "' (expected x_*, y, g_* or z)");
        }
    }

    Dataset ds;
    for (const auto& c : cols) {
        if (c.kind == ColKind::Feature) ds.feature_names.push_back(c.name);
        if (c.kind == ColKind::Group) ds.group_names.push_back(c.name);
    }
    ds.dim = ds.feature_names.size();
    ds.n_groups = ds.group_names.size();
    if (ds.dim == 0) fail(ErrorCode::Parse, "dataset has no x_ feature columns");

    bool any_missing = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() != cols.size())
            fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected " +
                                       std::to_string(cols.size()) + " cells, got " +
                                       std::to_string(cells.size()));
        std::size_t fi = 0;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const std::string& cell = cells[c];
            switch (cols[c].kind) {
                case ColKind::Feature: {
                    if (cell.empty()) {
                        ds.features.push_back(std::numeric_limits<double>::quiet_NaN());
                        any_missing = true;
                        ds.miss_mask.push_back(0);
                    } else {
                        ds.features.push_back(parse_cell(cell, line_no, "x_" + cols[c].name));
                        ds.miss_mask.push_back(1);
                    }
                    ++fi;
                    break;
                }
                case ColKind::Label: {
                    if (cell.empty()) cell_error(line_no, "y", "label cell is empty");
                    ds.labels.push_back(parse_cell(cell, line_no, "y"));
                    break;
                }
                case ColKind::Group: {
                    const double v = parse_cell(cell, line_no, "g_" + cols[c].name);
                    if (v != 0.0 && v != 1.0)
                        cell_error(line_no, "g_" + cols[c].name, "group cells must be 0 or 1");
                    ds.groups.push_back(v);
                    break;
                }
                case ColKind::Domain: {
                    if (cell == "so") ds.domain.push_back(0);
                    else if (cell == "ta") ds.domain.push_back(1);
                    else cell_error(line_no, "z", "domain tag must be so or ta");
                    break;
                }
            }
        }
        (void)fi;
        ++ds.rows;
    }
    if (ds.rows == 0) fail(ErrorCode::Parse, "dataset has no data rows");
    if (label_col < 0) ds.labels.clear();
    if (domain_col < 0) ds.domain.clear();

    if (any_missing) {
        ds.complete.resize(ds.rows, 1);
        for (std::size_t i = 0; i < ds.rows; ++i)
            for (std::size_t j = 0; j < ds.dim; ++j)
                if (!ds.miss_mask[i * ds.dim + j]) ds.complete[i] = 0;
    } else {
        ds.miss_mask.clear();
        ds.complete.clear();
    }
    ds.validate();
    return ds;
}

Dataset load_dataset_csv(const std::string& path) { return parse_dataset_csv(read_file(path)); }

std::string format_dataset_csv(const Dataset& ds) {
    std::ostringstream os;
    for (std::size_t j = 0; j < ds.dim; ++j) {
        if (j) os << ",";
        os << "x_" << (j < ds.feature_names.size() ? ds.feature_names[j] : std::to_string(j));
    }
    if (ds.has_labels()) os << ",y";
    for (std::size_t j = 0; j < ds.n_groups; ++j)
        os << ",g_" << (j < ds.group_names.size() ? ds.group_names[j] : std::to_string(j));
    if (ds.has_domain()) os << ",z";
    os << "\n";
    for (std::size_t i = 0; i < ds.rows; ++i) {
        for (std::size_t j = 0; j < ds.dim; ++j) {
            if (j) os << ",";
            const double v = ds.features[i * ds.dim + j];
            const bool observed = ds.miss_mask.empty() || ds.miss_mask[i * ds.dim + j];
            if (observed && !std::isnan(v)) os << format_real(v);
        }
        if (ds.has_labels()) os << "," << format_real(ds.labels[i]);
        for (std::size_t j = 0; j < ds.n_groups; ++j)
            os << "," << (ds.groups[i * ds.n_groups + j] != 0.0 ? "1" : "0");
        if (ds.has_domain()) os << "," << (ds.domain[i] == 0 ? "so" : "ta");
        os << "\n";
    }
    return os.str();
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    write_file(path, format_dataset_csv(ds));
}

} // namespace happymap
