#include "pdxitr/tsv.hpp"

#include "pdxitr/outcomes.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace pdxitr {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, '\t')) out.push_back(cell);
    if (!line.empty() && line.back() == '\t') out.push_back("");
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

[[noreturn]] void fail(const std::string& source, long line, const std::string& msg) {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + msg);
}

bool is_missing_cell(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

double parse_number(const std::string& s, const std::string& source, long line, const std::string& column) {
    if (is_missing_cell(s)) return kMissing;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        fail(source, line, "column '" + column + "': cannot parse '" + s + "' as a number");
    return v;
}

std::string format_cell(double v) {
    if (!is_present(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open file");
    return in;
}

}  // namespace

FeatureMatrix read_features_tsv(std::istream& is, const std::string& source) {
    std::string line;
    if (!std::getline(is, line)) fail(source, 1, "empty file");
    const auto header = split_tabs(strip_cr(line));
    if (header.empty() || header[0] != "line_id") fail(source, 1, "first column must be 'line_id'");
    if (header.size() < 2) fail(source, 1, "no feature columns");

    FeatureMatrix fm;
    fm.feature_names.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    std::map<std::string, long> seen;
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_tabs(line);
        if (cells.size() != header.size())
            fail(source, line_no, "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
        if (cells[0].empty()) fail(source, line_no, "empty line_id");
        if (auto [it, inserted] = seen.emplace(cells[0], line_no); !inserted)
            fail(source, line_no, "duplicate line_id '" + cells[0] + "' (first at line " + std::to_string(it->second) + ")");
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const double v = parse_number(cells[c], source, line_no, header[c]);
            if (!is_present(v)) fail(source, line_no, "missing feature value in column '" + header[c] + "'");
            row.push_back(v);
        }
        fm.line_ids.push_back(cells[0]);
        rows.push_back(std::move(row));
    }
    fm.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(fm.feature_names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) fm.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return fm;
}

FeatureMatrix read_features_tsv(const std::string& path) {
    auto in = open_input(path);
    return read_features_tsv(in, path);
}

void write_features_tsv(std::ostream& os, const FeatureMatrix& features) {
    os << "line_id";
    for (const auto& n : features.feature_names) os << '\t' << n;
    os << '\n';
    for (Index j = 0; j < features.rows(); ++j) {
        os << features.line_ids[static_cast<std::size_t>(j)];
        for (Index k = 0; k < features.cols(); ++k) os << '\t' << format_cell(features.values(j, k));
        os << '\n';
    }
}

ResponseTable read_responses_tsv(std::istream& is, const std::string& response, const std::string& untreated_label,
                                 const std::string& source) {
    if (response != "neg_bar" && response != "log_ttd")
        throw ValidationError("response kind must be 'neg_bar' or 'log_ttd', got '" + response + "'");
    std::string line;
    if (!std::getline(is, line)) fail(source, 1, "empty file");
    const auto header = split_tabs(strip_cr(line));
    const std::vector<std::string> raw_cols{"line_id", "treatment", "day", "major_mm", "minor_mm"};
    const std::vector<std::string> pre_cols{"line_id", "treatment", "neg_bar", "log_ttd"};
    const bool raw = header == raw_cols;
    if (!raw && header != pre_cols)
        fail(source, 1, "header must be 'line_id treatment day major_mm minor_mm' or 'line_id treatment neg_bar log_ttd'");

    ResponseTable out;
    std::map<std::string, std::size_t> treatment_slot;
    auto treatment_of = [&](const std::string& label) {
        auto [it, inserted] = treatment_slot.emplace(label, out.treatments.size());
        if (inserted) out.treatments.push_back({label, label == untreated_label});
        return out.treatments[it->second];
    };

    struct Mouse {
        std::string line_id;
        std::string treatment;
        long first_line = 0;
        std::vector<double> days, major, minor;
    };
    std::vector<Mouse> mice;
    std::map<std::pair<std::string, std::string>, std::size_t> mouse_slot;

    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_tabs(line);
        if (cells.size() != header.size())
            fail(source, line_no, "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
        if (cells[0].empty() || cells[1].empty()) fail(source, line_no, "empty line_id or treatment");
        if (raw) {
            auto [it, inserted] = mouse_slot.emplace(std::make_pair(cells[0], cells[1]), mice.size());
            if (inserted) mice.push_back({cells[0], cells[1], line_no, {}, {}, {}});
            auto& m = mice[it->second];
            const double d = parse_number(cells[2], source, line_no, "day");
            const double l = parse_number(cells[3], source, line_no, "major_mm");
            const double w = parse_number(cells[4], source, line_no, "minor_mm");
            if (!is_present(d) || !is_present(l) || !is_present(w)) fail(source, line_no, "missing measurement");
            m.days.push_back(d);
            m.major.push_back(l);
            m.minor.push_back(w);
            continue;
        }
        const double bar = parse_number(cells[2], source, line_no, "neg_bar");
        const double ttd = parse_number(cells[3], source, line_no, "log_ttd");
        const double primary = response == "neg_bar" ? bar : ttd;
        const double secondary = response == "neg_bar" ? ttd : bar;
        const TreatmentId t = treatment_of(cells[1]);
        if (!is_present(primary)) {
            out.warnings.push_back(source + ":" + std::to_string(line_no) + ": missing " + response + ", record skipped");
            continue;
        }
        ResponseRecord rec{cells[0], t, primary, std::nullopt};
        if (is_present(secondary)) rec.secondary = secondary;
        out.records.push_back(std::move(rec));
    }

    for (auto& m : mice) {
        const TreatmentId t = treatment_of(m.treatment);
        std::vector<std::size_t> order(m.days.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m.days[a] < m.days[b]; });
        std::vector<double> days, major, minor;
        for (std::size_t i : order) {
            days.push_back(m.days[i]);
            major.push_back(m.major[i]);
            minor.push_back(m.minor[i]);
        }
        double bar = 0.0;
        TimeToDoubling ttd;
        try {
            const auto traj = VolumeTrajectory::from_axes(days, major, minor);
            bar = compute_bar(traj);
            ttd = compute_ttd(traj);
        } catch (const ValidationError& e) {
            fail(source, m.first_line, "mouse (" + m.line_id + ", " + m.treatment + "): " + e.what());
        }
        const double primary = response == "neg_bar" ? bar : ttd.log_days;
        const double secondary = response == "neg_bar" ? ttd.log_days : bar;
        out.records.push_back({m.line_id, t, primary, secondary});
    }
    return out;
}

ResponseTable read_responses_tsv(const std::string& path, const std::string& response, const std::string& untreated_label) {
    auto in = open_input(path);
    return read_responses_tsv(in, response, untreated_label, path);
}

void write_responses_tsv(std::ostream& os, const PdxDataset& dataset) {
    os << "line_id\ttreatment\tneg_bar\tlog_ttd\n";
    for (const auto& r : dataset.records)
        os << r.line_id << '\t' << r.treatment.id << '\t' << format_cell(r.response) << '\t'
           << format_cell(r.secondary ? *r.secondary : kMissing) << '\n';
}

PdxDataset load_dataset(const std::string& features_path, const std::string& responses_path, const std::string& response,
                        const std::string& untreated_label) {
    PdxDataset d;
    d.features = read_features_tsv(features_path);
    auto table = read_responses_tsv(responses_path, response, untreated_label);
    d.treatments = std::move(table.treatments);
    d.records = std::move(table.records);
    require_valid(d);
    return d;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error(tmp.string() + ": write failed");
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    auto in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace pdxitr
