#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rsb/bridge.hpp"
#include "rsb/sinkhorn.hpp"
#include "rsb/types.hpp"

// Plain numeric CSV with a header row. Values are written with enough digits
// to round-trip doubles exactly.
namespace rsb::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const
    {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    }

    int require(const std::string& name) const
    {
        const int c = column(name);
        if (c < 0)
            throw IoError("CSV is missing column '" + name + "'");
        return c;
    }
};

namespace detail {

inline std::string trim(std::string s)
{
    const auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

inline std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, std::size_t line)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw IoError("line " + std::to_string(line) + ": '" + s + "' is not a number");
    return v;
}

} // namespace detail

inline Table parse(std::istream& in)
{
    Table t;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        line = detail::trim(line);
        if (line.empty())
            continue;
        if (t.header.empty()) {
            t.header = detail::split(line);
            continue;
        }
        const auto cells = detail::split(line);
        if (cells.size() != t.header.size())
            throw IoError("line " + std::to_string(no) + ": expected " + std::to_string(t.header.size()) +
                          " fields, got " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells)
            row.push_back(detail::parse_double(c, no));
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty())
        throw IoError("CSV has no header");
    return t;
}

inline Table read(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    return parse(in);
}

inline std::ofstream open_for_write(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

inline Points to_points(const Table& t)
{
    const int cx = t.require("x");
    const int cy = t.require("y");
    Points p(static_cast<Eigen::Index>(t.rows.size()), 2);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        p(static_cast<Eigen::Index>(i), 0) = t.rows[i][static_cast<std::size_t>(cx)];
        p(static_cast<Eigen::Index>(i), 1) = t.rows[i][static_cast<std::size_t>(cy)];
    }
    return p;
}

inline Points read_points(const std::filesystem::path& path)
{
    return to_points(read(path));
}

inline void write_points(std::ostream& out, const Points& p)
{
    out << "x,y\n";
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        out << p(i, 0) << ',' << p(i, 1) << '\n';
}

inline void write_points(const std::filesystem::path& path, const Points& p)
{
    auto out = open_for_write(path);
    write_points(out, p);
}

inline sinkhorn::DiscreteMeasure read_measure(const std::filesystem::path& path)
{
    const auto t = read(path);
    const int cw = t.require("weight");
    Vector w(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        w(static_cast<Eigen::Index>(i)) = t.rows[i][static_cast<std::size_t>(cw)];
    return sinkhorn::DiscreteMeasure::make(to_points(t), std::move(w));
}

inline void write_plan(const std::filesystem::path& path, const Matrix& plan)
{
    auto out = open_for_write(path);
    out << "i,j,mass\n";
    for (Eigen::Index i = 0; i < plan.rows(); ++i)
        for (Eigen::Index j = 0; j < plan.cols(); ++j)
            out << i << ',' << j << ',' << plan(i, j) << '\n';
}

// Columns t, sample_id, x, y; t is the process time of the state, rows in
// rollout order. States are multiplied by scale.
inline void write_trajectory(std::ostream& out, const bridge::Trajectory& tr, double scale = 1.0)
{
    out << "t,sample_id,x,y\n";
    const int total = tr.steps();
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        const int t = tr.direction == Direction::forward ? static_cast<int>(k) : total - static_cast<int>(k);
        const auto& s = tr.states[k];
        for (Eigen::Index i = 0; i < s.rows(); ++i)
            out << t << ',' << i << ',' << scale * s(i, 0) << ',' << scale * s(i, 1) << '\n';
    }
}

inline void write_trajectory(const std::filesystem::path& path, const bridge::Trajectory& tr, double scale = 1.0)
{
    auto out = open_for_write(path);
    write_trajectory(out, tr, scale);
}

} // namespace rsb::csv
