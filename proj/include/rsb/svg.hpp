#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rsb/csv.hpp"
#include "rsb/types.hpp"

// Static scatter plots. Every sample becomes one <circle>; nothing else in
// the document uses that element.
namespace rsb::svg {

struct Panel {
    std::string title;
    Points points;
};

struct Style {
    double panel_size = 240.0;
    double margin = 24.0;
    double marker_radius = 1.2;
    double marker_opacity = 0.5;
    std::string color = "#1f5fa8";
    int max_columns = 5;
};

namespace detail {

struct Bounds {
    double lo_x = -1.0, hi_x = 1.0, lo_y = -1.0, hi_y = 1.0;
};

// Shared square bounds over all panels, padded by 5%.
inline Bounds bounds_of(const std::vector<Panel>& panels)
{
    double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
    for (const auto& p : panels)
        for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
            lo_x = std::min(lo_x, p.points(i, 0));
            hi_x = std::max(hi_x, p.points(i, 0));
            lo_y = std::min(lo_y, p.points(i, 1));
            hi_y = std::max(hi_y, p.points(i, 1));
        }
    if (!std::isfinite(lo_x) || !std::isfinite(hi_x) || !std::isfinite(lo_y) || !std::isfinite(hi_y))
        return {};
    const double cx = 0.5 * (lo_x + hi_x);
    const double cy = 0.5 * (lo_y + hi_y);
    const double half = std::max({0.5 * (hi_x - lo_x), 0.5 * (hi_y - lo_y), 1e-9}) * 1.05;
    return {cx - half, cx + half, cy - half, cy + half};
}

inline std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

inline std::string render(const std::vector<Panel>& panels, const Style& style = {})
{
    const std::size_t count = std::max<std::size_t>(1, panels.size());
    const std::size_t cols = std::min<std::size_t>(count, static_cast<std::size_t>(style.max_columns));
    const std::size_t rows = (count + cols - 1) / cols;
    const double cell = style.panel_size + 2.0 * style.margin;
    const auto b = detail::bounds_of(panels);

    std::ostringstream out;
    out.precision(6);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cell * static_cast<double>(cols) << "\" height=\""
        << cell * static_cast<double>(rows) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t k = 0; k < count; ++k) {
        const double ox = cell * static_cast<double>(k % cols) + style.margin;
        const double oy = cell * static_cast<double>(k / cols) + style.margin;
        const double s = style.panel_size;
        out << "<g transform=\"translate(" << ox << ',' << oy << ")\">\n"
            << "<rect x=\"0\" y=\"0\" width=\"" << s << "\" height=\"" << s
            << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
        // Axes through the origin when it is in view.
        if (b.lo_x < 0.0 && b.hi_x > 0.0) {
            const double x0 = (0.0 - b.lo_x) / (b.hi_x - b.lo_x) * s;
            out << "<line x1=\"" << x0 << "\" y1=\"0\" x2=\"" << x0 << "\" y2=\"" << s
                << "\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n";
        }
        if (b.lo_y < 0.0 && b.hi_y > 0.0) {
            const double y0 = (b.hi_y - 0.0) / (b.hi_y - b.lo_y) * s;
            out << "<line x1=\"0\" y1=\"" << y0 << "\" x2=\"" << s << "\" y2=\"" << y0
                << "\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n";
        }
        if (k < panels.size()) {
            const auto& p = panels[k];
            if (!p.title.empty())
                out << "<text x=\"" << s / 2 << "\" y=\"-6\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                    << "font-size=\"12\">" << detail::escape(p.title) << "</text>\n";
            out << "<g fill=\"" << style.color << "\" fill-opacity=\"" << style.marker_opacity << "\">\n";
            for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
                const double px = (p.points(i, 0) - b.lo_x) / (b.hi_x - b.lo_x) * s;
                const double py = (b.hi_y - p.points(i, 1)) / (b.hi_y - b.lo_y) * s;
                out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"" << style.marker_radius << "\"/>\n";
            }
            out << "</g>\n";
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
    return out.str();
}

// A points table (x, y) gives one panel; a trajectory table (t, sample_id,
// x, y) gives one panel per distinct t in increasing order.
inline std::vector<Panel> panels_from_table(const csv::Table& table)
{
    const Points all = csv::to_points(table);
    const int ct = table.column("t");
    if (ct < 0)
        return {{"", all}};
    std::map<double, std::vector<Eigen::Index>> by_t;
    for (std::size_t i = 0; i < table.rows.size(); ++i)
        by_t[table.rows[i][static_cast<std::size_t>(ct)]].push_back(static_cast<Eigen::Index>(i));
    std::vector<Panel> panels;
    for (const auto& [t, idx] : by_t) {
        Panel p;
        std::ostringstream title;
        title << "t = " << t;
        p.title = title.str();
        p.points.resize(static_cast<Eigen::Index>(idx.size()), 2);
        for (std::size_t r = 0; r < idx.size(); ++r)
            p.points.row(static_cast<Eigen::Index>(r)) = all.row(idx[r]);
        panels.push_back(std::move(p));
    }
    return panels;
}

inline void write(const std::filesystem::path& path, const std::vector<Panel>& panels, const Style& style = {})
{
    auto out = csv::open_for_write(path);
    out << render(panels, style);
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

} // namespace rsb::svg
