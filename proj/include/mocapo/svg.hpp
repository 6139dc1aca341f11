#pragma once

// Minimal SVG line and staircase plots. CSV stays the canonical output.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mocapo {

class SvgPlot {
public:
    struct Series {
        std::string name;
        std::vector<std::pair<double, double>> points;
        bool staircase{false};
    };

    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel))
    {
    }

    void add(Series s) { series_.push_back(std::move(s)); }

    [[nodiscard]] std::string render(int width = 640, int height = 420) const
    {
        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        for (auto const& s : series_) {
            for (auto const& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) { continue; }
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
        if (!std::isfinite(x0)) { x0 = 0, x1 = 1, y0 = 0, y1 = 1; }
        if (x1 <= x0) { x1 = x0 + 1; }
        if (y1 <= y0) { y1 = y0 + 1; }
        double const left = 70, right = 150, top = 40, bottom = 50;
        double const pw = width - left - right;
        double const ph = height - top - bottom;
        auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
        auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

        static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
        std::ostringstream o;
        o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
        o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title_) << "</text>\n";
        o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
          << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            double const fx = x0 + (x1 - x0) * i / 4.0;
            double const fy = y0 + (y1 - y0) * i / 4.0;
            o << "<text x=\"" << sx(fx) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\" font-size=\"10\">" << fx
              << "</text>\n";
            o << "<text x=\"" << left - 6 << "\" y=\"" << sy(fy) + 3 << "\" text-anchor=\"end\" font-size=\"10\">" << fy
              << "</text>\n";
        }
        o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
          << escape(xlabel_) << "</text>\n";
        o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
          << top + ph / 2 << ")\">" << escape(ylabel_) << "</text>\n";

        for (std::size_t k = 0; k < series_.size(); ++k) {
            auto const& s = series_[k];
            auto const* color = colors[k % std::size(colors)];
            std::ostringstream path;
            bool first = true;
            double py = 0;
            for (auto const& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) { continue; }
                if (first) { path << "M" << sx(x) << "," << sy(y); }
                else if (s.staircase) { path << " L" << sx(x) << "," << sy(py) << " L" << sx(x) << "," << sy(y); }
                else { path << " L" << sx(x) << "," << sy(y); }
                first = false;
                py = y;
            }
            o << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
            o << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 14 + 16 * static_cast<double>(k) << "\" font-size=\"11\" fill=\""
              << color << "\">" << escape(s.name) << "</text>\n";
        }
        o << "</svg>\n";
        return o.str();
    }

private:
    static std::string escape(std::string const& s)
    {
        std::string out;
        for (char c : s) {
            switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
            }
        }
        return out;
    }

    std::string title_;
    std::string xlabel_;
    std::string ylabel_;
    std::vector<Series> series_;
};

} // namespace mocapo
