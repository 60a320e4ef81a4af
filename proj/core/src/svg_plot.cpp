#include "dafar/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dafar {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

std::string curve_svg(const CurveResult& r, int width, int height) {
    r.check();
    const double ml = 64, mr = 16, mt = 36, mb = 48;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xlo = r.axis.empty() ? 0 : r.axis.front();
    double xhi = r.axis.empty() ? 1 : r.axis.back();
    if (xhi <= xlo) xhi = xlo + 1;
    double ylo = 0, yhi = 0;
    for (const auto& s : r.series)
        for (double v : s)
            if (std::isfinite(v)) yhi = std::max(yhi, v);
    if (std::string(r.kind) != "score_distribution" && yhi <= 1.05) yhi = 1.0;
    if (yhi <= ylo) yhi = ylo + 1;
    yhi *= 1.05;

    auto px = [&](double x) { return ml + (x - xlo) / (xhi - xlo) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ylo) / (yhi - ylo) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
       << r.kind << " (" << r.dataset << ")</text>\n";

    // axes and gridlines
    os << "<g stroke=\"#222\" stroke-width=\"1\">";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\"/>";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\"/></g>\n";
    for (int t = 0; t <= 4; ++t) {
        const double yv = ylo + (yhi - ylo) * t / 4;
        os << "<line x1=\"" << ml << "\" y1=\"" << py(yv) << "\" x2=\"" << ml + pw << "\" y2=\""
           << py(yv) << "\" stroke=\"#ddd\"/>";
        os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(yv)
           << "</text>\n";
    }
    for (size_t i = 0; i < r.axis.size(); ++i) {
        os << "<text x=\"" << px(r.axis[i]) << "\" y=\"" << mt + ph + 16
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << fmt(r.axis[i]) << "</text>\n";
    }

    // threshold marker when present
    auto it = r.notes.find("alpha");
    if (it != r.notes.end() && r.kind == "score_distribution") {
        os << "<line x1=\"" << px(it->second) << "\" y1=\"" << mt << "\" x2=\"" << px(it->second)
           << "\" y2=\"" << mt + ph << "\" stroke=\"#7a1fa2\" stroke-dasharray=\"5,4\"/>\n";
    }

    for (size_t k = 0; k < r.series.size(); ++k) {
        const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
        std::ostringstream pts;
        for (size_t i = 0; i < r.axis.size(); ++i) {
            if (!std::isfinite(r.series[k][i])) continue;
            pts << px(r.axis[i]) << ',' << py(r.series[k][i]) << ' ';
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
           << pts.str() << "\"/>\n";
        for (size_t i = 0; i < r.axis.size(); ++i) {
            if (!std::isfinite(r.series[k][i])) continue;
            os << "<circle cx=\"" << px(r.axis[i]) << "\" cy=\"" << py(r.series[k][i])
               << "\" r=\"2.5\" fill=\"" << color << "\"/>";
        }
        os << "\n<text x=\"" << ml + pw - 8 << "\" y=\"" << mt + 16 + 16 * k
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
           << "\">" << r.series_names[k] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace dafar
