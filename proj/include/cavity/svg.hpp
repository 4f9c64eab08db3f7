#pragma once
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "cavity/errors.hpp"
#include "cavity/version.hpp"

namespace cavity {

// Minimal standalone SVG line/marker plot: enough to reproduce the figures
// (boundary curves, mse-vs-alpha markers, trade-off curves) without a plotting
// dependency. Pure string emission, so identical inputs give identical bytes.
class SvgFigure {
  public:
    SvgFigure(double xlo, double xhi, double ylo, double yhi, bool logx = false,
              bool logy = false, std::string title = "", std::string xlabel = "",
              std::string ylabel = "")
        : xlo_(xlo), xhi_(xhi), ylo_(ylo), yhi_(yhi), logx_(logx), logy_(logy),
          title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {
        if (!(xlo < xhi) || !(ylo < yhi))
            throw parameter_error("svg axes need lo < hi in both directions");
        if ((logx && !(xlo > 0.0)) || (logy && !(ylo > 0.0)))
            throw parameter_error("svg log axes need positive bounds");
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double width = 1.5, bool dashed = false) {
        std::string d;
        for (const auto& [x, y] : pts) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (logx_ && !(x > 0.0)) continue;
            if (logy_ && !(y > 0.0)) continue;
            d += (d.empty() ? "" : " ") + num(px(x)) + "," + num(py(y));
        }
        if (d.empty()) return;
        body_ += "  <polyline clip-path=\"url(#frame)\" fill=\"none\" stroke=\"" + color +
                 "\" stroke-width=\"" + num(width) + "\"" +
                 (dashed ? " stroke-dasharray=\"7,4\"" : "") + " points=\"" + d + "\"/>\n";
    }

    void markers(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                 double radius = 3.5) {
        for (const auto& [x, y] : pts) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (logx_ && !(x > 0.0)) continue;
            if (logy_ && !(y > 0.0)) continue;
            body_ += "  <circle clip-path=\"url(#frame)\" cx=\"" + num(px(x)) + "\" cy=\"" +
                     num(py(y)) + "\" r=\"" + num(radius) + "\" fill=\"" + color + "\"/>\n";
        }
    }

    // Vertical error bars, drawn before markers so the dots sit on top.
    void error_bars(const std::vector<std::pair<double, double>>& pts,
                    const std::vector<double>& half_heights, const std::string& color) {
        if (pts.size() != half_heights.size())
            throw parameter_error("error_bars needs one half-height per point");
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto [x, y] = pts[i];
            const double lo = y - half_heights[i], hi = y + half_heights[i];
            if (!std::isfinite(x) || !std::isfinite(lo) || !std::isfinite(hi)) continue;
            if (logx_ && !(x > 0.0)) continue;
            if (logy_ && !(lo > 0.0)) continue;
            body_ += "  <line clip-path=\"url(#frame)\" x1=\"" + num(px(x)) + "\" y1=\"" +
                     num(py(lo)) + "\" x2=\"" + num(px(x)) + "\" y2=\"" + num(py(hi)) +
                     "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
        }
    }

    void legend_entry(const std::string& label, const std::string& color) {
        legend_.emplace_back(label, color);
    }

    std::string render(const std::string& comment = "") const {
        std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out += "<!-- " + version_string() + (comment.empty() ? "" : " | " + comment) +
               " -->\n";
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) +
               "\" height=\"" + num(h_) + "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) +
               "\">\n";
        out += "  <defs><clipPath id=\"frame\"><rect x=\"" + num(ml_) + "\" y=\"" + num(mt_) +
               "\" width=\"" + num(w_ - ml_ - mr_) + "\" height=\"" + num(h_ - mt_ - mb_) +
               "\"/></clipPath></defs>\n";
        out += "  <rect width=\"" + num(w_) + "\" height=\"" + num(h_) +
               "\" fill=\"white\"/>\n";
        out += grid_and_axes();
        out += body_;
        out += labels_and_legend();
        return out + "</svg>\n";
    }

  private:
    static std::string num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        std::string s(buf);
        if (s.size() > 3 && s.substr(s.size() - 3) == ".00") s.resize(s.size() - 3);
        return s;
    }

    static std::string label(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return buf;
    }

    double tx(double x) const {
        return logx_ ? (std::log10(x) - std::log10(xlo_)) / (std::log10(xhi_) - std::log10(xlo_))
                     : (x - xlo_) / (xhi_ - xlo_);
    }
    double ty(double y) const {
        return logy_ ? (std::log10(y) - std::log10(ylo_)) / (std::log10(yhi_) - std::log10(ylo_))
                     : (y - ylo_) / (yhi_ - ylo_);
    }
    double px(double x) const { return ml_ + tx(x) * (w_ - ml_ - mr_); }
    double py(double y) const { return h_ - mb_ - ty(y) * (h_ - mt_ - mb_); }

    static std::vector<double> ticks(double lo, double hi, bool log) {
        std::vector<double> out;
        if (log) {
            for (int e = static_cast<int>(std::ceil(std::log10(lo) - 1e-9));
                 std::pow(10.0, e) <= hi * (1.0 + 1e-9); ++e)
                out.push_back(std::pow(10.0, e));
            return out;
        }
        const double span = hi - lo;
        double step = std::pow(10.0, std::floor(std::log10(span)));
        if (span / step < 2.0)
            step /= 5.0;
        else if (span / step < 4.0)
            step /= 2.0;
        for (double v = std::ceil(lo / step - 1e-9) * step; v <= hi * (1.0 + 1e-9) + step * 1e-9;
             v += step)
            out.push_back(std::fabs(v) < step * 1e-9 ? 0.0 : v);
        return out;
    }

    std::string grid_and_axes() const {
        std::string out;
        for (double v : ticks(xlo_, xhi_, logx_)) {
            const std::string x = num(px(v));
            out += "  <line x1=\"" + x + "\" y1=\"" + num(mt_) + "\" x2=\"" + x + "\" y2=\"" +
                   num(h_ - mb_) + "\" stroke=\"#dddddd\" stroke-width=\"0.7\"/>\n";
            out += "  <text x=\"" + x + "\" y=\"" + num(h_ - mb_ + 17.0) +
                   "\" font-size=\"11\" text-anchor=\"middle\">" + label(v) + "</text>\n";
        }
        for (double v : ticks(ylo_, yhi_, logy_)) {
            const std::string y = num(py(v));
            out += "  <line x1=\"" + num(ml_) + "\" y1=\"" + y + "\" x2=\"" + num(w_ - mr_) +
                   "\" y2=\"" + y + "\" stroke=\"#dddddd\" stroke-width=\"0.7\"/>\n";
            out += "  <text x=\"" + num(ml_ - 6.0) + "\" y=\"" + y +
                   "\" font-size=\"11\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
                   label(v) + "</text>\n";
        }
        out += "  <rect x=\"" + num(ml_) + "\" y=\"" + num(mt_) + "\" width=\"" +
               num(w_ - ml_ - mr_) + "\" height=\"" + num(h_ - mt_ - mb_) +
               "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
        return out;
    }

    std::string labels_and_legend() const {
        std::string out;
        if (!title_.empty())
            out += "  <text x=\"" + num(0.5 * w_) + "\" y=\"" + num(mt_ - 10.0) +
                   "\" font-size=\"14\" text-anchor=\"middle\">" + title_ + "</text>\n";
        if (!xlabel_.empty())
            out += "  <text x=\"" + num(0.5 * w_) + "\" y=\"" + num(h_ - 12.0) +
                   "\" font-size=\"12\" text-anchor=\"middle\">" + xlabel_ + "</text>\n";
        if (!ylabel_.empty())
            out += "  <text x=\"16\" y=\"" + num(0.5 * h_) +
                   "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
                   num(0.5 * h_) + ")\">" + ylabel_ + "</text>\n";
        double y = mt_ + 18.0;
        for (const auto& [text, color] : legend_) {
            const double x0 = w_ - mr_ - 150.0;
            out += "  <line x1=\"" + num(x0) + "\" y1=\"" + num(y - 4.0) + "\" x2=\"" +
                   num(x0 + 24.0) + "\" y2=\"" + num(y - 4.0) + "\" stroke=\"" + color +
                   "\" stroke-width=\"2\"/>\n";
            out += "  <text x=\"" + num(x0 + 30.0) + "\" y=\"" + num(y) +
                   "\" font-size=\"11\">" + text + "</text>\n";
            y += 16.0;
        }
        return out;
    }

    double xlo_, xhi_, ylo_, yhi_;
    bool logx_, logy_;
    std::string title_, xlabel_, ylabel_;
    std::vector<std::pair<std::string, std::string>> legend_;
    std::string body_;
    const double w_ = 720.0, h_ = 540.0, ml_ = 72.0, mr_ = 24.0, mt_ = 42.0, mb_ = 56.0;
};

} // namespace cavity
