#include "image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "igan/common.hpp"

namespace igan {

void write_image_grid(const std::string& path, const Tensor<float>& images, long cols) {
  IGAN_CHECK(images.rank() == 4 && (images.dim(3) == 1 || images.dim(3) == 3),
             "write_image_grid: images must be NHWC with 1 or 3 channels");
  const long n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (cols <= 0) cols = static_cast<long>(std::ceil(std::sqrt(static_cast<double>(n))));
  const long rows = (n + cols - 1) / cols;

  const long gw = cols * w, gh = rows * h;
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(gw * gh * 3), 0);
  for (long i = 0; i < n; ++i) {
    const long gy = (i / cols) * h, gx = (i % cols) * w;
    const float* src = images.data() + i * h * w * c;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        for (long ch = 0; ch < 3; ++ch) {
          const float v = src[(y * w + x) * c + (c == 3 ? ch : 0)];
          const double byte = std::clamp((static_cast<double>(v) + 1.0) * 127.5, 0.0, 255.0);
          canvas[static_cast<std::size_t>(((gy + y) * gw + gx + x) * 3 + ch)] =
              static_cast<std::uint8_t>(std::lround(byte));
        }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw DataError("cannot open for write: " + path);
  os << "P6\n" << gw << ' ' << gh << "\n255\n";
  os.write(reinterpret_cast<const char*>(canvas.data()),
           static_cast<std::streamsize>(canvas.size()));
  IGAN_CHECK(os.good(), "write_image_grid: write failed");
}

namespace {

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt_tick(double v) {
  std::ostringstream os;
  const double a = std::abs(v);
  if (v != 0.0 && (a >= 1e5 || a < 1e-3))
    os << std::scientific << std::setprecision(1) << v;
  else
    os << std::fixed << std::setprecision(a >= 100 ? 0 : 3) << v;
  std::string s = os.str();
  if (s.find('.') != std::string::npos && s.find('e') == std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series) {
  IGAN_CHECK(!series.empty(), "write_svg_chart: no series");
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    IGAN_CHECK(s.x.size() == s.y.size() && !s.x.empty(), "write_svg_chart: bad series " + s.label);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double W = 760, H = 480, L = 72, R = 180, T = 48, B = 56;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream os(path, std::ios::trunc);
  if (!os.good()) throw DataError("cannot open for write: " + path);
  os << std::setprecision(8);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << L + pw / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\""
     << " text-anchor=\"middle\" font-weight=\"bold\">" << xml_escape(title) << "</text>\n";

  const int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    const double fx = xmin + (xmax - xmin) * t / kTicks;
    const double fy = ymin + (ymax - ymin) * t / kTicks;
    os << "<line x1=\"" << px(fx) << "\" y1=\"" << T << "\" x2=\"" << px(fx) << "\" y2=\""
       << T + ph << "\" stroke=\"#e0e0e0\"/>\n"
       << "<line x1=\"" << L << "\" y1=\"" << py(fy) << "\" x2=\"" << L + pw << "\" y2=\""
       << py(fy) << "\" stroke=\"#e0e0e0\"/>\n"
       << "<text x=\"" << px(fx) << "\" y=\"" << T + ph + 18
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << fmt_tick(fx)
       << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << py(fy) + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt_tick(fy)
       << "</text>\n";
  }
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#404040\"/>\n"
     << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 14
     << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">"
     << xml_escape(x_label) << "</text>\n"
     << "<text x=\"18\" y=\"" << T + ph / 2
     << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << T + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kSeriesColors[s % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
      os << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(s);
    os << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 34
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << L + pw + 40 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(series[s].label)
       << "</text>\n";
  }
  os << "</svg>\n";
  IGAN_CHECK(os.good(), "write_svg_chart: write failed");
}

long CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<long>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw DataError("cannot open: " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size())
        throw DataError("ragged csv row in " + path + ": " + line);
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw DataError("empty csv: " + path);
  return table;
}

}  // namespace igan
