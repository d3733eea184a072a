#include "identikit/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "identikit/error.hpp"
#include "json.hpp"

namespace identikit {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'I', 'K', 'O', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put_le(std::ostream& out, U v) {
  char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  in.read(reinterpret_cast<char*>(b), sizeof(U));
  if (!in) fail(ErrorKind::Io, "truncated operator file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_doubles(std::ostream& out, const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_le(out, std::bit_cast<std::uint64_t>(p[i]));
}

void get_doubles(std::istream& in, double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = std::bit_cast<double>(get_le<std::uint64_t>(in));
}

json space_header(const WeightedSpace& s) {
  return json{{"label", s.label()},
              {"nodes", s.size()},
              {"dim", s.dim()},
              {"shape", s.shape()},
              {"probability", s.is_probability()},
              {"truncation_mass", s.truncation_mass()}};
}

void write_space(std::ostream& out, const WeightedSpace& s) {
  const NodeMat& n = s.nodes();
  put_doubles(out, n.data(), static_cast<std::size_t>(n.size()));
  put_doubles(out, s.weights().data(), s.size());
}

SpacePtr read_space(std::istream& in, const json& h) {
  const auto n = h.at("nodes").get<std::size_t>();
  const auto d = h.at("dim").get<std::size_t>();
  NodeMat nodes(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Vec w(static_cast<Eigen::Index>(n));
  get_doubles(in, nodes.data(), n * d);
  get_doubles(in, w.data(), n);
  WeightedSpace::Options o;
  o.shape = h.at("shape").get<std::vector<std::size_t>>();
  o.probability = h.at("probability").get<bool>();
  o.truncation_mass = h.at("truncation_mass").get<double>();
  return make_space(std::move(nodes), std::move(w), h.at("label").get<std::string>(), o);
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) fail(ErrorKind::Io, "cannot write " + path);
  return f;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string fixed(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

std::string tick_label(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

// Linear ticks at a 1-2-5 step covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char b[64];
  auto r = std::to_chars(b, b + sizeof b, x);
  return std::string(b, r.ptr);
}

void write_operator(const LinOp& op, std::ostream& out) {
  json h{{"format", "IKOP"},
         {"version", kVersion},
         {"rows", op.rows()},
         {"cols", op.cols()},
         {"domain", space_header(*op.domain())},
         {"codomain", space_header(*op.codomain())}};
  const std::string text = h.dump();
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_space(out, *op.domain());
  write_space(out, *op.codomain());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m = op.matrix();
  put_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
  if (!out) fail(ErrorKind::Io, "failed writing operator");
}

void write_operator(const LinOp& op, const std::string& path) {
  auto f = open_out(path, std::ios::out | std::ios::binary);
  write_operator(op, f);
}

LinOp read_operator(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorKind::Io, "not an IKOP operator file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) fail(ErrorKind::Io, "unsupported IKOP version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(in);
  if (len > (1u << 24)) fail(ErrorKind::Io, "IKOP header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorKind::Io, "truncated operator file");
  json h;
  try {
    h = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, std::string("bad IKOP header: ") + e.what());
  }
  auto dom = read_space(in, h.at("domain"));
  auto cod = read_space(in, h.at("codomain"));
  const auto rows = h.at("rows").get<std::size_t>(), cols = h.at("cols").get<std::size_t>();
  if (rows != cod->size() || cols != dom->size()) fail(ErrorKind::Io, "IKOP header dimensions disagree");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(static_cast<Eigen::Index>(rows),
                                                                          static_cast<Eigen::Index>(cols));
  get_doubles(in, m.data(), rows * cols);
  return LinOp(dom, cod, Mat(m));
}

LinOp read_operator(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path);
  return read_operator(f);
}

std::string to_csv(const CsvTable& table) {
  std::string s;
  for (std::size_t i = 0; i < table.header.size(); ++i) s += (i ? "," : "") + table.header[i];
  s += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
    s += '\n';
  }
  return s;
}

void write_csv(const CsvTable& table, const std::string& path) { write_text(to_csv(table), path); }

NodeMat read_numeric_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open data file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t"), b = cell.find_last_not_of(" \t");
      const std::string c = a == std::string::npos ? "" : cell.substr(a, b - a + 1);
      double v = 0.0;
      auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || r.ec != std::errc() || r.ptr != c.data() + c.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header
      fail(ErrorKind::Io, path + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::Io, path + ":" + std::to_string(lineno) + ": column count differs from first row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Io, "data file " + path + " has no rows");
  NodeMat x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return x;
}

std::string render_svg(const Plot& plot) {
  constexpr double W = 640, H = 420, L = 78, R = 150, T = 36, B = 52;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  auto tx = [&](double v) { return plot.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
  auto drawable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!plot.log_x || x > 0) && (!plot.log_y || y > 0);
  };

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (drawable(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i])), x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
      }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double py = 0.04 * (y1 - y0);
  y0 -= py, y1 += py;

  auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\" "
       "font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<!-- data\nseries,x,y\n";
  for (const auto& s : plot.series) {
    std::string name = s.name;
    for (auto p = name.find("--"); p != std::string::npos; p = name.find("--")) name.replace(p, 2, "- -");
    std::replace(name.begin(), name.end(), ',', ';');
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      o += name + "," + format_number(s.x[i]) + "," + format_number(s.y[i]) + "\n";
  }
  o += "-->\n";
  o += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"420\" fill=\"white\"/>\n";
  o += "<text x=\"" + fixed(L + (W - L - R) / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"13\">" +
       xml_escape(plot.title) + "</text>\n";
  o += "<rect x=\"" + fixed(L) + "\" y=\"" + fixed(T) + "\" width=\"" + fixed(W - L - R) + "\" height=\"" +
       fixed(H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";

  auto axis_ticks = [&](double lo, double hi, bool log) {
    std::vector<double> t = nice_ticks(lo, hi);
    if (log && hi - lo >= 2.0) {
      t.clear();
      const double step = std::max(1.0, std::ceil((hi - lo) / 8.0));
      for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9; v += step) t.push_back(v);
    }
    return t;
  };
  auto label = [](double v, bool log) { return log ? "1e" + tick_label(v) : tick_label(v); };
  for (double v : axis_ticks(x0, x1, plot.log_x)) {
    const double X = sx(v);
    o += "<line x1=\"" + fixed(X) + "\" y1=\"" + fixed(H - B) + "\" x2=\"" + fixed(X) + "\" y2=\"" + fixed(H - B + 4) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fixed(X) + "\" y=\"" + fixed(H - B + 16) + "\" text-anchor=\"middle\">" + label(v, plot.log_x) +
         "</text>\n";
  }
  for (double v : axis_ticks(y0, y1, plot.log_y)) {
    const double Y = sy(v);
    o += "<line x1=\"" + fixed(L - 4) + "\" y1=\"" + fixed(Y) + "\" x2=\"" + fixed(L) + "\" y2=\"" + fixed(Y) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fixed(L - 7) + "\" y=\"" + fixed(Y + 4) + "\" text-anchor=\"end\">" + label(v, plot.log_y) +
         "</text>\n";
  }
  o += "<text x=\"" + fixed(L + (W - L - R) / 2) + "\" y=\"" + fixed(H - 12) + "\" text-anchor=\"middle\">" +
       xml_escape(plot.x_label) + "</text>\n";
  o += "<text transform=\"translate(16," + fixed(T + (H - T - B) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       xml_escape(plot.y_label) + "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const std::string color = palette[k % (sizeof palette / sizeof *palette)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (drawable(s.x[i], s.y[i])) pts += (pts.empty() ? "" : " ") + fixed(sx(tx(s.x[i]))) + "," + fixed(sy(ty(s.y[i])));
    o += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"" +
         (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts + "\"/>\n";
    const double ly = T + 12 + 16.0 * static_cast<double>(k);
    o += "<line x1=\"" + fixed(W - R + 10) + "\" y1=\"" + fixed(ly - 4) + "\" x2=\"" + fixed(W - R + 30) + "\" y2=\"" +
         fixed(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"1.5\"" + (s.dashed ? " stroke-dasharray=\"5,3\"" : "") +
         "/>\n";
    o += "<text x=\"" + fixed(W - R + 34) + "\" y=\"" + fixed(ly) + "\">" + xml_escape(s.name) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

void write_svg(const Plot& plot, const std::string& path) { write_text(render_svg(plot), path); }

void write_text(const std::string& text, const std::string& path) {
  auto f = open_out(path, std::ios::out | std::ios::binary);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) fail(ErrorKind::Io, "failed writing " + path);
}

}  // namespace identikit
