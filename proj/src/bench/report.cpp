#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tabseq/bench.h"
#include "tabseq/data.h"
#include "tabseq/error.h"

namespace tabseq::bench {

using nlohmann::json;

namespace {

const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  const double a = std::abs(v);
  if (a >= 1e9) std::snprintf(buf, sizeof buf, "%.3gG", v / 1e9);
  else if (a >= 1e6) std::snprintf(buf, sizeof buf, "%.3gM", v / 1e6);
  else if (a >= 1e3) std::snprintf(buf, sizeof buf, "%.3gk", v / 1e3);
  else std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out.push_back(c);
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Panel {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
  bool logx = false, logy = false;
};

struct Frame {
  double x0, y0, w, h;
  double xmin, xmax, ymin, ymax;
  bool logx, logy;

  double px(double v) const {
    const double t = logx ? (std::log(v) - std::log(xmin)) / (std::log(xmax) - std::log(xmin)) : (v - xmin) / (xmax - xmin);
    return x0 + t * w;
  }
  double py(double v) const {
    const double t = logy ? (std::log(v) - std::log(ymin)) / (std::log(ymax) - std::log(ymin)) : (v - ymin) / (ymax - ymin);
    return y0 + h - t * h;
  }
};

std::vector<double> ticks(double lo, double hi, bool log) {
  std::vector<double> t;
  if (log) {
    for (double p = std::pow(10.0, std::floor(std::log10(lo))); p <= hi * 1.0001; p *= 10) {
      if (p >= lo * 0.9999) t.push_back(p);
    }
    if (t.size() < 2) t = {lo, hi};
    return t;
  }
  const double span = hi - lo;
  const double raw = span / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double step = raw / mag < 2 ? 2 * mag : raw / mag < 5 ? 5 * mag : 10 * mag;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

void draw_panel(std::ostringstream& svg, const Panel& p, double ox, double oy, double width, double height) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : p.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!p.logy) ymin = std::min(ymin, 0.0);
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  if (p.logy) ymin /= 1.5, ymax *= 1.5;
  else ymax *= 1.05;

  Frame f{ox + 70, oy + 30, width - 190, height - 80, xmin, xmax, ymin, ymax, p.logx, p.logy};
  svg << "<text x=\"" << ox + width / 2 - 60 << "\" y=\"" << oy + 18 << "\" font-size=\"14\">" << escape(p.title)
      << "</text>\n";
  svg << "<rect x=\"" << f.x0 << "\" y=\"" << f.y0 << "\" width=\"" << f.w << "\" height=\"" << f.h
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double t : ticks(xmin, xmax, p.logx)) {
    const double x = f.px(t);
    svg << "<line x1=\"" << x << "\" y1=\"" << f.y0 + f.h << "\" x2=\"" << x << "\" y2=\"" << f.y0 + f.h + 4
        << "\" stroke=\"#333\"/><text x=\"" << x - 10 << "\" y=\"" << f.y0 + f.h + 17 << "\" font-size=\"10\">"
        << short_num(t) << "</text>\n";
  }
  for (double t : ticks(ymin, ymax, p.logy)) {
    const double y = f.py(t);
    svg << "<line x1=\"" << f.x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << f.x0 << "\" y2=\"" << y
        << "\" stroke=\"#333\"/><text x=\"" << f.x0 - 45 << "\" y=\"" << y + 3 << "\" font-size=\"10\">"
        << short_num(t) << "</text>\n";
  }
  svg << "<text x=\"" << f.x0 + f.w / 2 - 20 << "\" y=\"" << f.y0 + f.h + 35 << "\" font-size=\"12\">"
      << escape(p.xlabel) << "</text>\n";
  svg << "<text x=\"" << ox + 12 << "\" y=\"" << f.y0 + f.h / 2 + 40 << "\" font-size=\"12\" transform=\"rotate(-90 "
      << ox + 12 << " " << f.y0 + f.h / 2 + 40 << ")\">" << escape(p.ylabel) << "</text>\n";

  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& s = p.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) svg << f.px(s.x[i]) << "," << f.py(s.y[i]) << " ";
    svg << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      svg << "<circle cx=\"" << f.px(s.x[i]) << "\" cy=\"" << f.py(s.y[i]) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    const double ly = f.y0 + 10 + 16 * static_cast<double>(k);
    svg << "<rect x=\"" << f.x0 + f.w + 10 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color
        << "\"/><text x=\"" << f.x0 + f.w + 24 << "\" y=\"" << ly + 1 << "\" font-size=\"11\">" << escape(s.name)
        << "</text>\n";
  }
}

std::string render(const std::vector<Panel>& panels) {
  const double pw = 560, ph = 380;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << pw * static_cast<double>(panels.size())
      << "\" height=\"" << ph << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(svg, panels[i], pw * static_cast<double>(i), 0, pw, ph);
  svg << "</svg>\n";
  return svg.str();
}

std::string scatter(const std::vector<EfficiencyRow>& rows) {
  Panel p{"Average rank vs activation memory (circle area ~ forward time)", "peak activation bytes", "average rank",
          {}, false, false};
  for (const auto& r : rows) p.series.push_back({r.model, {static_cast<double>(r.bytes)}, {r.average_rank}});
  std::string svg = render({p});
  // Scale markers by time: replace the fixed radius after drawing.
  double tmax = 0;
  for (const auto& r : rows) tmax = std::max(tmax, r.time_ns);
  std::string out;
  std::size_t k = 0, pos = 0;
  const std::string marker = "r=\"3\"";
  for (std::size_t hit; (hit = svg.find(marker, pos)) != std::string::npos; pos = hit + marker.size()) {
    out.append(svg, pos, hit - pos);
    const double t = k < rows.size() && tmax > 0 ? rows[k].time_ns / tmax : 0.0;
    out += "r=\"" + fmt(4 + 20 * std::sqrt(t)) + "\" fill-opacity=\"0.6\"";
    ++k;
  }
  out.append(svg, pos);
  return out;
}

std::vector<Series> series_by_model(const std::vector<ProfileRecord>& recs, Axis axis,
                                    bool (*keep)(const ProfileRecord&)) {
  std::vector<Series> out;
  for (const auto& r : recs) {
    if (keep && !keep(r)) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.name == r.model; });
    if (it == out.end()) {
      out.push_back({r.model, {}, {}});
      it = out.end() - 1;
    }
    it->x.push_back(static_cast<double>(axis == Axis::kFeatures ? r.J : r.d));
    it->y.push_back(static_cast<double>(r.bytes_peak));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void write_profile_csv(const std::filesystem::path& path, const std::vector<ProfileRecord>& records) {
  std::ostringstream out;
  out << "family,J,d,N,pass,bytes_peak,bytes_retained,time_ns_median,repeats\n";
  for (const auto& r : records) {
    out << r.model << ',' << r.J << ',' << r.d << ',' << r.N << ',' << to_string(r.pass) << ',' << r.bytes_peak << ','
        << r.bytes_retained << ',' << fmt(r.time_ns_median) << ',' << r.repeats << '\n';
  }
  write_text(path, out.str());
}

std::vector<ProfileRecord> read_profile_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto doc = data::parse_csv(ss.str(), {});
  const std::vector<std::string> expected{"family", "J",  "d", "N", "pass", "bytes_peak", "bytes_retained",
                                          "time_ns_median", "repeats"};
  if (doc.header != expected) throw SchemaError("unexpected profile CSV header in " + path.string());
  std::vector<ProfileRecord> out;
  try {
    for (const auto& row : doc.rows) {
      ProfileRecord r;
      r.model = row[0];
      r.J = std::stoull(row[1]);
      r.d = std::stoull(row[2]);
      r.N = std::stoull(row[3]);
      r.pass = parse_pass(row[4]);
      r.bytes_peak = std::stoull(row[5]);
      r.bytes_retained = std::stoull(row[6]);
      r.time_ns_median = std::stod(row[7]);
      r.repeats = std::stoull(row[8]);
      out.push_back(std::move(r));
    }
  } catch (const std::logic_error& e) {
    throw SchemaError("malformed profile CSV " + path.string() + ": " + e.what());
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out_dir / name, text);
    written.push_back(out_dir / name);
  };

  const Sweep* feat_fwd = nullptr;
  const Sweep* feat_bwd = nullptr;
  const Sweep* emb = nullptr;
  for (const auto& s : report.sweeps) {
    write_profile_csv(out_dir / (s.name + ".csv"), s.records);
    written.push_back(out_dir / (s.name + ".csv"));
    if (s.axis == Axis::kEmbedding && !emb) emb = &s;
    if (s.axis == Axis::kFeatures && s.pass == PassKind::kForward && !feat_fwd) feat_fwd = &s;
    if (s.axis == Axis::kFeatures && s.pass == PassKind::kForwardBackward && !feat_bwd) feat_bwd = &s;
  }

  if (feat_fwd) {
    auto small = series_by_model(feat_fwd->records, Axis::kFeatures, [](const ProfileRecord& r) { return r.J <= 64; });
    auto large = series_by_model(feat_fwd->records, Axis::kFeatures, [](const ProfileRecord& r) { return r.J >= 64; });
    if (!small.empty()) {
      emit("memory_vs_features_small.svg",
           render({{"Activation memory, few features", "features J", "peak bytes", small, false, false}}));
    }
    if (!large.empty()) {
      emit("memory_vs_features_large.svg",
           render({{"Activation memory, many features", "features J", "peak bytes", large, true, true}}));
    }
  }
  if (emb) {
    emit("memory_vs_embedding.svg",
         render({{"Activation memory vs embedding size (J=" + std::to_string(emb->records.empty() ? 0 : emb->records[0].J) +
                      ")",
                  "embedding d", "peak bytes", series_by_model(emb->records, Axis::kEmbedding, nullptr), false,
                  false}}));
  }
  if (feat_bwd) {
    std::vector<Panel> panels;
    if (feat_fwd) {
      panels.push_back({"Forward pass", "features J", "peak bytes",
                        series_by_model(feat_fwd->records, Axis::kFeatures, nullptr), true, true});
    }
    panels.push_back({"Forward + backward pass", "features J", "peak bytes",
                      series_by_model(feat_bwd->records, Axis::kFeatures, nullptr), true, true});
    emit("backward_pass.svg", render(panels));
  }
  if (!report.efficiency.empty()) emit("rank_vs_memory.svg", scatter(report.efficiency));

  json fits = json::array();
  for (const auto& f : report.fits) {
    json pts = json::array();
    for (std::size_t i = 0; i < f.fit.x.size(); ++i) pts.push_back({f.fit.x[i], f.fit.y[i]});
    fits.push_back({{"sweep", f.sweep},
                    {"model", f.model},
                    {"measure", f.measure},
                    {"slope", f.fit.slope},
                    {"intercept", f.fit.intercept},
                    {"r2", f.fit.r2},
                    {"points", pts}});
  }
  json eff = json::array();
  for (const auto& e : report.efficiency) {
    eff.push_back({{"model", e.model}, {"average_rank", e.average_rank}, {"bytes", e.bytes}, {"time_ns", e.time_ns}});
  }
  json sweeps = json::array();
  for (const auto& sw : report.sweeps) {
    sweeps.push_back({{"name", sw.name}, {"axis", to_string(sw.axis)}, {"pass", to_string(sw.pass)},
                      {"file", sw.name + ".csv"}});
  }
  json files = json::array();
  for (const auto& p : written) files.push_back(p.filename().string());
  json summary{{"schema_version", kReportSchemaVersion},
               {"kind", "tabseq.bench"},
               {"metadata", report.metadata.is_null() ? json::object() : report.metadata},
               {"sweeps", sweeps},
               {"fits", fits},
               {"efficiency", eff},
               {"files", files}};
  emit("summary.json", summary.dump(2) + "\n");
  return written;
}

Report load_report(const std::filesystem::path& dir) {
  const auto path = dir / "summary.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json summary;
  try {
    summary = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (summary.value("kind", "") != "tabseq.bench") throw DataError(path.string() + " is not a bench summary");
  if (summary.value("schema_version", 0) != kReportSchemaVersion) {
    throw DataError(path.string() + ": unsupported schema_version");
  }
  Report report;
  try {
    report.metadata = summary.value("metadata", json::object());
    for (const auto& sw : summary.at("sweeps")) {
      Sweep s;
      s.name = sw.at("name").get<std::string>();
      s.axis = parse_axis(sw.at("axis").get<std::string>());
      s.pass = parse_pass(sw.at("pass").get<std::string>());
      s.records = read_profile_csv(dir / sw.at("file").get<std::string>());
      report.sweeps.push_back(std::move(s));
    }
    for (const auto& f : summary.at("fits")) {
      FitEntry e;
      e.sweep = f.at("sweep").get<std::string>();
      e.model = f.at("model").get<std::string>();
      e.measure = f.at("measure").get<std::string>();
      e.fit.slope = f.at("slope").get<double>();
      e.fit.intercept = f.at("intercept").get<double>();
      e.fit.r2 = f.at("r2").get<double>();
      for (const auto& p : f.at("points")) {
        e.fit.x.push_back(p.at(0).get<double>());
        e.fit.y.push_back(p.at(1).get<double>());
      }
      report.fits.push_back(std::move(e));
    }
    for (const auto& r : summary.at("efficiency")) {
      report.efficiency.push_back({r.at("model").get<std::string>(), r.at("average_rank").get<double>(),
                                   r.at("bytes").get<std::size_t>(), r.at("time_ns").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return report;
}

}  // namespace tabseq::bench
