#include "evoscen/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "evoscen/errors.hpp"
#include "evoscen/nn.hpp"

namespace evoscen {

Histogram Histogram::uniform(double lo, double hi, double width) {
  if (!(width > 0.0) || !(hi > lo)) throw ConfigError("histogram: need hi > lo and width > 0");
  Histogram h;
  h.lo = lo;
  h.width = width;
  h.counts.assign(static_cast<std::size_t>(std::llround((hi - lo) / width)), 0.0);
  return h;
}

void Histogram::add(double x, double weight) {
  if (std::isnan(x) || counts.empty()) return;
  const double k = std::floor((x - lo) / width);
  const double last = static_cast<double>(counts.size() - 1);
  counts[static_cast<std::size_t>(std::clamp(k, 0.0, last))] += weight;
}

double Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

std::vector<double> Histogram::probabilities(double eps) const {
  const double t = total();
  if (!(t > 0.0)) throw ContractError("histogram is empty");
  const double k = static_cast<double>(counts.size());
  std::vector<double> p(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = (counts[i] / t + eps) / (1.0 + k * eps);
  return p;
}

bool Histogram::same_edges(const Histogram& o) const {
  return lo == o.lo && width == o.width && counts.size() == o.counts.size();
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("js_divergence: distributions differ in length");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0.0 ? p[i] * std::log2(p[i] / m) : 0.0;
    const double b = q[i] > 0.0 ? q[i] * std::log2(q[i] / m) : 0.0;
    js += a + b;
  }
  return std::max(0.5 * js, 0.0);
}

double js_divergence(const Histogram& p, const Histogram& q, double eps) {
  if (!p.same_edges(q)) throw ContractError("js_divergence: histograms have different bin edges");
  return js_divergence(p.probabilities(eps), q.probabilities(eps));
}

Histogram velocity_histogram() { return Histogram::uniform(0.0, 40.0, 1.0); }
Histogram lane_change_ttc_histogram() { return Histogram::uniform(0.0, 20.0, 0.5); }

double front_ttc(const std::vector<VehicleState>& vehicles, const VehicleState& ego) {
  const VehicleState* lead = nullptr;
  for (const auto& o : vehicles) {
    if (o.id == ego.id || o.lane != ego.lane || o.s < ego.s) continue;
    if (!lead || o.s < lead->s) lead = &o;
  }
  if (!lead) return kInfinity;
  const double closing = ego.v_s - lead->v_s;
  if (!(closing > 0.0)) return kInfinity;
  const double gap = lead->s - ego.s - 0.5 * (ego.length + lead->length);
  return std::max(gap, 0.0) / closing;
}

BehaviorDistributions behavior_distributions(const std::vector<const std::vector<LogStep>*>& sequences) {
  BehaviorDistributions out;
  for (const auto* seq : sequences) {
    std::map<int, LaneChange> previous;
    for (const auto& step : *seq) {
      for (const auto& v : step.vehicles) {
        if (v.role != Role::BV) continue;
        out.velocity.add(v.v_s);
        const auto it = step.decisions.find(v.id);
        const LaneChange now = it == step.decisions.end() ? LaneChange::Keep : it->second;
        const auto prev = previous.find(v.id);
        const bool started = now != LaneChange::Keep && (prev == previous.end() || prev->second == LaneChange::Keep);
        if (started) {
          out.lane_change_ttc.add(front_ttc(step.vehicles, v));
          ++out.lane_changes;
        }
        previous[v.id] = now;
      }
    }
  }
  return out;
}

BehaviorDistributions behavior_distributions(const std::vector<ScenarioRecord>& records) {
  std::vector<const std::vector<LogStep>*> seqs;
  for (const auto& r : records) seqs.push_back(&r.window);
  return behavior_distributions(seqs);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  double x = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  auto res = std::from_chars(b, e, x);
  if (res.ec != std::errc() || res.ptr != e) throw ConfigError(where + ": bad number '" + s + "'");
  return x;
}

}  // namespace

std::vector<HighDRow> read_highd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  const auto header = split_csv(line);
  const char* names[] = {"frame", "id", "x", "y", "xVelocity", "yVelocity", "xAcceleration", "laneId"};
  std::size_t col[8];
  for (std::size_t k = 0; k < 8; ++k) {
    const auto it = std::find(header.begin(), header.end(), names[k]);
    if (it == header.end()) throw ConfigError(path.string() + ": missing column '" + names[k] + "'");
    col[k] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<HighDRow> rows;
  for (long n = 2; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(n);
    if (f.size() < header.size()) throw ConfigError(where + ": too few columns");
    HighDRow r;
    r.frame = static_cast<long>(parse_number(f[col[0]], where));
    r.id = static_cast<int>(parse_number(f[col[1]], where));
    r.x = parse_number(f[col[2]], where);
    r.y = parse_number(f[col[3]], where);
    r.x_velocity = parse_number(f[col[4]], where);
    r.y_velocity = parse_number(f[col[5]], where);
    r.x_acceleration = parse_number(f[col[6]], where);
    r.lane_id = static_cast<int>(parse_number(f[col[7]], where));
    rows.push_back(r);
  }
  return rows;
}

BehaviorDistributions highd_distributions(const std::vector<HighDRow>& rows, double vehicle_length) {
  BehaviorDistributions out;
  std::map<long, std::vector<std::size_t>> by_frame;
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.velocity.add(std::abs(rows[i].x_velocity));
    by_frame[rows[i].frame].push_back(i);
    by_id[rows[i].id].push_back(i);
  }
  for (auto& [id, idx] : by_id) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rows[a].frame < rows[b].frame; });
    for (std::size_t k = 1; k < idx.size(); ++k) {
      const HighDRow& ego = rows[idx[k]];
      if (ego.lane_id == rows[idx[k - 1]].lane_id) continue;
      const double dir = ego.x_velocity >= 0.0 ? 1.0 : -1.0;
      const HighDRow* lead = nullptr;
      for (std::size_t j : by_frame[ego.frame]) {
        const HighDRow& o = rows[j];
        if (o.id == ego.id || o.lane_id != ego.lane_id || (o.x - ego.x) * dir <= 0.0) continue;
        if (!lead || (o.x - ego.x) * dir < (lead->x - ego.x) * dir) lead = &o;
      }
      double ttc = kInfinity;
      if (lead) {
        const double closing = std::abs(ego.x_velocity) - std::abs(lead->x_velocity);
        const double gap = std::max(std::abs(lead->x - ego.x) - vehicle_length, 0.0);
        if (closing > 0.0) ttc = gap / closing;
      }
      out.lane_change_ttc.add(ttc);
      ++out.lane_changes;
    }
  }
  return out;
}

double efficiency(long n, long rounds) {
  if (rounds <= 0) throw ContractError("efficiency: rounds must be positive");
  if (n < 0) throw ContractError("efficiency: negative scenario count");
  return std::min(static_cast<double>(n) / static_cast<double>(rounds), 1.0);
}

int ring_area(const VehicleState& bv, const VehicleState& sv, const ComplexityConfig& cfg) {
  const double ds = bv.s - sv.s;
  if (std::abs(ds) > cfg.half_length) return 0;
  const bool front = ds >= 0.0;
  switch (bv.lane - sv.lane) {
    case 0: return front ? 1 : 2;
    case -1: return front ? 3 : 4;
    case 1: return front ? 5 : 6;
    case -2: return 7;
    case 2: return 8;
    default: return 0;
  }
}

int grid_area(const VehicleState& bv, const VehicleState& sv, const ComplexityConfig& cfg) {
  const double ds = bv.s - sv.s;
  const int col = bv.lane - sv.lane + 2;
  if (std::abs(ds) > cfg.half_length || col < 0 || col > 4) return 0;
  return ds >= 0.0 ? col + 1 : col + 6;
}

PositionComplexity complexity_pos(const std::vector<int>& area_counts) {
  PositionComplexity out;
  for (int c : area_counts) {
    if (c < 0) throw ContractError("complexity_pos: negative area count");
    out.counted += c;
  }
  if (out.counted == 0) {
    out.degenerate = true;
    return out;
  }
  const double n = out.counted;
  for (int c : area_counts) {
    if (c == out.counted) {
      out.value = 0.5;
      return out;
    }
  }
  for (int c : area_counts) {
    if (c > 0) out.value -= (c / n) * std::log2(c / n);
  }
  return out;
}

namespace {

const LogStep& trigger_state(const ScenarioRecord& r) {
  if (r.window.empty() || r.window.back().vehicles.empty()) throw ContractError("scenario record has no trigger state");
  return r.window.back();
}

const VehicleState& sv_of(const LogStep& s) {
  for (const auto& v : s.vehicles) {
    if (v.role == Role::SV) return v;
  }
  throw ContractError("logged step has no SV");
}

}  // namespace

PositionComplexity complexity_pos(const ScenarioRecord& record, const ComplexityConfig& cfg) {
  const LogStep& t = trigger_state(record);
  const VehicleState& sv = sv_of(t);
  std::vector<int> counts(8, 0);
  for (const auto& v : t.vehicles) {
    if (v.role != Role::BV) continue;
    if (const int a = ring_area(v, sv, cfg)) ++counts[static_cast<std::size_t>(a - 1)];
  }
  return complexity_pos(counts);
}

double complexity_act(int acting, int total, const ComplexityConfig& cfg) {
  if (total < 0 || acting < 0 || acting > total) throw ContractError("complexity_act: bad counts");
  if (total == 0) return 0.0;
  return (static_cast<double>(acting) * cfg.c_act + static_cast<double>(total - acting) * cfg.c_noact) / total;
}

double complexity_act(const ScenarioRecord& record, const ComplexityConfig& cfg) {
  const LogStep& t = trigger_state(record);
  const VehicleState& sv = sv_of(t);
  int total = 0, acting = 0;
  for (const auto& v : t.vehicles) {
    if (v.role != Role::BV || ring_area(v, sv, cfg) == 0) continue;
    ++total;
    bool acted = false;
    std::optional<int> lane;
    for (const auto& step : record.window) {
      for (const auto& w : step.vehicles) {
        if (w.id != v.id) continue;
        if (std::abs(w.a) >= cfg.accel_threshold) acted = true;
        if (lane && *lane != w.lane) acted = true;
        lane = w.lane;
      }
    }
    if (acted) ++acting;
  }
  return complexity_act(acting, total, cfg);
}

double complexity(double c_pos, double c_act, const ComplexityConfig& cfg) {
  if (!(cfg.eta_c > 0.0)) throw ConfigError("complexity: eta_c must be positive");
  return c_pos * c_act / cfg.eta_c;
}

double complexity(const ScenarioRecord& record, const ComplexityConfig& cfg) {
  return complexity(complexity_pos(record, cfg).value, complexity_act(record, cfg), cfg);
}

double model_complexity(const std::vector<ScenarioRecord>& records, const ComplexityConfig& cfg) {
  if (records.empty()) throw ContractError("model_complexity: no scenarios");
  double sum = 0.0;
  for (const auto& r : records) sum += complexity(r, cfg);
  return sum / static_cast<double>(records.size());
}

std::vector<int> adversarial_pattern(const ScenarioRecord& record, const ComplexityConfig& cfg) {
  for (const auto& step : record.window) {
    if (step.vehicles.empty() || !(step.r_coop > 0.0)) continue;
    const VehicleState& sv = sv_of(step);
    std::set<int> areas;
    for (int id : step.in_area) {
      for (const auto& v : step.vehicles) {
        if (v.id == id) {
          if (const int a = grid_area(v, sv, cfg)) areas.insert(a);
        }
      }
    }
    return {areas.begin(), areas.end()};
  }
  return {};
}

DiversityReport diversity(const std::vector<ScenarioRecord>& records, const ComplexityConfig& cfg) {
  DiversityReport out;
  for (const auto& r : records) {
    const int n = static_cast<int>(r.adversarial_participants.size());
    if (n == 0) continue;
    ++out.coop_positive;
    ++out.participant_histogram[n];
    if (n == 2) ++out.two_bv_patterns[adversarial_pattern(r, cfg)];
    if (n == 3) ++out.three_bv_patterns[adversarial_pattern(r, cfg)];
  }
  return out;
}

namespace {

using Json = nlohmann::ordered_json;

Json optional_number(const std::optional<double>& x) { return x ? Json(*x) : Json("not computed"); }

Json patterns_json(const std::map<std::vector<int>, long>& patterns) {
  long records = 0;
  Json list = Json::array();
  for (const auto& [areas, count] : patterns) {
    records += count;
    Json p;
    p["areas"] = areas;
    p["count"] = count;
    list.push_back(p);
  }
  Json j;
  j["records"] = records;
  j["distinct_patterns"] = patterns.size();
  j["patterns"] = list;
  return j;
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  Json j;
  j["schema"] = 1;
  j["kind"] = "metrics_report";
  Json fid;
  fid["js_velocity"] = optional_number(r.js_velocity);
  fid["js_lane_change_ttc"] = optional_number(r.js_lane_change_ttc);
  fid["note"] = r.fidelity_note;
  j["fidelity"] = fid;
  Json eff;
  eff["rounds"] = r.rounds;
  eff["scenarios"] = r.scenarios;
  eff["crash"] = r.crash;
  eff["near_crash"] = r.near_crash;
  eff["E"] = r.efficiency;
  j["efficiency"] = eff;
  Json cx;
  cx["C"] = optional_number(r.complexity);
  cx["degenerate_records"] = r.degenerate_records;
  j["complexity"] = cx;
  Json div;
  div["coop_positive"] = r.diversity.coop_positive;
  Json hist = Json::object();
  for (const auto& [n, count] : r.diversity.participant_histogram) hist[std::to_string(n)] = count;
  div["participants"] = hist;
  div["two_bv"] = patterns_json(r.diversity.two_bv_patterns);
  div["three_bv"] = patterns_json(r.diversity.three_bv_patterns);
  j["diversity"] = div;
  return j.dump(2) + "\n";
}

namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << x;
  return s.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::vector<double> values;
  const char* color;
  const char* name;
};

std::string bar_chart(const std::vector<Series>& series, const std::vector<std::string>& labels, const std::string& title,
                      const std::string& x_label, const std::string& y_label) {
  const double w = 640, h = 360, left = 60, right = 20, top = 40, bottom = 60;
  const double pw = w - left - right, ph = h - top - bottom;
  double peak = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) peak = std::max(peak, v);
  }
  if (peak <= 0.0) peak = 1.0;
  const std::size_t n = labels.size();
  const double slot = n ? pw / static_cast<double>(n) : pw;
  const double bar = slot * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    for (std::size_t i = 0; i < series[si].values.size() && i < n; ++i) {
      const double bh = ph * series[si].values[i] / peak;
      const double x = left + slot * static_cast<double>(i) + slot * 0.1 + bar * static_cast<double>(si);
      o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(top + ph - bh) << "\" width=\"" << fmt(bar) << "\" height=\""
        << fmt(bh) << "\" fill=\"" << series[si].color << "\"/>\n";
    }
    o << "<text x=\"" << left + pw - 120 << "\" y=\"" << top + 14 * static_cast<double>(si + 1) << "\" fill=\""
      << series[si].color << "\">" << escape(series[si].name) << "</text>\n";
  }
  const std::size_t every = std::max<std::size_t>(1, n / 10);
  for (std::size_t i = 0; i < n; i += every) {
    o << "<text x=\"" << fmt(left + slot * (static_cast<double>(i) + 0.5)) << "\" y=\"" << top + ph + 15
      << "\" text-anchor=\"middle\">" << escape(labels[i]) << "</text>\n";
  }
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << h - 15 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n";
  o << "<text x=\"15\" y=\"" << fmt(top + ph / 2) << "\" transform=\"rotate(-90 15 " << fmt(top + ph / 2)
    << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  o << "<text x=\"" << left - 5 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << format_double(peak) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::vector<double> shares(const Histogram& h) {
  const double t = h.total();
  std::vector<double> out(h.counts.size(), 0.0);
  if (t > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = h.counts[i] / t;
  }
  return out;
}

}  // namespace

std::string histogram_svg(const Histogram& generated, const std::optional<Histogram>& reference,
                          const std::string& title, const std::string& x_label) {
  std::vector<Series> series{{shares(generated), "#1f77b4", "generated"}};
  if (reference) series.push_back({shares(*reference), "#d62728", "reference"});
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < generated.counts.size(); ++i) {
    labels.push_back(format_double(generated.lo + generated.width * static_cast<double>(i)));
  }
  return bar_chart(series, labels, title, x_label, "share");
}

std::string participants_svg(const DiversityReport& report) {
  std::vector<double> values;
  std::vector<std::string> labels;
  for (const auto& [n, count] : report.participant_histogram) {
    labels.push_back(std::to_string(n));
    values.push_back(report.coop_positive ? static_cast<double>(count) / static_cast<double>(report.coop_positive) : 0.0);
  }
  return bar_chart({{values, "#2ca02c", "scenarios"}}, labels, "Adversarial BVs per scenario", "BVs", "share");
}

}  // namespace evoscen
