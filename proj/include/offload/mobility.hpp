#pragma once

// Community-based synthetic mobility, position-to-contact conversion and the
// plain-text contact trace format.
//
// Residents run random waypoint confined to their community's grid cell.
// Travellers run random waypoint over points drawn uniformly from all
// community cells, which makes them the only bridge between communities.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "offload/common.hpp"

namespace offload {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance_sq(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

struct MobilityConfig {
  double area_side = 3000.0;  // meters, square area
  std::uint32_t grid_rows = 1;
  std::uint32_t grid_cols = 1;
  std::uint32_t n_nodes = 600;
  std::uint32_t n_communities = 1;
  std::uint32_t n_travellers = 0;
  double speed_min = 1.0;   // m/s
  double speed_max = 1.18;  // m/s
  double tx_range = 30.0;   // meters
  Seconds sim_duration = 604800.0;
  Seconds sample_interval = 1.0;
  std::uint64_t rng_seed = 1;
  // Optional fixed starting points, one per node. Empty means uniform in the home cell.
  std::vector<Vec2> initial_positions;
};

struct ContactEvent {
  NodeId node_a = 0;
  NodeId node_b = 0;
  Seconds t_start = 0.0;
  Seconds t_end = 0.0;

  friend bool operator==(const ContactEvent&, const ContactEvent&) = default;
};

/// Canonical order: start time, then pair.
inline bool contact_before(const ContactEvent& lhs, const ContactEvent& rhs) {
  if (lhs.t_start != rhs.t_start) return lhs.t_start < rhs.t_start;
  if (lhs.node_a != rhs.node_a) return lhs.node_a < rhs.node_a;
  if (lhs.node_b != rhs.node_b) return lhs.node_b < rhs.node_b;
  return lhs.t_end < rhs.t_end;
}

struct ContactTrace {
  std::vector<ContactEvent> events;  // sorted by t_start
  std::uint32_t n_nodes = 0;
  Seconds duration = 0.0;
  std::string provenance;

  /// Structural equality: provenance is metadata and does not participate.
  bool same_contacts(const ContactTrace& other) const {
    return n_nodes == other.n_nodes && duration == other.duration && events == other.events;
  }
};

// Per-node position series, positions[node][sample].
using PositionSeries = std::vector<std::vector<Vec2>>;

// ---------------------------------------------------------------------------
// Presets

/// Full-scale presets `sc`, `mc2`, `mc5` and the desk-scale `*-mini` variants.
inline MobilityConfig mobility_preset(std::string_view name) {
  MobilityConfig c;
  if (name == "sc") {
    return c;
  }
  if (name == "mc2") {
    c.grid_rows = c.grid_cols = 3;
    c.n_communities = 2;
    c.n_travellers = 10;
    return c;
  }
  if (name == "mc5") {
    c.grid_rows = c.grid_cols = 6;
    c.n_communities = 5;
    c.n_travellers = 25;
    return c;
  }
  // Desk scale keeps the node density of the full presets (150 nodes on a quarter of the area).
  c.area_side = 1500.0;
  c.n_nodes = 150;
  c.sim_duration = 86400.0;
  if (name == "sc-mini") {
    return c;
  }
  if (name == "mc2-mini") {
    c.grid_rows = c.grid_cols = 3;
    c.n_communities = 2;
    c.n_travellers = 3;
    return c;
  }
  if (name == "mc5-mini") {
    c.grid_rows = c.grid_cols = 6;
    c.n_communities = 5;
    c.n_travellers = 6;
    return c;
  }
  throw ValidationError("unknown mobility preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Community geometry

struct CellRect {
  double x0, y0, x1, y1;

  Vec2 center() const { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
};

inline CellRect grid_cell(const MobilityConfig& c, std::uint32_t index) {
  const double w = c.area_side / c.grid_cols;
  const double h = c.area_side / c.grid_rows;
  const std::uint32_t row = index / c.grid_cols;
  const std::uint32_t col = index % c.grid_cols;
  return {col * w, row * h, (col + 1) * w, (row + 1) * h};
}

inline double rect_gap(const CellRect& a, const CellRect& b) {
  const double dx = std::max({0.0, a.x0 - b.x1, b.x0 - a.x1});
  const double dy = std::max({0.0, a.y0 - b.y1, b.y0 - a.y1});
  return std::hypot(dx, dy);
}

/// Grid cells hosting the communities, chosen by greedy farthest-point selection
/// starting from cell 0 (lowest index wins ties).
inline std::vector<std::uint32_t> community_cells(const MobilityConfig& c) {
  const std::uint32_t n_cells = c.grid_rows * c.grid_cols;
  std::vector<std::uint32_t> chosen{0};
  while (chosen.size() < c.n_communities) {
    double best = -1.0;
    std::uint32_t best_cell = 0;
    for (std::uint32_t cell = 0; cell < n_cells; ++cell) {
      if (std::find(chosen.begin(), chosen.end(), cell) != chosen.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (auto other : chosen) {
        nearest = std::min(nearest, distance_sq(grid_cell(c, cell).center(), grid_cell(c, other).center()));
      }
      if (nearest > best) {
        best = nearest;
        best_cell = cell;
      }
    }
    chosen.push_back(best_cell);
  }
  return chosen;
}

inline void validate(const MobilityConfig& c) {
  auto fail = [](const std::string& msg) { throw ValidationError("mobility config: " + msg); };
  if (c.n_nodes == 0) fail("n_nodes must be > 0");
  if (!(c.area_side > 0.0)) fail("area_side must be > 0");
  if (c.grid_rows == 0 || c.grid_cols == 0) fail("cell grid must have at least one row and column");
  if (c.n_communities == 0) fail("n_communities must be > 0");
  if (c.n_communities > c.grid_rows * c.grid_cols) fail("n_communities exceeds the number of grid cells");
  if (c.n_travellers > c.n_nodes) fail("n_travellers exceeds n_nodes");
  if (c.speed_min < 0.0 || c.speed_max < c.speed_min) fail("speed range must satisfy 0 <= min <= max");
  if (!(c.tx_range > 0.0)) fail("tx_range must be > 0");
  if (!(c.sim_duration > 0.0)) fail("sim_duration must be > 0");
  if (!(c.sample_interval > 0.0)) fail("position_sample_interval must be > 0");
  if (!c.initial_positions.empty() && c.initial_positions.size() != c.n_nodes) {
    fail("initial_positions must list one point per node");
  }
  const auto cells = community_cells(c);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      if (rect_gap(grid_cell(c, cells[i]), grid_cell(c, cells[j])) <= c.tx_range) {
        fail("community cells " + std::to_string(cells[i]) + " and " + std::to_string(cells[j]) +
             " are not separated by more than tx_range");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Contact detection

/// Streams position snapshots and produces merged contact intervals.
/// A pair is in contact at sample k iff its distance is <= range; runs of
/// consecutive in-contact samples k0..k1 become one event [k0*dt, (k1+1)*dt).
class ContactDetector {
 public:
  ContactDetector(double tx_range, Seconds sample_interval)
      : range_sq_(tx_range * tx_range), range_(tx_range), dt_(sample_interval) {}

  void feed(std::span<const Vec2> positions) {
    current_.clear();
    order_.resize(positions.size());
    for (NodeId i = 0; i < positions.size(); ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(), [&](NodeId a, NodeId b) {
      return positions[a].x < positions[b].x || (positions[a].x == positions[b].x && a < b);
    });
    for (std::size_t i = 0; i < order_.size(); ++i) {
      const Vec2 p = positions[order_[i]];
      for (std::size_t j = i + 1; j < order_.size(); ++j) {
        const Vec2 q = positions[order_[j]];
        if (q.x - p.x > range_) break;
        if (distance_sq(p, q) <= range_sq_) {
          current_.push_back(pair_key(order_[i], order_[j]));
        }
      }
    }
    std::sort(current_.begin(), current_.end());

    // Merge the sorted open set with the sorted current set.
    next_open_.clear();
    std::size_t i = 0, j = 0;
    while (i < open_.size() || j < current_.size()) {
      if (j == current_.size() || (i < open_.size() && open_[i].first < current_[j])) {
        close(open_[i].first, open_[i].second, sample_);
        ++i;
      } else if (i == open_.size() || current_[j] < open_[i].first) {
        next_open_.emplace_back(current_[j], sample_);
        ++j;
      } else {
        next_open_.push_back(open_[i]);
        ++i;
        ++j;
      }
    }
    open_.swap(next_open_);
    ++sample_;
  }

  /// Close every open interval at the end of the last fed sample and return
  /// all events in canonical order.
  std::vector<ContactEvent> finish() {
    for (const auto& [key, start] : open_) close(key, start, sample_);
    open_.clear();
    std::sort(events_.begin(), events_.end(), contact_before);
    return std::move(events_);
  }

 private:
  static std::uint64_t pair_key(NodeId a, NodeId b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  void close(std::uint64_t key, std::uint64_t start, std::uint64_t end) {
    events_.push_back({static_cast<NodeId>(key >> 32), static_cast<NodeId>(key & 0xffffffffULL),
                       static_cast<double>(start) * dt_, static_cast<double>(end) * dt_});
  }

  double range_sq_;
  double range_;
  Seconds dt_;
  std::uint64_t sample_ = 0;
  std::vector<NodeId> order_;
  std::vector<std::uint64_t> current_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> open_, next_open_;
  std::vector<ContactEvent> events_;
};

inline std::vector<ContactEvent> detect_contacts(const PositionSeries& positions, double tx_range,
                                                 Seconds sample_interval) {
  if (positions.empty()) return {};
  const std::size_t n_samples = positions.front().size();
  for (std::size_t node = 0; node < positions.size(); ++node) {
    if (positions[node].size() != n_samples) {
      throw ValidationError("position series of node " + std::to_string(node) + " has " +
                            std::to_string(positions[node].size()) + " samples, expected " +
                            std::to_string(n_samples));
    }
  }
  ContactDetector detector(tx_range, sample_interval);
  std::vector<Vec2> snapshot(positions.size());
  for (std::size_t k = 0; k < n_samples; ++k) {
    for (std::size_t node = 0; node < positions.size(); ++node) snapshot[node] = positions[node][k];
    detector.feed(snapshot);
  }
  return detector.finish();
}

// ---------------------------------------------------------------------------
// Mobility generation

/// Advances every node by one sample interval per call to step().
class CommunityMobility {
 public:
  CommunityMobility(const MobilityConfig& config, std::uint64_t seed) : config_(config), rng_(seed) {
    validate(config_);
    cells_ = community_cells(config_);
    const std::uint32_t residents = config_.n_nodes - config_.n_travellers;
    nodes_.resize(config_.n_nodes);
    for (NodeId id = 0; id < config_.n_nodes; ++id) {
      Mover& m = nodes_[id];
      m.traveller = id >= residents;
      m.home = m.traveller ? pick_community() : id % config_.n_communities;
      m.pos = config_.initial_positions.empty() ? point_in(m.home) : config_.initial_positions[id];
      new_leg(m);
    }
  }

  std::uint32_t home_community(NodeId id) const { return nodes_[id].home; }
  bool is_traveller(NodeId id) const { return nodes_[id].traveller; }

  std::vector<Vec2> positions() const {
    std::vector<Vec2> out(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) out[i] = nodes_[i].pos;
    return out;
  }

  void step() {
    for (auto& m : nodes_) advance(m, config_.sample_interval);
  }

  /// Number of position samples covering [0, sim_duration).
  std::uint64_t sample_count() const {
    return static_cast<std::uint64_t>(std::ceil(config_.sim_duration / config_.sample_interval - 1e-9));
  }

 private:
  struct Mover {
    Vec2 pos;
    Vec2 target;
    double speed = 0.0;
    std::uint32_t home = 0;
    bool traveller = false;
  };

  std::uint32_t pick_community() {
    return std::uniform_int_distribution<std::uint32_t>(0, config_.n_communities - 1)(rng_);
  }

  Vec2 point_in(std::uint32_t community) {
    const CellRect r = grid_cell(config_, cells_[community]);
    return {std::uniform_real_distribution<double>(r.x0, r.x1)(rng_),
            std::uniform_real_distribution<double>(r.y0, r.y1)(rng_)};
  }

  void new_leg(Mover& m) {
    m.target = point_in(m.traveller ? pick_community() : m.home);
    m.speed = config_.speed_min == config_.speed_max
                  ? config_.speed_min
                  : std::uniform_real_distribution<double>(config_.speed_min, config_.speed_max)(rng_);
  }

  void advance(Mover& m, double dt) {
    if (m.speed <= 0.0) return;
    double budget = m.speed * dt;
    // Bounded so a degenerate zero-length leg cannot spin forever.
    for (int legs = 0; legs < 64 && budget > 0.0; ++legs) {
      const double dx = m.target.x - m.pos.x;
      const double dy = m.target.y - m.pos.y;
      const double dist = std::hypot(dx, dy);
      if (dist > budget) {
        m.pos.x += dx / dist * budget;
        m.pos.y += dy / dist * budget;
        return;
      }
      m.pos = m.target;
      budget -= dist;
      const double old_speed = m.speed;
      new_leg(m);
      if (m.speed <= 0.0) return;
      budget *= m.speed / old_speed;
    }
  }

  MobilityConfig config_;
  Rng rng_;
  std::vector<std::uint32_t> cells_;
  std::vector<Mover> nodes_;
};

inline std::string config_fingerprint(const MobilityConfig& c, std::uint64_t seed) {
  std::ostringstream os;
  os.precision(17);
  os << c.area_side << ';' << c.grid_rows << 'x' << c.grid_cols << ';' << c.n_nodes << ';' << c.n_communities
     << ';' << c.n_travellers << ';' << c.speed_min << ';' << c.speed_max << ';' << c.tx_range << ';'
     << c.sim_duration << ';' << c.sample_interval << ';' << seed;
  for (const auto& p : c.initial_positions) os << ';' << p.x << ',' << p.y;
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream tag;
  tag << "gen:" << std::hex << h;
  return tag.str();
}

/// Full position history, for tests and small configurations only.
inline PositionSeries record_positions(const MobilityConfig& config, std::uint64_t seed) {
  CommunityMobility mobility(config, seed);
  const auto n_samples = mobility.sample_count();
  PositionSeries series(config.n_nodes);
  for (auto& s : series) s.reserve(n_samples);
  for (std::uint64_t k = 0; k < n_samples; ++k) {
    if (k > 0) mobility.step();
    const auto snapshot = mobility.positions();
    for (std::size_t i = 0; i < snapshot.size(); ++i) series[i].push_back(snapshot[i]);
  }
  return series;
}

inline ContactTrace generate_trace(const MobilityConfig& config, std::uint64_t seed) {
  CommunityMobility mobility(config, seed);
  ContactDetector detector(config.tx_range, config.sample_interval);
  const auto n_samples = mobility.sample_count();
  for (std::uint64_t k = 0; k < n_samples; ++k) {
    if (k > 0) mobility.step();
    detector.feed(mobility.positions());
  }
  ContactTrace trace;
  trace.events = detector.finish();
  trace.n_nodes = config.n_nodes;
  trace.duration = config.sim_duration;
  for (auto& e : trace.events) e.t_end = std::min(e.t_end, trace.duration);
  trace.provenance = config_fingerprint(config, seed);
  return trace;
}

inline ContactTrace generate_trace(const MobilityConfig& config) { return generate_trace(config, config.rng_seed); }

// ---------------------------------------------------------------------------
// Trace file format
//
//   #nodes=<N> duration=<D>
//   <t_start> <t_end> <node_a> <node_b>
//   ...
//
// Times use the shortest decimal form that round-trips to the same double.

inline std::string format_seconds(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_trace(const ContactTrace& trace, std::ostream& out) {
  out << "#nodes=" << trace.n_nodes << " duration=" << format_seconds(trace.duration) << '\n';
  for (const auto& e : trace.events) {
    out << format_seconds(e.t_start) << ' ' << format_seconds(e.t_end) << ' ' << e.node_a << ' ' << e.node_b
        << '\n';
  }
}

namespace detail {

template <typename T>
bool parse_number(std::string_view token, T& value) {
  auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  return res.ec == std::errc{} && res.ptr == token.data() + token.size();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

inline ContactTrace read_trace(std::istream& in, std::string provenance = "stream") {
  ContactTrace trace;
  trace.provenance = std::move(provenance);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_map<std::uint64_t, double> last_end;

  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (!have_header) {
      if (tokens.size() != 2 || !tokens[0].starts_with("#nodes=") || !tokens[1].starts_with("duration=")) {
        throw ParseError(line_no, "expected header '#nodes=<N> duration=<D>'");
      }
      if (!detail::parse_number(tokens[0].substr(7), trace.n_nodes) ||
          !detail::parse_number(tokens[1].substr(9), trace.duration) || !(trace.duration > 0.0)) {
        throw ParseError(line_no, "bad header values");
      }
      have_header = true;
      continue;
    }
    if (tokens.empty() || tokens[0].starts_with("#")) continue;
    if (tokens.size() != 4) throw ParseError(line_no, "expected 't_start t_end node_a node_b'");

    ContactEvent e;
    if (!detail::parse_number(tokens[0], e.t_start) || !detail::parse_number(tokens[1], e.t_end)) {
      throw ParseError(line_no, "bad time value");
    }
    if (!detail::parse_number(tokens[2], e.node_a) || !detail::parse_number(tokens[3], e.node_b)) {
      throw ParseError(line_no, "bad node id");
    }
    if (!(e.t_end > e.t_start)) throw ParseError(line_no, "t_end must be greater than t_start");
    if (e.t_start < 0.0 || e.t_end > trace.duration) throw ParseError(line_no, "event outside [0, duration]");
    if (e.node_a >= trace.n_nodes || e.node_b >= trace.n_nodes) throw ParseError(line_no, "node id out of range");
    if (e.node_a == e.node_b) throw ParseError(line_no, "self contact");
    if (e.node_a > e.node_b) std::swap(e.node_a, e.node_b);
    if (!trace.events.empty() && e.t_start < trace.events.back().t_start) {
      throw ParseError(line_no, "events not sorted by t_start");
    }
    const std::uint64_t key = (static_cast<std::uint64_t>(e.node_a) << 32) | e.node_b;
    if (auto it = last_end.find(key); it != last_end.end() && e.t_start < it->second) {
      throw ParseError(line_no, "overlaps an earlier event of the same pair");
    }
    last_end[key] = e.t_end;
    trace.events.push_back(e);
  }
  if (!have_header) throw ParseError(line_no + 1, "missing header");
  return trace;
}

inline void save_trace(const ContactTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_trace(trace, out);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline ContactTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_trace(in, "file:" + path);
}

}  // namespace offload
