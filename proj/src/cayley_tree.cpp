#include "subdyn/cayley_tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "subdyn/errors.hpp"
#include "subdyn/operators.hpp"

namespace subdyn::tree {

namespace {

// Exponents are kept within these bounds of the reference before the sum tree
// is rebuilt around a new one.
constexpr double kMaxExponent = 600.0;
constexpr double kMinTotal = 1e-250;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_number(const std::string& s, const std::string& whole) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::BadConfig, "bad number in distribution '" + whole + "'");
  }
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian(double mean, double sigma) {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Distribution Distribution::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) args.push_back(parse_number(item, text));
  }
  Distribution d;
  auto need = [&](std::size_t n) {
    if (args.size() != n) throw Error(ErrorKind::BadConfig, "distribution '" + text + "' needs " + std::to_string(n) + " parameters");
  };
  if (name == "uniform") {
    need(2);
    d = {Kind::Uniform, args[0], args[1]};
  } else if (name == "gaussian") {
    need(2);
    d = {Kind::Gaussian, args[0], args[1]};
  } else if (name == "constant") {
    need(1);
    d = {Kind::Constant, args[0], 0.0};
  } else if (name == "matrix") {
    need(2);
    d = {Kind::Matrix, args[0], args[1]};
  } else {
    throw Error(ErrorKind::BadConfig, "unknown distribution '" + text + "'");
  }
  d.validate();
  return d;
}

std::string Distribution::str() const {
  switch (kind) {
    case Kind::Uniform: return "uniform:" + fmt(a) + "," + fmt(b);
    case Kind::Gaussian: return "gaussian:" + fmt(a) + "," + fmt(b);
    case Kind::Constant: return "constant:" + fmt(a);
    case Kind::Matrix: return "matrix:" + fmt(a) + "," + fmt(b);
  }
  return "?";
}

void Distribution::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) throw Error(ErrorKind::BadConfig, "distribution parameters must be finite");
  if ((kind == Kind::Uniform || kind == Kind::Matrix) && b < a) {
    throw Error(ErrorKind::BadConfig, "uniform range must have lo <= hi");
  }
  if (kind == Kind::Gaussian && b < 0.0) throw Error(ErrorKind::BadConfig, "gaussian sigma must be >= 0");
}

std::string to_string(GrowthMode m) { return m == GrowthMode::Bare ? "bare" : "shifted"; }

GrowthMode parse_growth_mode(const std::string& text) {
  if (text == "bare") return GrowthMode::Bare;
  if (text == "shifted") return GrowthMode::Shifted;
  throw Error(ErrorKind::BadConfig, "mode must be bare or shifted, got '" + text + "'");
}

void TreeConfig::validate() const {
  if (m < 2) throw Error(ErrorKind::BadConfig, "branching number m must be >= 2");
  if (steps < 1) throw Error(ErrorKind::BadConfig, "steps must be >= 1");
  if (!std::isfinite(beta_proj)) throw Error(ErrorKind::BadConfig, "beta_proj must be finite");
  energy_dist.validate();
  shift_dist.validate();
  if (energy_dist.kind == Distribution::Kind::Matrix) {
    throw Error(ErrorKind::BadConfig, "matrix distribution is only valid for shifts");
  }
}

TreeState::TreeState(const TreeConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  const Index capacity = 1 + static_cast<Index>(cfg_.m) * cfg_.steps;
  while (leaves_ < capacity) leaves_ *= 2;
  sum_.assign(static_cast<std::size_t>(2 * leaves_), 0.0);
  nodes_.reserve(static_cast<std::size_t>(capacity));
  active_.reserve(static_cast<std::size_t>(capacity));

  nodes_.push_back(make_node(0, std::nullopt, 0));
  active_.push_back(1);
  interface_count_ = 1;
  interface_theta_sum_ = nodes_[0].theta;
  reference_ = exponent(nodes_[0]);
  set_weight(0, 1.0);
}

Node TreeState::make_node(Index id, std::optional<Index> parent, long t) {
  Node n;
  n.id = id;
  n.parent = parent;
  n.arrival_time = t;
  const Distribution& e = cfg_.energy_dist;
  switch (e.kind) {
    case Distribution::Kind::Uniform: n.z0 = rng_.uniform(e.a, e.b); break;
    case Distribution::Kind::Gaussian: n.z0 = rng_.gaussian(e.a, e.b); break;
    case Distribution::Kind::Constant: n.z0 = e.a; break;
    case Distribution::Kind::Matrix: break;
  }
  if (cfg_.mode == GrowthMode::Shifted) {
    const Distribution& s = cfg_.shift_dist;
    switch (s.kind) {
      case Distribution::Kind::Uniform: n.shift = rng_.uniform(s.a, s.b); break;
      case Distribution::Kind::Gaussian: n.shift = rng_.gaussian(s.a, s.b); break;
      case Distribution::Kind::Constant: n.shift = s.a; break;
      case Distribution::Kind::Matrix: {
        Matrix h0 = Matrix::Zero(2, 2), h1(2, 2);
        h0(0, 0) = n.z0;
        h0(1, 1) = rng_.uniform(s.a, s.b);
        h1 << 0.0, 1.0, 1.0, 0.0;
        static const OrthogonalProjector p = make_projector(2, {0});
        n.shift = effective_node_energy(HermitianOperator(h0), HermitianOperator(h1), p, 0).shift;
        break;
      }
    }
  }
  n.theta = n.z0 + n.shift;
  return n;
}

double TreeState::exponent(const Node& n) const {
  const double b = cfg_.mode == GrowthMode::Bare ? cfg_.beta_proj : 0.5 * cfg_.beta_proj;
  const double sign = cfg_.invert_sign ? 1.0 : -1.0;
  return sign * b * n.theta;
}

void TreeState::set_weight(Index id, double w) {
  Index i = leaves_ + id;
  sum_[static_cast<std::size_t>(i)] = w;
  for (i /= 2; i >= 1; i /= 2) {
    sum_[static_cast<std::size_t>(i)] = sum_[static_cast<std::size_t>(2 * i)] + sum_[static_cast<std::size_t>(2 * i + 1)];
  }
}

void TreeState::rebuild(double new_reference) {
  reference_ = new_reference;
  std::fill(sum_.begin(), sum_.end(), 0.0);
  for (const Node& n : nodes_) {
    if (active_[static_cast<std::size_t>(n.id)]) {
      sum_[static_cast<std::size_t>(leaves_ + n.id)] = std::exp(exponent(n) - reference_);
    }
  }
  for (Index i = leaves_ - 1; i >= 1; --i) {
    sum_[static_cast<std::size_t>(i)] = sum_[static_cast<std::size_t>(2 * i)] + sum_[static_cast<std::size_t>(2 * i + 1)];
  }
}

bool TreeState::in_interface(Index id) const {
  return id >= 0 && id < static_cast<Index>(active_.size()) && active_[static_cast<std::size_t>(id)];
}

std::vector<Index> TreeState::interface_ids() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(interface_count_));
  for (std::size_t i = 0; i < active_.size(); ++i)
    if (active_[i]) out.push_back(static_cast<Index>(i));
  return out;
}

double TreeState::interface_mean_theta() const {
  return interface_count_ > 0 ? interface_theta_sum_ / static_cast<double>(interface_count_) : 0.0;
}

StepRecord TreeState::step() {
  if (interface_count_ == 0) throw Error(ErrorKind::EmptyInterface, "no active nodes");
  StepRecord rec;
  rec.step = time_ + 1;
  rec.interface_size = interface_count_;
  rec.interface_mean_theta = interface_mean_theta();

  if (!(sum_[1] > kMinTotal)) {
    double best = -std::numeric_limits<double>::infinity();
    for (const Node& n : nodes_)
      if (active_[static_cast<std::size_t>(n.id)]) best = std::max(best, exponent(n));
    rebuild(best);
  }

  double target = rng_.uniform() * sum_[1];
  Index i = 1;
  while (i < leaves_) {
    const double left = sum_[static_cast<std::size_t>(2 * i)];
    const double right = sum_[static_cast<std::size_t>(2 * i + 1)];
    if (target < left || !(right > 0.0)) {
      i = 2 * i;
    } else {
      target -= left;
      i = 2 * i + 1;
    }
  }
  const Index chosen = i - leaves_;
  rec.chosen_id = chosen;
  rec.chosen_theta = nodes_[static_cast<std::size_t>(chosen)].theta;

  active_[static_cast<std::size_t>(chosen)] = 0;
  set_weight(chosen, 0.0);
  interface_theta_sum_ -= rec.chosen_theta;
  --interface_count_;

  ++time_;
  bool needs_rebuild = false;
  double top = reference_;
  for (int c = 0; c < cfg_.m; ++c) {
    const Index id = static_cast<Index>(nodes_.size());
    nodes_.push_back(make_node(id, chosen, time_));
    active_.push_back(1);
    ++interface_count_;
    interface_theta_sum_ += nodes_.back().theta;
    const double x = exponent(nodes_.back());
    if (x - reference_ > kMaxExponent) {
      needs_rebuild = true;
      top = std::max(top, x);
    } else {
      set_weight(id, std::exp(x - reference_));
    }
  }
  if (needs_rebuild) rebuild(top);
  return rec;
}

TreeState init_tree(const TreeConfig& cfg) { return TreeState(cfg); }

std::vector<double> growth_probabilities(const std::vector<double>& energies, double beta_proj,
                                         GrowthMode mode, bool invert_sign) {
  if (energies.empty()) throw Error(ErrorKind::EmptyInterface, "no active nodes");
  const double b = (mode == GrowthMode::Bare ? beta_proj : 0.5 * beta_proj) * (invert_sign ? 1.0 : -1.0);
  std::vector<double> x(energies.size());
  for (std::size_t k = 0; k < energies.size(); ++k) x[k] = b * energies[k];
  const double top = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double& v : x) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : x) v /= total;
  return x;
}

std::vector<double> growth_probabilities(const TreeState& state, double beta_proj, GrowthMode mode,
                                         bool invert_sign) {
  std::vector<double> e;
  for (Index id : state.interface_ids()) {
    const Node& n = state.nodes()[static_cast<std::size_t>(id)];
    e.push_back(mode == GrowthMode::Bare ? n.z0 : n.theta);
  }
  return growth_probabilities(e, beta_proj, mode, invert_sign);
}

NodeEnergy effective_node_energy(const HermitianOperator& h0, const HermitianOperator& h1,
                                 const OrthogonalProjector& p, Index n) {
  if (n < 0 || n >= p.rank()) throw Error(ErrorKind::IndexOutOfRange, "branch index out of range");
  const auto levels = theta_strong_coupling(h0, h1, p);
  const auto& lv = levels[static_cast<std::size_t>(n)];
  return {lv.z0, lv.theta.real(), lv.theta.real() - lv.z0};
}

GrowthStats simulate(const TreeConfig& cfg, int histogram_bins) {
  TreeState state(cfg);
  GrowthStats stats;
  stats.steps.reserve(static_cast<std::size_t>(cfg.steps));
  for (long t = 0; t < cfg.steps; ++t) stats.steps.push_back(state.step());
  stats.nodes = state.nodes();
  stats.final_interface_size = state.interface_size();

  std::vector<long> depth(stats.nodes.size(), 0);
  long max_depth = 0;
  for (const Node& n : stats.nodes) {
    if (n.parent) depth[static_cast<std::size_t>(n.id)] = depth[static_cast<std::size_t>(*n.parent)] + 1;
    max_depth = std::max(max_depth, depth[static_cast<std::size_t>(n.id)]);
  }
  stats.depth_profile.assign(static_cast<std::size_t>(max_depth + 1), 0);
  for (long d : depth) ++stats.depth_profile[static_cast<std::size_t>(d)];

  const auto ids = state.interface_ids();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index id : ids) {
    lo = std::min(lo, stats.nodes[static_cast<std::size_t>(id)].theta);
    hi = std::max(hi, stats.nodes[static_cast<std::size_t>(id)].theta);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const int bins = std::max(1, histogram_bins);
  stats.histogram_lo = lo;
  stats.histogram_hi = hi;
  stats.interface_histogram.assign(static_cast<std::size_t>(bins), 0);
  for (Index id : ids) {
    const double th = stats.nodes[static_cast<std::size_t>(id)].theta;
    int b = static_cast<int>((th - lo) / (hi - lo) * bins);
    ++stats.interface_histogram[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return stats;
}

std::string steps_csv(const GrowthStats& stats) {
  std::string out = "step,chosen_id,chosen_theta,interface_size,interface_mean_theta\n";
  for (const StepRecord& r : stats.steps) {
    out += std::to_string(r.step) + "," + std::to_string(r.chosen_id) + "," + fmt(r.chosen_theta) + "," +
           std::to_string(r.interface_size) + "," + fmt(r.interface_mean_theta) + "\n";
  }
  return out;
}

std::string edges_csv(const GrowthStats& stats) {
  std::string out = "child_id,parent_id,t_i,z0,shift\n";
  for (const Node& n : stats.nodes) {
    // The root is listed with an empty parent.
    out += std::to_string(n.id) + "," + (n.parent ? std::to_string(*n.parent) : std::string()) + "," + std::to_string(n.arrival_time) + "," +
           fmt(n.z0) + "," + fmt(n.shift) + "\n";
  }
  return out;
}

}  // namespace subdyn::tree
