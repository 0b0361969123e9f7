#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "subdyn/types.hpp"

namespace subdyn::tree {

/// 64-bit Mersenne Twister (std::mt19937_64) with portable derived draws.
/// Uniforms take the top 53 bits; Gaussians use Box-Muller with one output
/// per pair of uniforms. Both are bit-identical across standard libraries,
/// unlike std::uniform_real_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double gaussian(double mean, double sigma);

 private:
  std::mt19937_64 engine_;
};

struct Distribution {
  enum class Kind { Uniform, Gaussian, Constant, Matrix };
  Kind kind = Kind::Uniform;
  double a = 0.0;  ///< lo, mean or the constant value
  double b = 1.0;  ///< hi or sigma

  /// "uniform:a,b", "gaussian:mu,sigma", "constant:c", or for shifts
  /// "matrix:lo,hi" (effective-energy shift of a 2x2 matrix model).
  static Distribution parse(const std::string& text);
  std::string str() const;
  void validate() const;
};

enum class GrowthMode { Bare, Shifted };

std::string to_string(GrowthMode m);
GrowthMode parse_growth_mode(const std::string& text);

struct TreeConfig {
  int m = 3;
  long steps = 1000;
  double beta_proj = 0.5;
  GrowthMode mode = GrowthMode::Shifted;
  Distribution energy_dist{};
  Distribution shift_dist{};
  std::uint64_t seed = 42;
  /// Flip the sign of the Boltzmann exponent so higher energies are favoured.
  bool invert_sign = false;

  void validate() const;
};

struct Node {
  Index id = 0;
  std::optional<Index> parent;
  long arrival_time = 0;
  double z0 = 0.0;
  double shift = 0.0;
  double theta = 0.0;
};

struct StepRecord {
  long step = 0;
  Index chosen_id = 0;
  double chosen_theta = 0.0;
  /// Interface size and mean theta just before the selection.
  Index interface_size = 0;
  double interface_mean_theta = 0.0;
};

/// Growing tree with Boltzmann-weighted selection over the interface.
/// Selection weights live in a sum tree indexed by node id, so a step costs
/// O(m log n).
class TreeState {
 public:
  explicit TreeState(const TreeConfig& cfg);

  const TreeConfig& config() const { return cfg_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  long time() const { return time_; }
  Index interface_size() const { return interface_count_; }
  bool in_interface(Index id) const;
  /// Interface ids in ascending order.
  std::vector<Index> interface_ids() const;
  double interface_mean_theta() const;

  /// Grows one node and returns what was chosen.
  StepRecord step();

 private:
  double exponent(const Node& n) const;
  void set_weight(Index id, double w);
  void rebuild(double new_reference);
  Node make_node(Index id, std::optional<Index> parent, long t);

  TreeConfig cfg_;
  Rng rng_;
  std::vector<Node> nodes_;
  std::vector<char> active_;
  std::vector<double> sum_;  // heap-ordered sum tree
  Index leaves_ = 1;
  Index interface_count_ = 0;
  double interface_theta_sum_ = 0.0;
  double reference_ = 0.0;
  long time_ = 0;
};

TreeState init_tree(const TreeConfig& cfg);

/// Normalized selection probabilities, ordered like interface_ids().
/// Bare: exp(-beta z0); shifted: exp(-(beta/2) theta). Throws EmptyInterface.
std::vector<double> growth_probabilities(const TreeState& state, double beta_proj, GrowthMode mode,
                                         bool invert_sign = false);
/// Same rule applied to an explicit list of energies.
std::vector<double> growth_probabilities(const std::vector<double>& energies, double beta_proj,
                                         GrowthMode mode, bool invert_sign = false);

/// theta_n = (z_n + <phi_n|H1 Q H0 Q H1^-1|phi_n>) / 2 for the n-th eigenvector of PH0P.
struct NodeEnergy {
  double z0 = 0.0;
  double theta = 0.0;
  double shift = 0.0;  ///< theta - z0
};
NodeEnergy effective_node_energy(const HermitianOperator& h0, const HermitianOperator& h1,
                                 const OrthogonalProjector& p, Index n);

struct GrowthStats {
  std::vector<StepRecord> steps;
  std::vector<Node> nodes;
  /// Histogram of final interface theta over [lo, hi] in equal bins.
  std::vector<long> interface_histogram;
  double histogram_lo = 0.0;
  double histogram_hi = 0.0;
  /// Node count per depth (root at depth 0).
  std::vector<long> depth_profile;
  Index final_interface_size = 0;
};

GrowthStats simulate(const TreeConfig& cfg, int histogram_bins = 20);

std::string steps_csv(const GrowthStats& stats);
std::string edges_csv(const GrowthStats& stats);

}  // namespace subdyn::tree
