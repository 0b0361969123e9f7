#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>

#include "subdyn/cayley_tree.hpp"
#include "subdyn/errors.hpp"

using namespace subdyn;
using namespace subdyn::tree;

namespace {

TreeConfig config(int m, long steps, double beta, GrowthMode mode, std::uint64_t seed = 42) {
  TreeConfig c;
  c.m = m;
  c.steps = steps;
  c.beta_proj = beta;
  c.mode = mode;
  c.seed = seed;
  return c;
}

// Counts active ids below a given id.
struct Fenwick {
  std::vector<long> t;
  explicit Fenwick(std::size_t n) : t(n + 1, 0) {}
  void add(std::size_t i, long v) {
    for (++i; i < t.size(); i += i & (~i + 1)) t[i] += v;
  }
  long prefix(std::size_t i) const {  // sum over [0, i)
    long s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += t[i];
    return s;
  }
};

}  // namespace

TEST_CASE("rng draws are deterministic and in range") {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  // Gaussian sample moments.
  Rng g(9);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = g.gaussian(1.0, 2.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean - 1.0) < 5.0 * 2.0 / std::sqrt(n));
  CHECK(std::abs(var - 4.0) < 0.1);
}

TEST_CASE("distribution parsing") {
  const auto u = Distribution::parse("uniform:0,1");
  CHECK(u.kind == Distribution::Kind::Uniform);
  CHECK(u.b == 1.0);
  CHECK(Distribution::parse("gaussian:0.5,2").kind == Distribution::Kind::Gaussian);
  CHECK(Distribution::parse("constant:0").a == 0.0);
  CHECK(Distribution::parse("matrix:1,3").kind == Distribution::Kind::Matrix);
  CHECK(Distribution::parse(u.str()).a == u.a);
  for (const char* bad : {"uniform:1", "poisson:1", "uniform:2,1", "gaussian:0,-1", "uniform:a,b", "uniform:1,inf"}) {
    CHECK_THROWS_AS(Distribution::parse(bad), Error);
  }
}

TEST_CASE("init_tree") {
  const auto s = init_tree(config(3, 10, 0.5, GrowthMode::Shifted));
  CHECK(s.nodes().size() == 1);
  CHECK(s.interface_size() == 1);
  CHECK(s.time() == 0);
  CHECK(!s.nodes()[0].parent);
  const auto s2 = init_tree(config(3, 10, 0.5, GrowthMode::Shifted));
  CHECK(s.nodes()[0].theta == s2.nodes()[0].theta);

  try {
    init_tree(config(1, 10, 0.5, GrowthMode::Shifted));
    FAIL("m = 1 accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadConfig);
  }
  CHECK_THROWS_AS(init_tree(config(2, 0, 0.5, GrowthMode::Bare)), Error);
  auto c = config(2, 5, 0.5, GrowthMode::Bare);
  c.energy_dist = Distribution{Distribution::Kind::Matrix, 0.0, 1.0};
  CHECK_THROWS_AS(init_tree(c), Error);
}

TEST_CASE("step counts") {
  auto s = init_tree(config(3, 10, 0.5, GrowthMode::Shifted));
  s.step();
  CHECK(s.interface_size() == 3);
  CHECK(s.nodes().size() == 4);
  for (int i = 0; i < 4; ++i) s.step();
  CHECK(s.interface_size() == 11);

  // Grown nodes never come back; every non-root has one earlier parent.
  auto t = init_tree(config(2, 500, 2.0, GrowthMode::Bare, 3));
  std::vector<char> grown(1 + 2 * 500, 0);
  for (int i = 0; i < 500; ++i) {
    const auto r = t.step();
    CHECK(!grown[static_cast<std::size_t>(r.chosen_id)]);
    grown[static_cast<std::size_t>(r.chosen_id)] = 1;
    CHECK(!t.in_interface(r.chosen_id));
  }
  for (const Node& n : t.nodes()) {
    if (n.id == 0) continue;
    REQUIRE(n.parent);
    CHECK(*n.parent < n.id);
    CHECK(grown[static_cast<std::size_t>(*n.parent)]);
    CHECK(n.theta == n.z0 + n.shift);
  }
}

TEST_CASE("interface size is 1 + (m-1) t for all m") {
  for (int m : {2, 3, 5}) {
    for (std::uint64_t seed : {1ULL, 77ULL}) {
      auto s = init_tree(config(m, 10000, 1.0, GrowthMode::Shifted, seed));
      for (long t = 1; t <= 10000; ++t) {
        s.step();
        if (s.interface_size() != 1 + (m - 1) * t) {
          FAIL("interface size mismatch at t = " << t);
        }
      }
      CHECK(s.interface_ids().size() == static_cast<std::size_t>(1 + (m - 1) * 10000));
    }
  }
}

TEST_CASE("growth probabilities") {
  const auto two = growth_probabilities({0.0, 2.0}, 1.0, GrowthMode::Shifted);
  CHECK(std::abs(two[0] - 1.0 / (1.0 + std::exp(-1.0))) < 1e-15);
  CHECK(std::abs(two[0] - 0.7311) < 1e-4);
  CHECK(std::abs(two[1] - 0.2689) < 1e-4);

  for (double p : growth_probabilities({0.3, 1.7, -2.0, 5.0}, 0.0, GrowthMode::Shifted)) CHECK(p == 0.25);
  for (double p : growth_probabilities({4.0, 4.0, 4.0}, 3.0, GrowthMode::Bare)) CHECK(std::abs(p - 1.0 / 3.0) < 1e-15);

  const std::vector<double> e{0.1, 0.5, 2.0, -1.0, 3.3};
  std::vector<double> shifted = e;
  for (double& x : shifted) x += 123.0;
  const auto a = growth_probabilities(e, 1.5, GrowthMode::Bare);
  const auto b = growth_probabilities(shifted, 1.5, GrowthMode::Bare);
  CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0) < 1e-12);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);

  // Shifted mode at beta equals bare mode at beta/2 when shifts vanish.
  const auto sh = growth_probabilities(e, 3.0, GrowthMode::Shifted);
  const auto bare = growth_probabilities(e, 1.5, GrowthMode::Bare);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(sh[i] == bare[i]);

  // Sign flag reverses the preference.
  const auto inv = growth_probabilities({0.0, 2.0}, 1.0, GrowthMode::Shifted, true);
  CHECK(inv[1] > inv[0]);

  // Huge exponents stay finite.
  const auto big = growth_probabilities({-1e4, 0.0}, 10.0, GrowthMode::Bare);
  CHECK(big[0] == 1.0);
  CHECK(big[1] == 0.0);

  CHECK_THROWS_AS(growth_probabilities(std::vector<double>{}, 1.0, GrowthMode::Bare), Error);
}

TEST_CASE("growth probabilities on a state normalize") {
  auto s = init_tree(config(3, 200, 2.0, GrowthMode::Shifted, 8));
  for (int i = 0; i < 200; ++i) s.step();
  const auto p = growth_probabilities(s, 2.0, GrowthMode::Shifted);
  CHECK(p.size() == static_cast<std::size_t>(s.interface_size()));
  CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
}

TEST_CASE("zero shift reduces shifted mode to bare mode at half beta") {
  auto sc = config(3, 2000, 4.0, GrowthMode::Shifted, 21);
  sc.shift_dist = Distribution{Distribution::Kind::Constant, 0.0, 0.0};
  const auto bc = config(3, 2000, 2.0, GrowthMode::Bare, 21);
  const auto a = simulate(sc), b = simulate(bc);
  CHECK(steps_csv(a) == steps_csv(b));
}

TEST_CASE("uniform selection at beta = 0") {
  const long steps = 100000;
  const int m = 2;
  auto s = init_tree(config(m, steps, 0.0, GrowthMode::Shifted, 12345));
  Fenwick active(static_cast<std::size_t>(1 + m * steps));
  active.add(0, 1);
  const int bins = 10;
  std::vector<double> observed(bins, 0.0), expected(bins, 0.0), variance(bins, 0.0);
  for (long t = 0; t < steps; ++t) {
    const long n = s.interface_size();
    const auto r = s.step();
    const long rank = active.prefix(static_cast<std::size_t>(r.chosen_id));
    observed[static_cast<std::size_t>(rank * bins / n)] += 1.0;
    for (int b = 0; b < bins; ++b) {
      // Ranks k with floor(k bins / n) == b.
      const long lo = (static_cast<long>(b) * n + bins - 1) / bins;
      const long hi = (static_cast<long>(b + 1) * n + bins - 1) / bins;
      const double p = static_cast<double>(hi - lo) / static_cast<double>(n);
      expected[static_cast<std::size_t>(b)] += p;
      variance[static_cast<std::size_t>(b)] += p * (1.0 - p);
    }
    active.add(static_cast<std::size_t>(r.chosen_id), -1);
    for (std::size_t id = s.nodes().size() - m; id < s.nodes().size(); ++id) active.add(id, 1);
  }
  for (int b = 0; b < bins; ++b) {
    INFO("bin " << b << " observed " << observed[b] << " expected " << expected[b]);
    CHECK(std::abs(observed[b] - expected[b]) <= 3.0 * std::sqrt(variance[b]));
  }
}

TEST_CASE("low theta is favoured at large beta") {
  const auto st = simulate(config(3, 5000, 20.0, GrowthMode::Shifted, 4));
  double chosen = 0.0, iface = 0.0;
  for (const auto& r : st.steps) {
    chosen += r.chosen_theta;
    iface += r.interface_mean_theta;
  }
  CHECK(chosen < iface);

  auto inv = config(3, 5000, 20.0, GrowthMode::Shifted, 4);
  inv.invert_sign = true;
  const auto si = simulate(inv);
  chosen = iface = 0.0;
  for (const auto& r : si.steps) {
    chosen += r.chosen_theta;
    iface += r.interface_mean_theta;
  }
  CHECK(chosen > iface);
}

TEST_CASE("extreme beta with gaussian energies stays finite") {
  auto c = config(2, 3000, 500.0, GrowthMode::Bare, 6);
  c.energy_dist = Distribution{Distribution::Kind::Gaussian, 0.0, 3.0};
  const auto st = simulate(c);
  CHECK(st.final_interface_size == 3001);
  for (const auto& r : st.steps) CHECK(std::isfinite(r.chosen_theta));
}

TEST_CASE("simulate is deterministic and fast") {
  const auto c = config(3, 100000, 0.5, GrowthMode::Shifted, 42);
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = simulate(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 5.0);
  const auto b = simulate(c);
  CHECK(steps_csv(a) == steps_csv(b));
  CHECK(edges_csv(a) == edges_csv(b));
  CHECK(a.final_interface_size == 1 + 2 * 100000);

  const auto other = simulate(config(3, 1000, 0.5, GrowthMode::Shifted, 43));
  const auto first = simulate(config(3, 1000, 0.5, GrowthMode::Shifted, 42));
  CHECK(steps_csv(other) != steps_csv(first));

  long total = 0;
  for (long d : a.depth_profile) total += d;
  CHECK(total == static_cast<long>(a.nodes.size()));
  long hist = 0;
  for (long h : a.interface_histogram) hist += h;
  CHECK(hist == a.final_interface_size);
}

TEST_CASE("csv layout") {
  const auto st = simulate(config(2, 3, 1.0, GrowthMode::Bare, 1));
  const auto steps = steps_csv(st);
  CHECK(steps.rfind("step,chosen_id,chosen_theta,interface_size,interface_mean_theta\n", 0) == 0);
  CHECK(std::count(steps.begin(), steps.end(), '\n') == 4);
  const auto edges = edges_csv(st);
  CHECK(edges.rfind("child_id,parent_id,t_i,z0,shift\n0,,0,", 0) == 0);
  CHECK(std::count(edges.begin(), edges.end(), '\n') == 1 + 7);
}

TEST_CASE("effective node energy") {
  Matrix h0 = Matrix::Zero(2, 2), h1(2, 2);
  h0(1, 1) = 2.0;
  h1 << 0.0, 1.0, 1.0, 0.0;
  const auto p = make_projector(2, {0});
  const auto e = effective_node_energy(HermitianOperator(h0), HermitianOperator(h1), p, 0);
  CHECK(std::abs(e.theta - 1.0) < 1e-14);
  CHECK(std::abs(e.shift - 1.0) < 1e-14);

  // H1 commuting with H0 and P: the Q-part vanishes on phi, theta = z/2.
  Matrix g0 = Matrix::Zero(3, 3);
  g0.diagonal() << 1.5, -0.4, 2.0;
  Matrix g1 = Matrix::Zero(3, 3);
  g1.diagonal() << 2.0, 3.0, -1.0;
  const auto pc = make_projector(3, {0, 1});
  for (Index n = 0; n < 2; ++n) {
    const auto r = effective_node_energy(HermitianOperator(g0), HermitianOperator(g1), pc, n);
    CHECK(std::abs(r.theta - 0.5 * r.z0) < 1e-14);
    CHECK(std::abs(r.shift + 0.5 * r.z0) < 1e-14);
  }

  Matrix sing = Matrix::Zero(2, 2);
  sing(0, 0) = 1.0;
  try {
    effective_node_energy(HermitianOperator(h0), HermitianOperator(sing), p, 0);
    FAIL("singular H1 accepted");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::SingularH1);
  }
}

TEST_CASE("matrix shift mode matches the effective node energy") {
  auto c = config(2, 50, 1.0, GrowthMode::Shifted, 13);
  c.shift_dist = Distribution{Distribution::Kind::Matrix, 1.0, 3.0};
  const auto st = simulate(c);
  for (const Node& n : st.nodes) {
    // theta = (z0 + e)/2 with e in [1, 3], so shift = (e - z0)/2.
    const double e = 2.0 * n.shift + n.z0;
    CHECK(e >= 1.0 - 1e-12);
    CHECK(e <= 3.0 + 1e-12);
    CHECK(std::abs(n.theta - 0.5 * (n.z0 + e)) < 1e-12);
  }
}
