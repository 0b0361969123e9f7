// Acceptance report: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "subdyn/cayley_tree.hpp"
#include "subdyn/ensembles.hpp"
#include "subdyn/errors.hpp"
#include "subdyn/linalg.hpp"
#include "subdyn/operators.hpp"
#include "subdyn/spin_network.hpp"
#include "test_support.hpp"

using namespace subdyn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Corpus {
  std::vector<testing::CorpusCase> cases;
  std::vector<SubdynamicsSolution> solutions;
  double seconds = 0.0;
};

// 60 random cases, dimensions 2..12, coupling at most 0.2 of the level gap.
const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus out;
    std::mt19937_64 rng(20241016);
    std::uniform_int_distribution<int> dim_of(2, 12);
    const auto t0 = Clock::now();
    for (int i = 0; i < 60; ++i) {
      const Index n = dim_of(rng);
      const Index r = std::uniform_int_distribution<Index>(1, n - 1)(rng);
      out.cases.push_back(testing::make_corpus_case(n, r, 0.2, rng));
      const auto& cc = out.cases.back();
      out.solutions.push_back(solve_subdynamics(cc.h, make_projector(n, cc.subspace)));
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return c;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix dense(const anderson::SparseReal& s) { return RealMatrix(s).cast<Complex>(); }

}  // namespace

int main() {
  report(1, "eigenvalue oracle", [] {
    const auto& c = corpus();
    double worst = 0.0;
    std::size_t branches = 0;
    for (std::size_t i = 0; i < c.cases.size(); ++i) {
      const RealVector exact = testing::exact_spectrum(c.cases[i].h.matrix());
      for (const auto& b : c.solutions[i].branches()) {
        if (!b.converged) return Outcome{false, "unconverged branch in case " + std::to_string(i)};
        worst = std::max(worst, testing::distance_to_nearest(exact, b.energy));
        ++branches;
      }
    }
    return Outcome{worst <= 1e-8 && c.seconds < 10.0 && c.cases.size() >= 50,
                   std::to_string(c.cases.size()) + " cases, " + std::to_string(branches) +
                       " branches, max distance " + num(worst) + ", " + num(c.seconds) + " s"};
  });

  report(2, "intertwining residual", [] {
    const auto& c = corpus();
    double worst = 0.0;
    for (std::size_t i = 0; i < c.cases.size(); ++i) {
      const auto& s = c.solutions[i];
      worst = std::max(worst, intertwining_residual(c.cases[i].h, s.omega.omega, s.theta_full()));
    }
    return Outcome{worst <= 1e-8, "max relative residual " + num(worst)};
  });

  report(3, "ensemble similarity identity", [] {
    const auto& c = corpus();
    double worst = 0.0;
    for (std::size_t i = 0; i < c.cases.size(); ++i) {
      const auto& s = c.solutions[i];
      const Matrix tf = s.theta_full();
      for (double beta : {0.1, 1.0, 10.0}) {
        const auto lhs = transform_density(s.omega, gibbs_state(c.cases[i].h, beta));
        const auto rhs = projected_canonical_density(tf, beta);
        worst = std::max(worst, (lhs.matrix - rhs.matrix).norm());
      }
    }
    return Outcome{worst <= 1e-8, "max deviation " + num(worst) + " over beta in {0.1, 1, 10}"};
  });

  report(4, "decoupling reduction", [] {
    std::mt19937_64 rng(77);
    double c_norm = 0.0, omega_dev = 0.0, rho_dev = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Index n = 3 + trial % 6, r = 1 + trial % (n - 1);
      auto cc = testing::make_corpus_case(n, r, 0.0, rng);
      const auto p = make_projector(n, cc.subspace);
      const auto sol = solve_subdynamics(cc.h, p);
      for (const auto& b : sol.branches()) c_norm = std::max(c_norm, b.correlation.matrix.norm());
      omega_dev = std::max(omega_dev, (sol.omega.omega - Matrix::Identity(n, n)).norm());
      const HermitianOperator php(select_block(cc.h.matrix(), cc.subspace, cc.subspace));
      for (double beta : {0.1, 1.0, 10.0}) {
        const auto a = projected_canonical_density(sol.theta(), beta);
        rho_dev = std::max(rho_dev, (a.matrix - gibbs_state(php, beta).matrix).norm());
      }
    }
    return Outcome{c_norm == 0.0 && omega_dev == 0.0 && rho_dev <= 1e-12,
                   "|C| " + num(c_norm) + ", |Omega - I| " + num(omega_dev) + ", density deviation " + num(rho_dev)};
  });

  report(5, "Born and reduced-projection orders", [] {
    std::mt19937_64 rng(61);
    Matrix h0m = Matrix::Zero(5, 5);
    h0m.diagonal() << 0.0, 1.3, 2.1, -1.7, 3.2;
    const HermitianOperator h0(h0m);
    const auto h1 = testing::random_hermitian(5, rng);
    const auto p = make_projector(5, {0});
    const std::vector<double> lambdas{0.2, 0.1, 0.05};
    std::vector<double> born_err;
    for (double lam : lambdas) {
      const auto h = HermitianOperator::symmetrized(h0m + lam * h1.matrix());
      born_err.push_back((solve_branches(h, p).theta.matrix - born_theta(h0, h1, lam, p, 0.0).matrix).norm());
    }
    const double born_order = fitted_order(lambdas, born_err);

    const Index ds = 2, db = 3;
    Matrix hs = Matrix::Zero(2, 2), hb = Matrix::Zero(3, 3), x(3, 3), sx(2, 2);
    hs(1, 1) = 0.7;
    hb(1, 1) = 1.3;
    hb(2, 2) = 2.9;
    x << 0.0, 1.0, 0.4, 1.0, 0.0, 0.7, 0.4, 0.7, 0.0;
    sx << 0.0, 1.0, 1.0, 0.0;
    const Matrix hfree = kron(hs, Matrix::Identity(db, db)) + kron(Matrix::Identity(ds, ds), hb);
    const Matrix v = kron(sx, x);
    const auto ps = make_projector(ds * db, {0, 1, 2});
    std::vector<double> red_err;
    for (double lam : lambdas) {
      const HermitianOperator h(hfree + lam * v);
      const auto sol = solve_subdynamics(h, ps);
      const Matrix rho = gibbs_state(h, 1.0).matrix;
      const Matrix proj = sol.omega.omega_inv * rho * sol.omega.omega;
      red_err.push_back((proj - reduced_projection(rho, HermitianOperator(hb), 1.0, ds, db)).norm());
    }
    const double red_order = fitted_order(lambdas, red_err);
    return Outcome{born_order >= 2.7 && red_order >= 1.8,
                   "Born order " + num(born_order) + ", reduced-projection order " + num(red_order)};
  });

  report(6, "Cayley tree growth", [] {
    using namespace tree;
    std::string detail;
    bool ok = true;
    for (int m : {2, 3, 5}) {
      TreeConfig cfg;
      cfg.m = m;
      cfg.steps = 10000;
      auto s = init_tree(cfg);
      for (long t = 1; t <= cfg.steps; ++t) {
        s.step();
        if (s.interface_size() != 1 + static_cast<Index>(m - 1) * t) ok = false;
        if (t % 2500 == 0) {
          const auto pr = growth_probabilities(s, cfg.beta_proj, cfg.mode);
          double sum = 0.0;
          for (double q : pr) sum += q;
          if (std::abs(sum - 1.0) > 1e-12) ok = false;
        }
      }
    }
    detail += ok ? "interface sizes exact, probabilities normalized" : "interface or normalization broken";

    // Uniformity at beta = 0: rank of the chosen node among the interface.
    const long steps = 100000;
    TreeConfig cfg;
    cfg.m = 2;
    cfg.steps = steps;
    cfg.beta_proj = 0.0;
    cfg.seed = 12345;
    auto s = init_tree(cfg);
    std::vector<long> fen(static_cast<std::size_t>(2 + 2 * steps), 0);
    auto add = [&](std::size_t i) {
      for (++i; i < fen.size(); i += i & (~i + 1)) fen[i] += 1;
    };
    auto sub = [&](std::size_t i) {
      for (++i; i < fen.size(); i += i & (~i + 1)) fen[i] -= 1;
    };
    auto prefix = [&](std::size_t i) {
      long r = 0;
      for (; i > 0; i -= i & (~i + 1)) r += fen[i];
      return r;
    };
    add(0);
    const int bins = 10;
    std::vector<double> obs(bins, 0.0), expct(bins, 0.0), var(bins, 0.0);
    for (long t = 0; t < steps; ++t) {
      const long n = s.interface_size();
      const auto r = s.step();
      const long rank = prefix(static_cast<std::size_t>(r.chosen_id));
      obs[static_cast<std::size_t>(rank * bins / n)] += 1.0;
      for (int b = 0; b < bins; ++b) {
        const long lo = (static_cast<long>(b) * n + bins - 1) / bins;
        const long hi = (static_cast<long>(b + 1) * n + bins - 1) / bins;
        const double q = static_cast<double>(hi - lo) / static_cast<double>(n);
        expct[static_cast<std::size_t>(b)] += q;
        var[static_cast<std::size_t>(b)] += q * (1.0 - q);
      }
      sub(static_cast<std::size_t>(r.chosen_id));
      const auto& nodes = s.nodes();
      for (std::size_t k = nodes.size() - static_cast<std::size_t>(cfg.m); k < nodes.size(); ++k)
        add(static_cast<std::size_t>(nodes[k].id));
    }
    double worst_sigma = 0.0;
    for (int b = 0; b < bins; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      worst_sigma = std::max(worst_sigma, std::abs(obs[bb] - expct[bb]) / std::sqrt(var[bb]));
    }
    ok = ok && worst_sigma <= 3.0;
    detail += ", beta=0 max bin deviation " + num(worst_sigma) + " sigma";

    TreeConfig big;
    big.steps = 100000;
    const auto t0 = Clock::now();
    const auto a = simulate(big);
    const double secs = seconds_since(t0);
    const auto b = simulate(big);
    const bool same = steps_csv(a) == steps_csv(b) && edges_csv(a) == edges_csv(b);
    ok = ok && same && secs < 5.0;
    detail += same ? ", CSV bit-identical" : ", CSV differs";
    detail += ", 1e5 steps in " + num(secs) + " s";
    return Outcome{ok, detail};
  });

  report(7, "Anderson symmetric point", [] {
    double worst = 0.0, worst_res = 0.0;
    for (double u : {1.0, 4.0, 10.0, 25.0}) {
      anderson::AndersonParams p;
      p.e_f = 0.3;
      p.u = u;
      p.e_d = p.e_f - u / 2.0;
      p.gamma = 0.1;
      const auto r = anderson::mean_field_solve(p, {0.5, 0.5});
      worst = std::max({worst, std::abs(r.n_up - 0.5), std::abs(r.n_down - 0.5)});
      worst_res = std::max(worst_res, r.residual);
    }
    return Outcome{worst <= 1e-10 && worst_res <= 1e-10,
                   "max |n - 0.5| " + num(worst) + ", max residual " + num(worst_res)};
  });

  report(8, "local moment", [] {
    anderson::AndersonParams p;
    p.e_d = -5.0;
    p.u = 10.0;
    p.gamma = 0.1;
    const auto r = anderson::mean_field_solve(p, {0.99, 0.01});
    const bool ok = std::abs(r.n_up - 0.9936) <= 0.01 && std::abs(r.n_down - 0.0065) <= 0.01;
    char buf[96];
    std::snprintf(buf, sizeof buf, "(n_up, n_down) = (%.6f, %.6f), residual %.2g", r.n_up, r.n_down, r.residual);
    return Outcome{ok, buf};
  });

  report(9, "moment bifurcation threshold", [] {
    const double gamma = 0.1;
    double threshold = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double ratio = 0.5 + 0.01 * i;
      anderson::ScanGrid g;
      g.gamma = gamma;
      const double u = ratio * std::numbers::pi * gamma;
      g.u = {u};
      g.e_d = {-u / 2.0};
      if (anderson::local_moment_scan(g).front().n_solutions > 1) {
        threshold = ratio;
        break;
      }
    }
    return Outcome{std::abs(threshold - 1.0) <= 0.05, "broken solutions first at U/(pi Gamma) = " + num(threshold)};
  });

  report(10, "Kondo limit coupling", [] {
    anderson::AndersonParams p;
    p.lambda = 0.5;
    p.e_d = -1.0;
    p.e_f = 0.0;
    const double limit = anderson::kondo_limit_J(p);
    p.u = 1e8;
    const double j = anderson::exchange_coupling(p, p.e_f, p.e_f);
    const double rel = std::abs(j - limit) / std::abs(limit);
    const double jex = anderson::spin_exchange_coefficient(p, p.e_f, p.e_f);
    std::printf("INFO [10] spin-flip coefficient at U = 1e8: %.9g (|coefficient| vs |limit| relative gap %.3g)\n",
                jex, std::abs(std::abs(jex) - std::abs(limit)) / std::abs(limit));
    return Outcome{limit == -0.25 && rel <= 1e-6,
                   "limit J = " + num(limit) + ", J_kk'(U = 1e8) = " + num(j) + ", relative gap " + num(rel)};
  });

  report(11, "complex entropy", [] {
    anderson::AndersonParams p, q;
    p.e_d = -5.0;
    p.u = 10.0;
    p.gamma = 0.1;
    q.e_d = -4.0;
    q.u = 8.0;
    q.gamma = 0.4;
    const auto mp = anderson::mean_field_solve(p, {0.99, 0.01});
    const auto mq = anderson::mean_field_solve(q, {0.99, 0.01});
    auto node = [](const anderson::AndersonParams& pp, anderson::MeanFieldResult r, double width) {
      r.theta[0] = Complex(pp.e_d + pp.u * r.n_down, width);
      r.theta[1] = Complex(pp.e_d + pp.u * r.n_up, width);
      return r;
    };
    const double im_open =
        std::abs(anderson::network_ensemble({node(p, mp, p.gamma), node(q, mq, q.gamma)}, 1.0).thermo.entropy.imag());
    const double im_closed =
        std::abs(anderson::network_ensemble({node(p, mp, 0.0), node(q, mq, 0.0)}, 1.0).thermo.entropy.imag());
    PartitionSpec single;
    single.theta = {Complex(1.0, 0.5)};
    single.beta_proj = 2.0;
    const Complex s1 = complex_entropy(single).entropy;
    return Outcome{im_open > 1e-6 && im_closed <= 1e-10 && s1 == Complex(0.0, 0.0),
                   "|Im S| with widths " + num(im_open) + ", without " + num(im_closed) + ", single level S = (" +
                       num(s1.real()) + ", " + num(s1.imag()) + ")"};
  });

  report(12, "sector algebra", [] {
    double sum_dev = 0.0, p0hp2 = 0.0, anti = 0.0;
    for (int nk = 0; nk <= 3; ++nk) {
      const anderson::FockSpace f(nk);
      const auto pr = anderson::impurity_projectors(f);
      sum_dev = std::max(sum_dev, (dense(pr.p[0] + pr.p[1] + pr.p[2]) - Matrix::Identity(f.dim(), f.dim())).norm());
      anderson::AndersonParams p;
      p.bath_energies = anderson::default_bath(std::max(nk, 1), 0.0);
      p.bath_energies.resize(static_cast<std::size_t>(nk));
      p.lambda = 0.3;
      const auto h = anderson::build_anderson_hamiltonian(p, f);
      const auto rep = anderson::verify_block_structure(h, pr);
      p0hp2 = std::max(p0hp2, rep.norms[0][2]);
      anti = std::max(anti, f.anticommutator_error());
    }
    double worst = 0.0;
    for (int nk = 1; nk <= 2; ++nk) {
      anderson::AndersonParams p;
      p.bath_energies = nk == 1 ? std::vector<double>{0.37} : std::vector<double>{0.37, -0.61};
      p.e_d = -1.3;
      p.u = 3.1;
      p.lambda = 0.02;
      const auto h = anderson::build_anderson_hamiltonian(p);
      const auto sol = anderson::theta1_branches(h, anderson::impurity_projectors(anderson::FockSpace(nk)));
      const RealVector exact = testing::exact_spectrum(h.matrix());
      for (const auto& b : sol.branches) worst = std::max(worst, testing::distance_to_nearest(exact, b.energy));
    }
    return Outcome{sum_dev == 0.0 && p0hp2 == 0.0 && anti <= 1e-14 && worst <= 1e-8,
                   "|P0+P1+P2-I| " + num(sum_dev) + ", |P0 H P2| " + num(p0hp2) + ", anticommutator error " +
                       num(anti) + ", Theta1 vs exact " + num(worst)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
