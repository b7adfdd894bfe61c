#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "macrogpo/environment.hpp"
#include "macrogpo/errors.hpp"
#include "oracles.hpp"

using namespace macrogpo;
namespace fs = std::filesystem;

namespace {

GridDomain grid(int n, double extent = 5.0) { return GridDomain({{0.0, extent, n}, {0.0, extent, n}}); }

KernelParams params2(double ell = 0.5) {
  KernelParams p;
  p.length_scales = {ell, ell};
  return p;
}

bool adjacent_on_grid(const GridDomain& g, const Location& a, const Location& b) {
  auto ia = g.index_of(a), ib = g.index_of(b);
  if (!ia || !ib) return false;
  int dist = 0;
  for (std::size_t d = 0; d < ia->size(); ++d) dist += std::abs((*ia)[d] - (*ib)[d]);
  return dist == 1;
}

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "macrogpo_tests";
  fs::create_directories(dir);
  return dir / name;
}

Graph chain(int n) {
  Graph g;
  for (int i = 0; i + 1 < n; ++i) {
    g.add_edge(Location{double(i), 0.0}, Location{double(i + 1), 0.0});
    g.add_edge(Location{double(i + 1), 0.0}, Location{double(i), 0.0});
  }
  return g;
}

}  // namespace

TEST_CASE("grid geometry") {
  GridDomain g = grid(50);
  CHECK(g.cell_count() == 2500);
  Location first = g.location(std::size_t{0});
  CHECK(first[0] == doctest::Approx(0.05));
  CHECK(first[1] == doctest::Approx(0.05));
  Location second = g.location(std::size_t{1});
  CHECK(second[0] == doctest::Approx(0.15));  // first axis varies fastest
  CHECK(second[1] == doctest::Approx(0.05));
  CHECK(g.index_of(Location{7.0, 0.05}) == std::nullopt);
  CHECK_THROWS_AS(GridDomain({{0, 1, 0}}), InvalidInput);
  CHECK_THROWS_AS(GridDomain({{0, 1, 2}, {0, 1, 2}}, {true, false}), InvalidInput);
}

TEST_CASE("field sampling: constant when signal variance is zero") {
  KernelParams p = params2();
  p.signal_variance = 0.0;
  p.prior_mean = 1.25;
  auto f = sample_phenomenon(grid(10), p, 3);
  for (double v : f.values()) CHECK(v == 1.25);
  CHECK(f.provenance() == PhenomenonRealization::Provenance::sampled);
}

TEST_CASE("field sampling: deterministic per seed, global max cached") {
  auto a = sample_phenomenon(grid(12), params2(), 17);
  auto b = sample_phenomenon(grid(12), params2(), 17);
  CHECK(a.values() == b.values());
  auto c = sample_phenomenon(grid(12), params2(), 18);
  CHECK(a.values() != c.values());
  CHECK(a.global_max() == *std::max_element(a.values().begin(), a.values().end()));
  CHECK(a.at(a.argmax()) == a.global_max());
}

TEST_CASE("field sampling: Monte Carlo variance and correlation") {
  // 1 length-scale apart: cells 5 apart at width 0.1 with ell = 0.5
  GridDomain g = grid(20, 2.0);
  KernelParams p = params2();
  Location a = g.location(std::size_t{3 + 20 * 7});
  Location b = g.location(std::size_t{8 + 20 * 7});
  const int runs = 200;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int s = 0; s < runs; ++s) {
    auto f = sample_phenomenon(g, p, 1000 + s);
    const double x = f.at(a), y = f.at(b);
    sa += x, sb += y, saa += x * x, sbb += y * y, sab += x * y;
  }
  const double ma = sa / runs, mb = sb / runs;
  const double va = saa / runs - ma * ma, vb = sbb / runs - mb * mb;
  const double corr = (sab / runs - ma * mb) / std::sqrt(va * vb);
  CHECK(va == doctest::Approx(1.0).epsilon(0.15));
  CHECK(corr == doctest::Approx(std::exp(-0.5)).epsilon(0.1 / std::exp(-0.5)));
}

TEST_CASE("field sampling: Kronecker path agrees with the dense path in distribution") {
  GridDomain full = grid(6, 1.0);
  std::vector<bool> mask(36, true);
  GridDomain masked({{0.0, 1.0, 6}, {0.0, 1.0, 6}}, mask);
  KernelParams p = params2(0.3);
  const int runs = 300;
  Location a = full.location(std::size_t{0}), b = full.location(std::size_t{7});
  double kron = 0, dense = 0;
  for (int s = 0; s < runs; ++s) {
    kron += sample_phenomenon(full, p, s).at(a) * sample_phenomenon(full, p, s).at(b);
    dense += sample_phenomenon(masked, p, s).at(a) * sample_phenomenon(masked, p, s).at(b);
  }
  const double expected = oracle::se_kernel(a, b, p);
  CHECK(kron / runs == doctest::Approx(expected).epsilon(0.2 / expected));
  CHECK(dense / runs == doctest::Approx(expected).epsilon(0.2 / expected));
}

TEST_CASE("field sampling: conditioning on every cell reproduces the field") {
  GridDomain g = grid(5, 2.0);
  KernelParams p = params2(0.6);
  auto f = sample_phenomenon(g, p, 8);
  ObservationSet d;
  d.append(f.cells(), f.values());
  KernelParams tight = p;
  tight.noise_variance = 1e-9;
  auto b = posterior(f.cells(), d, tight);
  for (std::size_t i = 0; i < f.cells().size(); ++i) CHECK(b.mean(i) == doctest::Approx(f.values()[i]).epsilon(1e-5));
}

TEST_CASE("field sampling: dense cap") {
  std::vector<bool> mask(101 * 101, true);
  GridDomain g({{0, 1, 101}, {0, 1, 101}}, mask);
  CHECK_THROWS_AS(sample_phenomenon(g, params2(), 1), CapabilityError);
}

TEST_CASE("cardinal macro-actions") {
  GridDomain g = grid(50);
  auto interior = cardinal_macro_actions(g.location(std::size_t{25 + 50 * 25}), g, 4);
  CHECK(interior.size() == 4);
  auto corner = cardinal_macro_actions(g.location(std::size_t{0}), g, 4);
  CHECK(corner.size() == 2);
  std::vector<int> near_east{47, 20};
  auto east = cardinal_macro_actions(g.location(near_east), g, 4);
  CHECK(east.size() == 3);
  for (const auto& a : east) CHECK(a.end()[0] < g.location(near_east)[0] + 1e-9);

  GridDomain strip({{0, 1, 1}, {0, 1, 1}});
  CHECK(cardinal_macro_actions(strip.location(std::size_t{0}), strip, 1).empty());
  CHECK_THROWS_AS(cardinal_macro_actions(Location{9.0, 9.0}, g, 4), InvalidInput);
}

TEST_CASE("every generated macro-action moves between adjacent cells") {
  std::vector<bool> mask(100, true);
  for (int i = 0; i < 4; ++i) mask[i] = false;
  GridDomain g({{0, 1, 10}, {0, 1, 10}}, mask);
  auto catalog = cardinal_catalog(g, 3);
  for (const auto& cell : g.accessible_cells()) {
    for (const auto& a : catalog.at(cell)) {
      REQUIRE(a.length() == 3);
      CHECK(adjacent_on_grid(g, cell, a.path[0]));
      for (std::size_t i = 1; i < a.length(); ++i) CHECK(adjacent_on_grid(g, a.path[i - 1], a.path[i]));
      for (const auto& loc : a.path) CHECK(g.accessible(*g.index_of(loc)));
    }
  }
  CHECK(catalog.max_actions() == 4);
  CHECK(catalog.kappa() == 3);
}

TEST_CASE("graph walks: chain") {
  Graph g = chain(6);
  auto from_end = graph_macro_actions(Location{0.0, 0.0}, g, 5);
  REQUIRE(from_end.size() == 1);
  CHECK(from_end[0].end() == Location{5.0, 0.0});
  CHECK_THROWS_AS(graph_macro_actions(Location{9.0, 9.0}, g, 2), InvalidInput);
}

TEST_CASE("graph walks match brute-force enumeration") {
  Graph star;
  Location hub{0.0, 0.0};
  for (int i = 0; i < 5; ++i) {
    Location leaf{std::cos(i * 1.2), std::sin(i * 1.2)};
    star.add_edge(hub, leaf);
    star.add_edge(leaf, hub);
    star.add_edge(leaf, Location{std::cos((i + 1) % 5 * 1.2), std::sin((i + 1) % 5 * 1.2)});
  }
  for (std::size_t start = 0; start < star.size(); ++start) {
    for (std::size_t kappa : {1u, 2u, 3u}) {
      auto walks = graph_macro_actions(star.nodes()[start], star, kappa);
      std::set<std::vector<std::size_t>> got;
      for (const auto& a : walks) {
        std::vector<std::size_t> ids;
        for (const auto& loc : a.path) ids.push_back(*star.find(loc));
        got.insert(ids);
      }
      auto brute = oracle::brute_walks(star, start, kappa);
      CHECK(got == std::set<std::vector<std::size_t>>(brute.begin(), brute.end()));
      CHECK(got.size() == walks.size());
    }
  }
}

TEST_CASE("graph walks: downsampling") {
  Graph g;
  Location hub{0.0, 0.0};
  for (int i = 0; i < 30; ++i) g.add_edge(hub, Location{1.0, double(i)});
  auto all = graph_macro_actions(hub, g, 1);
  REQUIRE(all.size() == 30);
  auto a = graph_macro_actions(hub, g, 1, Downsample{20, 5});
  auto b = graph_macro_actions(hub, g, 1, Downsample{20, 5});
  auto c = graph_macro_actions(hub, g, 1, Downsample{20, 6});
  CHECK(a.size() == 20);
  CHECK(a == b);
  CHECK(a != c);
  for (const auto& x : a) CHECK(std::find(all.begin(), all.end(), x) != all.end());
  CHECK(graph_macro_actions(hub, g, 1, Downsample{50, 5}).size() == 30);
}

TEST_CASE("graph: duplicate edges collapse") {
  Graph g;
  g.add_edge(Location{0.0, 0.0}, Location{1.0, 0.0});
  g.add_edge(Location{0.0, 0.0}, Location{1.0, 0.0});
  CHECK(g.edge_count() == 1);
}

TEST_CASE("execute") {
  auto f = sample_phenomenon(grid(10), params2(), 4);
  GridDomain g = grid(10);
  auto actions = cardinal_macro_actions(g.location(std::size_t{55}), g, 3);
  const MacroAction& a = actions.front();
  Rng r0 = make_rng(1);
  auto exact = execute(f, a, 0.0, r0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(exact(i) == f.at(a.path[i]));

  Rng r1 = make_rng(2), r2 = make_rng(2);
  CHECK(execute(f, a, 0.1, r1) == execute(f, a, 0.1, r2));

  Rng r3 = make_rng(3);
  double ss = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto z = execute(f, a, 0.2, r3);
    for (std::size_t k = 0; k < 3; ++k) ss += std::pow(z(k) - f.at(a.path[k]), 2);
  }
  CHECK(ss / (3.0 * n) == doctest::Approx(0.2).epsilon(0.1));

  MacroAction outside{{Location{99.0, 99.0}}};
  CHECK_THROWS_AS(execute(f, outside, 0.1, r3), InvalidInput);
}

TEST_CASE("field files round-trip bit-exactly") {
  PhenomenonRealization f({{0.1, 0.2}, {1.0 / 3.0, 2.5}, {-1e-7, 3.0}}, {0.1 + 0.2, -2.0 / 7.0, 1e300},
                          PhenomenonRealization::Provenance::sampled, 4);
  auto path = temp_file("field.csv");
  save_field(f, path);
  auto g = load_field(path);
  CHECK(g.cells() == f.cells());
  CHECK(g.values() == f.values());
  CHECK(g.global_max() == 1e300);
  CHECK(g.argmax() == Location{-1e-7, 3.0});
  CHECK(g.provenance() == PhenomenonRealization::Provenance::loaded);
}

TEST_CASE("field files: malformed rows report the line") {
  auto path = temp_file("bad.csv");
  {
    std::ofstream out(path);
    out << "x,y,value\n0,0,1\n1,1,oops\n";
  }
  try {
    load_field(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  {
    std::ofstream out(path);
    out << "x,y,value\n0,0,1\n1,1\n";
  }
  CHECK_THROWS_AS(load_field(path), ParseError);
}

TEST_CASE("graph files") {
  auto path = temp_file("graph.csv");
  {
    std::ofstream out(path);
    out << "from_x,from_y,to_x,to_y\n0,0,1,0\n1,0,1,1\n1,1,0,1\n0,1,0,0\n";
  }
  Graph g = load_graph(path);
  CHECK(g.size() == 4);
  CHECK(g.edge_count() == 4);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.neighbours(i).size() == 1);
  auto out = temp_file("graph2.csv");
  save_graph(g, out);
  Graph h = load_graph(out);
  CHECK(h.nodes() == g.nodes());
  CHECK(h.edge_count() == 4);
}
