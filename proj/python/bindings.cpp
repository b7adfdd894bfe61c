#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "macrogpo/anytime.hpp"
#include "macrogpo/baselines.hpp"
#include "macrogpo/errors.hpp"
#include "macrogpo/harness.hpp"

namespace py = pybind11;
using namespace macrogpo;

namespace {

// Locations travel as (n, d) arrays.
std::vector<Location> rows(const Eigen::MatrixXd& m) {
  std::vector<Location> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].coords.push_back(m(i, j));
  return out;
}

Eigen::MatrixXd matrix(const std::vector<Location>& locs) {
  const Eigen::Index d = locs.empty() ? 0 : static_cast<Eigen::Index>(locs.front().dimension());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(locs.size()), d);
  for (std::size_t i = 0; i < locs.size(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), j) = locs[i][static_cast<std::size_t>(j)];
  return m;
}

ObservationSet observations(const Eigen::MatrixXd& x, const Eigen::VectorXd& z) {
  if (x.rows() != z.size()) throw InvalidInput("X and z differ in length");
  ObservationSet d;
  auto locs = rows(x);
  d.append(locs, std::vector<double>(z.data(), z.data() + z.size()));
  return d;
}

struct Grid {
  GridDomain domain;
};

PlannerConfig planner_config(int horizon, std::optional<std::size_t> samples, std::optional<double> epsilon,
                             std::optional<double> lambda, std::optional<double> delta, double beta,
                             std::uint64_t seed) {
  PlannerConfig c;
  c.horizon = horizon;
  c.samples = samples;
  c.epsilon = epsilon;
  c.lambda = lambda;
  c.delta = delta;
  c.beta = beta;
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Nonmyopic macro-action GP planning";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<CapabilityError>(m, "CapabilityError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<KernelParams>(m, "KernelParams")
      .def(py::init([](double prior_mean, double signal_variance, double noise_variance, std::vector<double> ls) {
             KernelParams p{prior_mean, signal_variance, noise_variance, std::move(ls)};
             p.validate();
             return p;
           }),
           py::arg("prior_mean") = 0.0, py::arg("signal_variance") = 1.0, py::arg("noise_variance") = 1e-5,
           py::arg("length_scales") = std::vector<double>{1.0, 1.0})
      .def_readwrite("prior_mean", &KernelParams::prior_mean)
      .def_readwrite("signal_variance", &KernelParams::signal_variance)
      .def_readwrite("noise_variance", &KernelParams::noise_variance)
      .def_readwrite("length_scales", &KernelParams::length_scales)
      .def("__repr__", [](const KernelParams& p) {
        return "KernelParams(prior_mean=" + std::to_string(p.prior_mean) +
               ", signal_variance=" + std::to_string(p.signal_variance) +
               ", noise_variance=" + std::to_string(p.noise_variance) + ")";
      });

  m.def("kernel_cov", [](std::vector<double> a, std::vector<double> b, const KernelParams& p) {
    return kernel_cov(Location(std::move(a)), Location(std::move(b)), p);
  }, py::arg("a"), py::arg("b"), py::arg("params"));

  m.def("posterior", [](const Eigen::MatrixXd& targets, const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                        const KernelParams& p) {
    auto b = posterior(rows(targets), observations(x, z), p);
    return py::make_tuple(b.mean, b.covariance);
  }, py::arg("targets"), py::arg("X"), py::arg("z"), py::arg("params"),
     "Posterior mean and noisy covariance at `targets` given data (X, z).");

  m.def("info_gain", py::overload_cast<const Eigen::MatrixXd&, double>(&info_gain), py::arg("covariance"),
        py::arg("noise_variance"));

  py::class_<Grid>(m, "Grid")
      .def(py::init([](std::vector<double> mins, std::vector<double> maxs, std::vector<int> cells) {
             if (mins.size() != maxs.size() || mins.size() != cells.size())
               throw InvalidInput("mins, maxs and cells differ in length");
             std::vector<GridAxis> axes;
             for (std::size_t i = 0; i < mins.size(); ++i) axes.push_back({mins[i], maxs[i], cells[i]});
             return Grid{GridDomain(axes)};
           }),
           py::arg("mins"), py::arg("maxs"), py::arg("cells"))
      .def("locations", [](const Grid& g) { return matrix(g.domain.accessible_cells()); })
      .def("centre", [](const Grid& g) { return g.domain.centre_cell().coords; })
      .def("cardinal_catalog", [](const Grid& g, std::size_t kappa) { return cardinal_catalog(g.domain, kappa); },
           py::arg("kappa"))
      .def("sample_phenomenon", [](const Grid& g, const KernelParams& p, std::uint64_t seed) {
        auto f = sample_phenomenon(g.domain, p, seed);
        Eigen::VectorXd values = Eigen::VectorXd::Map(f.values().data(), static_cast<Eigen::Index>(f.values().size()));
        return py::make_tuple(matrix(f.cells()), values);
      }, py::arg("params"), py::arg("seed"), "One latent field draw: (cells, values).");

  py::class_<MacroActionCatalog>(m, "Catalog")
      .def("actions", [](const MacroActionCatalog& c, std::vector<double> at) {
        std::vector<Eigen::MatrixXd> out;
        for (const auto& a : c.at(Location(std::move(at)))) out.push_back(matrix(a.path));
        return out;
      }, py::arg("at"))
      .def_property_readonly("kappa", &MacroActionCatalog::kappa)
      .def_property_readonly("max_actions", &MacroActionCatalog::max_actions);

  m.def("cardinal_actions", [](const Grid& g, std::vector<double> start, std::size_t kappa) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& a : cardinal_macro_actions(Location(std::move(start)), g.domain, kappa)) out.push_back(matrix(a.path));
    return out;
  }, py::arg("grid"), py::arg("start"), py::arg("kappa"));

  m.def("plan_epsilon", [](const Eigen::MatrixXd& x, const Eigen::VectorXd& z, std::vector<double> start,
                           const MacroActionCatalog& cat, const KernelParams& p, int horizon,
                           std::optional<std::size_t> samples, std::optional<double> epsilon,
                           std::optional<double> lambda, std::optional<double> delta, double beta, std::uint64_t seed) {
    auto c = planner_config(horizon, samples, epsilon, lambda, delta, beta, seed);
    PolicyDecision d;
    {
      py::gil_scoped_release release;
      d = epsilon_policy(observations(x, z), Location(std::move(start)), cat, p, c);
    }
    py::dict out;
    out["action_index"] = d.action_index;
    out["path"] = matrix(d.action.path);
    out["q_sampled"] = d.q_sampled;
    out["q_ml"] = d.q_ml;
    out["q_used"] = d.q_used;
    out["samples"] = d.sampling.samples;
    out["lambda"] = d.sampling.lambda;
    out["nodes"] = d.nodes;
    return out;
  }, py::arg("X"), py::arg("z"), py::arg("start"), py::arg("catalog"), py::arg("params"), py::arg("horizon"),
     py::arg("samples") = py::none(), py::arg("epsilon") = py::none(), py::arg("lam") = py::none(),
     py::arg("delta") = py::none(), py::arg("beta") = 0.0, py::arg("seed") = 0);

  m.def("plan_anytime", [](const Eigen::MatrixXd& x, const Eigen::VectorXd& z, std::vector<double> start,
                           const MacroActionCatalog& cat, const KernelParams& p, int horizon,
                           std::optional<std::size_t> samples, std::optional<double> epsilon,
                           std::optional<std::size_t> iterations, std::optional<double> wallclock_ms, double beta,
                           std::uint64_t seed) {
    auto c = planner_config(horizon, samples, epsilon, std::nullopt, std::nullopt, beta, seed);
    AnytimeBudget budget;
    budget.iterations = iterations;
    budget.wallclock_ms = wallclock_ms;
    AnytimeResult r;
    {
      py::gil_scoped_release release;
      const auto tables = preprocess(observations(x, z), Location(std::move(start)), cat, p, c);
      r = anytime_policy(tables, c, budget);
    }
    py::dict out;
    out["action_index"] = r.action_index;
    out["path"] = matrix(r.action.path);
    out["omega"] = r.omega;
    out["omega_trace"] = r.omega_trace;
    out["q_lower"] = r.q_lower;
    out["q_upper"] = r.q_upper;
    out["iterations"] = r.iterations;
    out["nodes"] = r.nodes;
    out["stop"] = to_string(r.stop);
    out["fallback"] = r.fallback;
    return out;
  }, py::arg("X"), py::arg("z"), py::arg("start"), py::arg("catalog"), py::arg("params"), py::arg("horizon"),
     py::arg("samples") = py::none(), py::arg("epsilon") = py::none(), py::arg("iterations") = py::none(),
     py::arg("wallclock_ms") = py::none(), py::arg("beta") = 0.0, py::arg("seed") = 0);

  m.def("sample_size", &sample_size, py::arg("lam"), py::arg("delta"), py::arg("K"), py::arg("horizon"),
        py::arg("actions"));
  m.def("lambda_for_samples", &lambda_for_samples, py::arg("samples"), py::arg("delta"), py::arg("K"),
        py::arg("horizon"), py::arg("actions"));

  m.def("run_suite", [](const std::filesystem::path& config, std::optional<std::filesystem::path> out,
                        std::optional<std::uint64_t> seed, std::optional<std::size_t> replications,
                        std::optional<std::size_t> workers) {
    const auto cfg = load_config(config);
    SuiteOptions opt;
    opt.seed = seed;
    opt.replications = replications;
    opt.workers = workers;
    SuiteResult res;
    {
      py::gil_scoped_release release;
      res = run_suite(cfg, opt);
      if (out) write_suite(res, cfg, *out);
    }
    py::list summary;
    for (const auto& s : res.summary) {
      py::dict row;
      row["planner"] = s.planner;
      row["stage"] = s.stage;
      row["observations"] = s.observations;
      row["mean_out"] = s.mean_out;
      row["se_out"] = s.se_out;
      row["mean_regret"] = s.mean_regret;
      row["se_regret"] = s.se_regret;
      summary.append(row);
    }
    py::dict result;
    result["config_hash"] = cfg.hash;
    result["episodes"] = res.episodes.size();
    result["summary"] = summary;
    return result;
  }, py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
     py::arg("replications") = py::none(), py::arg("workers") = py::none(),
     "Runs a configured suite; writes the CSVs when `out` is given and returns the summary rows.");
}
