#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stablefield/cov_models.hpp"
#include "stablefield/errors.hpp"
#include "stablefield/extrap.hpp"
#include "stablefield/field_sim.hpp"
#include "stablefield/grid.hpp"
#include "stablefield/kriging.hpp"
#include "stablefield/measure.hpp"
#include "stablefield/stable.hpp"

namespace py = pybind11;
using namespace stablefield;

#ifndef VERSION_INFO
#define VERSION_INFO dev
#endif
#define STR_INNER(x) #x
#define STR(x) STR_INNER(x)

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Simulation and extrapolation of stationary Gaussian and alpha-stable "
      "random fields";
  m.attr("__version__") = STR(VERSION_INFO);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidAlpha>(m, "InvalidAlpha", PyExc_ValueError);
  py::register_exception<SingularProblem>(m, "SingularProblem",
                                          PyExc_RuntimeError);
  py::register_exception<NonConvergence>(m, "NonConvergence",
                                         PyExc_RuntimeError);

  // Univariate stable laws.
  py::class_<StableParams>(m, "StableParams")
      .def(py::init<double, double, double, double>(), py::arg("alpha"),
           py::arg("sigma") = 1.0, py::arg("beta") = 0.0, py::arg("mu") = 0.0)
      .def_readonly("alpha", &StableParams::alpha)
      .def_readonly("sigma", &StableParams::sigma)
      .def_readonly("beta", &StableParams::beta)
      .def_readonly("mu", &StableParams::mu);
  m.def(
      "sample",
      [](const StableParams& p, std::size_t n, std::uint64_t seed) {
        const SampleBatch b = sample(p, n, seed);
        Eigen::VectorXd out(static_cast<Eigen::Index>(b.values.size()));
        for (std::size_t i = 0; i < b.values.size(); ++i) {
          out(static_cast<Eigen::Index>(i)) = b.values[i];
        }
        return out;
      },
      py::arg("params"), py::arg("n"), py::arg("seed"),
      "Draw n variates of the given stable law");
  m.def("tail_index_estimate", &tail_index_estimate, py::arg("values"));
  m.def(
      "moment_constant",
      [](double alpha, double beta, double p) {
        const MomentConstant c = moment_constant(alpha, beta, p);
        return py::make_tuple(c.value, c.std_error);
      },
      py::arg("alpha"), py::arg("beta"), py::arg("p"),
      "Moment scaling constant c_{alpha,beta}(p) and its standard error");
  m.def("codifference", &codifference, py::arg("sigma1"), py::arg("sigma2"),
        py::arg("sigma_diff"), py::arg("alpha"));

  // Covariance and variogram models.
  py::class_<CovModel>(m, "CovModel")
      .def_static("white_noise", &CovModel::white_noise)
      .def_static("bessel", &CovModel::bessel)
      .def_static("hole_effect", &CovModel::hole_effect)
      .def_static("cauchy", &CovModel::cauchy)
      .def_static("stable_family", &CovModel::stable_family)
      .def_static("gaussian_model", &CovModel::gaussian_model)
      .def_static("whittle_matern", &CovModel::whittle_matern)
      .def_static("exponential", &CovModel::exponential)
      .def_static("spherical", &CovModel::spherical)
      .def("with_nugget", &CovModel::with_nugget)
      .def("with_anisotropy", &CovModel::with_anisotropy)
      .def("__call__", &CovModel::operator())
      .def("at_lag", &CovModel::at_lag)
      .def_property_readonly("dim", &CovModel::dim);
  py::class_<VarioModel>(m, "VarioModel")
      .def_static("from_cov", &VarioModel::from_cov, py::arg("cov"),
                  py::arg("nugget") = 0.0)
      .def_static("power", &VarioModel::power)
      .def("__call__", &VarioModel::operator())
      .def("at_lag", &VarioModel::at_lag);

  // Grids and realizations.
  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init([](const Eigen::VectorXd& origin,
                       const Eigen::VectorXd& spacing,
                       const std::vector<std::int64_t>& counts) {
             GridSpec g;
             g.origin = origin;
             g.spacing = spacing;
             g.counts = counts;
             g.validate();
             return g;
           }),
           py::arg("origin"), py::arg("spacing"), py::arg("counts"))
      .def_readonly("origin", &GridSpec::origin)
      .def_readonly("spacing", &GridSpec::spacing)
      .def_readonly("counts", &GridSpec::counts)
      .def("site", &GridSpec::site)
      .def("__len__", &GridSpec::size);
  py::class_<GridField>(m, "GridField")
      .def_readonly("grid", &GridField::grid)
      .def_readonly("values", &GridField::values)
      .def_readonly("seed", &GridField::seed);
  m.def("gaussian_sim", &gaussian_sim, py::arg("model"), py::arg("grid"),
        py::arg("seed"));
  m.def("sub_gaussian_sim", &sub_gaussian_sim, py::arg("model"),
        py::arg("alpha"), py::arg("grid"), py::arg("seed"),
        py::arg("fixed_scale") = py::none());

  // Variograms and fitting.
  py::class_<LagBins>(m, "LagBins")
      .def_static("regular", &LagBins::regular, py::arg("max_lag"),
                  py::arg("count"))
      .def_readonly("edges", &LagBins::edges);
  py::class_<VariogramEstimate>(m, "VariogramEstimate")
      .def_readonly("h_center", &VariogramEstimate::h_center)
      .def_readonly("gamma", &VariogramEstimate::gamma)
      .def_readonly("pair_count", &VariogramEstimate::pair_count)
      .def_readonly("direction_label", &VariogramEstimate::direction_label);
  m.def(
      "matheron_estimate",
      [](const GridField& data, const LagBins& bins) {
        return matheron_estimate(data, bins);
      },
      py::arg("data"), py::arg("bins"));
  py::class_<FitResult>(m, "FitResult")
      .def_readonly("nugget", &FitResult::nugget)
      .def_readonly("a", &FitResult::a)
      .def_readonly("b", &FitResult::b)
      .def_readonly("residual", &FitResult::residual)
      .def_readonly("converged", &FitResult::converged)
      .def("model", &FitResult::model)
      .def("cov_model", &FitResult::cov_model);
  m.def(
      "fit_variogram",
      [](const VariogramEstimate& table, const std::string& family, int dim,
         double nu, bool fit_nugget, std::uint64_t seed) {
        FitSpec spec;
        if (family == "exponential") {
          spec.family = CovFamily::Exponential;
        } else if (family == "gaussian") {
          spec.family = CovFamily::GaussianModel;
        } else if (family == "spherical") {
          spec.family = CovFamily::Spherical;
        } else if (family == "whittle_matern") {
          spec.family = CovFamily::WhittleMatern;
        } else {
          throw ConfigError("unsupported fit family '" + family + "'");
        }
        spec.dim = dim;
        spec.nu = nu;
        spec.fit_nugget = fit_nugget;
        return fit_variogram(table, spec, std::nullopt, seed);
      },
      py::arg("table"), py::arg("family") = "exponential", py::arg("dim") = 2,
      py::arg("nu") = 1.0, py::arg("fit_nugget") = true, py::arg("seed") = 0);

  // Kriging.
  py::class_<WeightSolution>(m, "WeightSolution")
      .def_readonly("weights", &WeightSolution::weights)
      .def_readonly("intercept", &WeightSolution::intercept)
      .def_readonly("lagrange", &WeightSolution::lagrange)
      .def_readonly("error_variance", &WeightSolution::error_variance)
      .def_readonly("predictor", &WeightSolution::predictor);
  const auto make_obs = [](const std::vector<Eigen::VectorXd>& sites,
                           const Eigen::VectorXd& values, double mean) {
    Observations obs;
    obs.sites = sites;
    obs.values = values;
    obs.mean_fn = [mean](const Eigen::VectorXd&) { return mean; };
    return obs;
  };
  m.def(
      "simple_krige",
      [make_obs](const CovModel& model, const std::vector<Eigen::VectorXd>& sites,
                 const Eigen::VectorXd& values, const Eigen::VectorXd& target,
                 double mean) {
        return simple_krige(model, make_obs(sites, values, mean), target);
      },
      py::arg("model"), py::arg("sites"), py::arg("values"), py::arg("target"),
      py::arg("mean") = 0.0);
  m.def(
      "ordinary_krige",
      [make_obs](const CovModel& model, const std::vector<Eigen::VectorXd>& sites,
                 const Eigen::VectorXd& values, const Eigen::VectorXd& target) {
        return ordinary_krige(model, make_obs(sites, values, 0.0), target);
      },
      py::arg("model"), py::arg("sites"), py::arg("values"), py::arg("target"));

  // Integral representations.
  py::class_<MeasureSpace>(m, "MeasureSpace")
      .def_static("box_midpoint", &MeasureSpace::box_midpoint, py::arg("lo"),
                  py::arg("hi"), py::arg("cells"))
      .def("__len__", &MeasureSpace::size)
      .def_property_readonly("total_mass", &MeasureSpace::total_mass);
  py::class_<Kernel>(m, "Kernel");
  m.def("bisquare_kernel", &bisquare_kernel, py::arg("dim"),
        py::arg("amplitude") = 15.0 / 16.0, py::arg("radius") = 1.0);
  m.def("parabolic_kernel", &parabolic_kernel, py::arg("dim"),
        py::arg("amplitude"), py::arg("radius"));
  py::class_<KernelFamily>(m, "KernelFamily")
      .def_static("moving_average", &KernelFamily::moving_average)
      .def_static("levy_box", &KernelFamily::levy_box)
      .def_static("ou", &KernelFamily::ou, py::arg("rate"));
  py::class_<IntegralField>(m, "IntegralField")
      .def(py::init([](const KernelFamily& kernels, const MeasureSpace& space,
                       double alpha) {
             return IntegralField(kernels, space, alpha);
           }),
           py::arg("kernels"), py::arg("space"), py::arg("alpha"))
      .def_property_readonly("alpha", &IntegralField::alpha);

  // Stable-field extrapolation.
  py::class_<ExtrapProblem>(m, "ExtrapProblem")
      .def_static("from_field", &ExtrapProblem::from_field, py::arg("field"),
                  py::arg("sites"), py::arg("target"))
      .def_static("sub_gaussian", &ExtrapProblem::sub_gaussian,
                  py::arg("model"), py::arg("alpha"), py::arg("sites"),
                  py::arg("target"))
      .def("with_target", &ExtrapProblem::with_target)
      .def("error_scale", &ExtrapProblem::error_scale)
      .def("combo_scale", &ExtrapProblem::combo_scale)
      .def("covariation", &ExtrapProblem::covariation)
      .def_property_readonly("alpha", &ExtrapProblem::alpha)
      .def_property_readonly("site_count", &ExtrapProblem::site_count);
  py::class_<ExtrapSolution>(m, "ExtrapSolution")
      .def_readonly("weights", &ExtrapSolution::weights)
      .def_readonly("objective", &ExtrapSolution::objective)
      .def_readonly("iterations", &ExtrapSolution::iterations)
      .def_readonly("kkt_residual", &ExtrapSolution::kkt_residual)
      .def_readonly("multiplier", &ExtrapSolution::multiplier)
      .def_property_readonly("method", [](const ExtrapSolution& s) {
        return method_name(s.method);
      });
  m.def(
      "solve_extrap",
      [](const ExtrapProblem& problem, const std::string& method,
         std::uint64_t seed) {
        SolverConfig config;
        config.anneal.seed = seed;
        return solve_extrap(problem, method_from_name(method), config);
      },
      py::arg("problem"), py::arg("method"), py::arg("seed") = 1,
      "Solve with one of: lsl, col, mcl, best-lsl, iclsl");
}
