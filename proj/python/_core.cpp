#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sgtopo/driver.hpp"

namespace py = pybind11;
using namespace sgtopo;

namespace {

// Per-element stiffness matrices of one catalog on one mesh, kept on the C++ side.
struct ElementLibrary {
  std::vector<QuadK> k;
};

py::array_t<std::uint8_t> image_to_array(const RveImage& img) {
  std::vector<py::ssize_t> shape(img.dims.begin(), img.dims.end());
  py::array_t<std::uint8_t> out(shape);
  std::copy(img.phase.begin(), img.phase.end(), out.mutable_data());
  return out;
}

RveImage array_to_image(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ParameterError("RVE image must be 2D or 3D");
  RveImage img;
  for (py::ssize_t d = 0; d < a.ndim(); ++d) img.dims.push_back(static_cast<int>(a.shape(d)));
  img.phase.assign(a.data(), a.data() + a.size());
  for (auto& p : img.phase) p = p != 0;
  return img;
}

py::dict stats_dict(const Stats& s) {
  py::dict d;
  d["mean"] = s.mean;
  d["std"] = s.std;
  d["standard_error"] = s.standard_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Topology optimization under random microstructure layouts";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<BoundsError>(m, "BoundsError", PyExc_IndexError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  auto s = m.def_submodule("streams", "stream ids of the seeded random sources");
  s.attr("CATALOG") = streams::kCatalog;
  s.attr("LAYOUTS") = streams::kLayouts;
  s.attr("VERIFICATION") = streams::kVerification;
  s.attr("INITIAL_VERIFICATION") = streams::kInitialVerification;
  s.attr("RVE_EXPORT") = streams::kRveExport;
  s.attr("FD_CHECK") = streams::kFdCheck;

  py::class_<RandomStream>(m, "RandomStream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream_id"))
      .def_property_readonly("seed", &RandomStream::seed)
      .def_property_readonly("stream_id", &RandomStream::stream_id)
      .def("normal", &RandomStream::normal)
      .def("uniform", &RandomStream::uniform, py::arg("lo"), py::arg("hi"))
      .def("index", &RandomStream::index, py::arg("n"))
      .def("substream", &RandomStream::substream, py::arg("stream_id"))
      .def("serialize", &RandomStream::serialize)
      .def_static("deserialize", [](const std::string& t) { return RandomStream::deserialize(t); })
      .def("__eq__", &RandomStream::operator==);

  py::class_<Range>(m, "Range")
      .def(py::init<double, double>(), py::arg("lower"), py::arg("upper"))
      .def_readwrite("lower", &Range::lower)
      .def_readwrite("upper", &Range::upper);

  // elasticity and homogenization
  py::enum_<Hypothesis>(m, "Hypothesis")
      .value("PLANE_STRESS", Hypothesis::PlaneStress)
      .value("PLANE_STRAIN", Hypothesis::PlaneStrain)
      .value("THREE_D", Hypothesis::ThreeD);

  py::class_<IsotropicPhase>(m, "IsotropicPhase")
      .def(py::init([](double E, double nu) { return IsotropicPhase{E, nu}; }), py::arg("E"), py::arg("nu"))
      .def_readwrite("E", &IsotropicPhase::E)
      .def_readwrite("nu", &IsotropicPhase::nu);

  py::class_<ConstitutiveTensor>(m, "ConstitutiveTensor")
      .def(py::init<int, Eigen::MatrixXd>(), py::arg("dim"), py::arg("voigt"))
      .def_property_readonly("dim", &ConstitutiveTensor::dim)
      .def_property_readonly("voigt", &ConstitutiveTensor::voigt)
      .def("is_symmetric", &ConstitutiveTensor::is_symmetric, py::arg("rel_tol") = 1e-10)
      .def("is_positive_definite", &ConstitutiveTensor::is_positive_definite)
      .def("min_eigenvalue", &ConstitutiveTensor::min_eigenvalue);

  m.def("isotropic_tensor", &isotropic_tensor, py::arg("phase"), py::arg("dim") = 2,
        py::arg("hypothesis") = Hypothesis::PlaneStress);

  m.def(
      "homogenize",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image,
         const IsotropicPhase& stiff, const IsotropicPhase& compliant, Hypothesis hypothesis, double tolerance) {
        const RveImage img = array_to_image(image);
        py::gil_scoped_release release;
        return homogenize_fe(img, stiff, compliant, {hypothesis, tolerance});
      },
      "Effective tensor of a periodic image (nonzero pixels are the stiff phase).", py::arg("image"),
      py::arg("stiff"), py::arg("compliant"), py::arg("hypothesis") = Hypothesis::PlaneStress,
      py::arg("tolerance") = 1e-10);

  py::class_<RandomFieldGenerator>(m, "RandomFieldGenerator")
      .def(py::init<>())
      .def_readwrite("period", &RandomFieldGenerator::period)
      .def_readwrite("max_wavenumber", &RandomFieldGenerator::max_wavenumber)
      .def_readwrite("correlation_length", &RandomFieldGenerator::correlation_length)
      .def_readwrite("resolution", &RandomFieldGenerator::resolution)
      .def_readwrite("threshold", &RandomFieldGenerator::threshold)
      .def_readwrite("stiff", &RandomFieldGenerator::stiff)
      .def_readwrite("compliant", &RandomFieldGenerator::compliant)
      .def_readwrite("hypothesis", &RandomFieldGenerator::hypothesis);

  py::class_<UniformGenerator>(m, "UniformGenerator")
      .def(py::init([](const IsotropicPhase& p, Hypothesis h) { return UniformGenerator{p, h}; }),
           py::arg("phase"), py::arg("hypothesis") = Hypothesis::PlaneStress);

  m.def(
      "random_field_image",
      [](const RandomFieldGenerator& g, RandomStream& s) { return image_to_array(random_field_image(g, s)); },
      py::arg("generator"), py::arg("stream"));
  m.def("random_field_entry", &random_field_entry, py::arg("generator"), py::arg("stream"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<MicrostructureCatalog>(m, "MicrostructureCatalog")
      .def(py::init([](std::vector<ConstitutiveTensor> entries) {
             MicrostructureCatalog c;
             if (entries.empty()) throw ParameterError("catalog needs at least one entry");
             c.dim = entries.front().dim();
             c.density.assign(entries.size(), 1.0);
             c.provenance.assign(entries.size(), "python");
             c.generator = "python";
             c.entries = std::move(entries);
             c.validate();
             return c;
           }),
           py::arg("entries"))
      .def_readonly("dim", &MicrostructureCatalog::dim)
      .def_readonly("entries", &MicrostructureCatalog::entries)
      .def_readonly("density", &MicrostructureCatalog::density)
      .def_readonly("generator", &MicrostructureCatalog::generator)
      .def_readonly("seed", &MicrostructureCatalog::seed)
      .def("__len__", &MicrostructureCatalog::size)
      .def("validate", &MicrostructureCatalog::validate)
      .def_static("single", &MicrostructureCatalog::single, py::arg("tensor"));

  m.def(
      "build_catalog",
      [](std::size_t count, const std::variant<RandomFieldGenerator, UniformGenerator>& g, const RandomStream& s,
         unsigned threads) {
        const CatalogGenerator gen = std::visit([](const auto& v) { return CatalogGenerator(v); }, g);
        py::gil_scoped_release release;
        return build_catalog(count, gen, s, threads);
      },
      py::arg("count"), py::arg("generator"), py::arg("stream"), py::arg("threads") = 0);
  m.def("write_catalog", &write_catalog, py::arg("path"), py::arg("catalog"));
  m.def("read_catalog", &read_catalog, py::arg("path"));

  // macroscale model
  py::class_<MacroMesh>(m, "MacroMesh")
      .def_static("half_beam", &MacroMesh::half_beam, py::arg("nx"), py::arg("ny"), py::arg("load") = 1.0)
      .def_readonly("nx", &MacroMesh::nx)
      .def_readonly("ny", &MacroMesh::ny)
      .def_readonly("h", &MacroMesh::h)
      .def("node_count", &MacroMesh::node_count)
      .def("element_count", &MacroMesh::element_count);

  py::class_<ObjectiveWeights>(m, "ObjectiveWeights")
      .def(py::init<>())
      .def_readwrite("strain_energy", &ObjectiveWeights::strain_energy)
      .def_readwrite("mass", &ObjectiveWeights::mass)
      .def_readwrite("perimeter", &ObjectiveWeights::perimeter)
      .def_readwrite("regularization", &ObjectiveWeights::regularization);

  py::class_<ErsatzParams>(m, "ErsatzParams")
      .def(py::init<>())
      .def_readwrite("smoothing_width", &ErsatzParams::smoothing_width)
      .def_readwrite("void_factor", &ErsatzParams::void_factor);

  py::class_<ModelOptions>(m, "ModelOptions")
      .def(py::init<>())
      .def_readwrite("filter_radius", &ModelOptions::filter_radius)
      .def_readwrite("ersatz", &ModelOptions::ersatz)
      .def_readwrite("weights", &ModelOptions::weights)
      .def_readwrite("mass_target", &ModelOptions::mass_target)
      .def_readwrite("bounds", &ModelOptions::bounds)
      .def_readwrite("truncation", &ModelOptions::truncation);

  py::class_<DesignFields>(m, "DesignFields")
      .def_readonly("theta", &DesignFields::theta)
      .def_readonly("phi", &DesignFields::phi)
      .def_readonly("phi_element", &DesignFields::phi_element)
      .def_readonly("indicator", &DesignFields::indicator)
      .def_readonly("density", &DesignFields::density)
      .def_readonly("phi_tilde", &DesignFields::phi_tilde);

  py::class_<ElementLibrary>(m, "ElementLibrary")
      .def(py::init([](const MacroMesh& mesh, const MicrostructureCatalog& c) {
             return ElementLibrary{element_library(mesh, c)};
           }),
           py::arg("mesh"), py::arg("catalog"))
      .def("__len__", [](const ElementLibrary& l) { return l.k.size(); })
      .def("__getitem__", [](const ElementLibrary& l, std::size_t i) -> Eigen::MatrixXd {
        if (i >= l.k.size()) throw BoundsError("library index out of range");
        return l.k[i];
      });

  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("strain_energy", &EvalResult::strain_energy)
      .def_readonly("mass_ratio", &EvalResult::mass_ratio)
      .def_readonly("perimeter", &EvalResult::perimeter)
      .def_readonly("regularization", &EvalResult::regularization)
      .def_readonly("objective", &EvalResult::objective)
      .def_readonly("constraint", &EvalResult::constraint)
      .def_readonly("u", &EvalResult::u);

  py::class_<MacroModel>(m, "MacroModel")
      .def(py::init<MacroMesh, ModelOptions>(), py::arg("mesh"), py::arg("options") = ModelOptions{})
      .def_property_readonly("mesh", &MacroModel::mesh)
      .def_property_readonly("options", &MacroModel::options)
      .def("design_size", &MacroModel::design_size)
      .def("fields", [](const MacroModel& mm, const Eigen::VectorXd& t) { return mm.fields(t); }, py::arg("theta"))
      .def("mass_ratio", &MacroModel::mass_ratio)
      .def("perimeter_penalty", &MacroModel::perimeter_penalty)
      .def("regularization_penalty", &MacroModel::regularization_penalty)
      .def("clamp", &MacroModel::clamp)
      .def(
          "evaluate",
          [](const MacroModel& mm, const Eigen::VectorXd& theta, const Layout& layout, const ElementLibrary& lib,
             double psi0) { return evaluate(mm, mm.fields(theta), layout, lib.k, psi0); },
          py::arg("theta"), py::arg("layout"), py::arg("library"), py::arg("psi0"),
          py::call_guard<py::gil_scoped_release>())
      .def(
          "gradient",
          [](const MacroModel& mm, const Eigen::VectorXd& theta, const std::vector<Layout>& layouts,
             const ElementLibrary& lib, double psi0, unsigned threads) {
            GradientBundle b;
            {
              py::gil_scoped_release release;
              b = stochastic_gradient_bundle(mm, mm.fields(theta), layouts, lib.k, psi0, threads);
            }
            py::dict d;
            d["objective"] = b.objective;
            d["constraint"] = b.constraint;
            d["penalty"] = b.penalty;
            d["strain_energy"] = b.strain_energy;
            d["d_objective"] = b.d_objective;
            d["d_constraint"] = b.d_constraint;
            d["d_penalty"] = b.d_penalty;
            return d;
          },
          "Mini-batch means of f, g, (g+)^2 and their gradients.", py::arg("theta"), py::arg("layouts"),
          py::arg("library"), py::arg("psi0"), py::arg("threads") = 1);

  m.def("seed_holes", &seed_holes, py::arg("mesh"), py::arg("holes_x"), py::arg("holes_y"), py::arg("r_hole"));
  m.def("sample_layouts", &sample_layouts, py::arg("stream"), py::arg("elements"), py::arg("catalog_size"),
        py::arg("count"));

  py::enum_<Functional>(m, "Functional")
      .value("STRAIN_ENERGY", Functional::StrainEnergy)
      .value("MASS", Functional::Mass)
      .value("PERIMETER", Functional::Perimeter)
      .value("REGULARIZATION", Functional::Regularization);

  m.def(
      "fd_check",
      [](const MacroModel& mm, Functional f, const Eigen::VectorXd& theta, const Layout& layout,
         const ElementLibrary& lib, const std::vector<std::size_t>& components, double step) {
        FdReport r;
        {
          py::gil_scoped_release release;
          r = fd_check_functional(mm, f, theta, layout, lib.k, components, step);
        }
        py::list rows;
        for (const auto& e : r.entries) rows.append(py::make_tuple(e.component, e.analytic, e.fd, e.rel_error));
        return py::make_tuple(rows, r.max_rel_error);
      },
      "Rows (component, analytic, fd, rel_error) and the largest rel_error.", py::arg("model"),
      py::arg("functional"), py::arg("theta"), py::arg("layout"), py::arg("library"), py::arg("components"),
      py::arg("step") = 1e-5);

  // optimizer steps
  py::class_<AdamState>(m, "AdamState")
      .def(py::init<>())
      .def_readwrite("m", &AdamState::m)
      .def_readwrite("v", &AdamState::v)
      .def_readwrite("k", &AdamState::k)
      .def_readwrite("beta_m", &AdamState::beta_m)
      .def_readwrite("beta_v", &AdamState::beta_v)
      .def_readwrite("epsilon", &AdamState::epsilon)
      .def_readwrite("eta", &AdamState::eta);
  m.def("adam_step", &adam_step, py::arg("state"), py::arg("theta"), py::arg("h"), py::arg("bounds"));
  m.def("sgd_step", &sgd_step, py::arg("eta"), py::arg("theta"), py::arg("h"), py::arg("bounds"));

  py::class_<GcmmaParams>(m, "GcmmaParams")
      .def(py::init<>())
      .def_readwrite("asyinit", &GcmmaParams::asyinit)
      .def_readwrite("asyincr", &GcmmaParams::asyincr)
      .def_readwrite("asydecr", &GcmmaParams::asydecr)
      .def_readwrite("albefa", &GcmmaParams::albefa)
      .def_readwrite("move", &GcmmaParams::move)
      .def_readwrite("raa0", &GcmmaParams::raa0)
      .def_readwrite("c", &GcmmaParams::c)
      .def_readwrite("d", &GcmmaParams::d)
      .def_readwrite("subproblem_tolerance", &GcmmaParams::subproblem_tolerance)
      .def_readwrite("infeasibility_tolerance", &GcmmaParams::infeasibility_tolerance)
      .def_readwrite("inner_iterations", &GcmmaParams::inner_iterations);
  py::class_<GcmmaState>(m, "GcmmaState")
      .def(py::init<>())
      .def_readwrite("params", &GcmmaState::params)
      .def_readonly("low", &GcmmaState::low)
      .def_readonly("upp", &GcmmaState::upp)
      .def_readonly("iteration", &GcmmaState::iteration);
  m.def(
      "gcmma_step",
      [](GcmmaState& st, const Eigen::VectorXd& theta, double f, const Eigen::VectorXd& df,
         const std::vector<double>& g, const std::vector<Eigen::VectorXd>& dg, const Range& bounds,
         const py::object& evaluator) {
        GcmmaReport rep;
        GcmmaEvaluator evaluate;
        if (!evaluator.is_none()) {
          // Python callable x -> (objective, [constraints]); the GIL stays held.
          evaluate = [&](const Eigen::VectorXd& xt, double& fo, std::vector<double>& go) {
            const py::tuple r = evaluator(xt);
            fo = r[0].cast<double>();
            go = r[1].cast<std::vector<double>>();
          };
        }
        const Eigen::VectorXd x = gcmma_step(st, theta, f, df, g, dg, bounds, &rep, evaluate);
        return py::make_tuple(x, rep.kkt_residual, rep.y, rep.restoration);
      },
      "Returns (x, kkt_residual, y, restoration). `evaluator(x) -> (f, [g])` enables the inner iterations.",
      py::arg("state"), py::arg("theta"), py::arg("objective"), py::arg("d_objective"), py::arg("constraints"),
      py::arg("d_constraints"), py::arg("bounds"), py::arg("evaluator") = py::none());

  // configs and runs
  py::class_<ProblemConfig>(m, "ProblemConfig")
      .def_readwrite("seed", &ProblemConfig::seed)
      .def_readwrite("output", &ProblemConfig::output)
      .def_readwrite("threads", &ProblemConfig::threads)
      .def_readonly("nx", &ProblemConfig::nx)
      .def_readonly("ny", &ProblemConfig::ny)
      .def_readonly("model", &ProblemConfig::model)
      .def_property_readonly("iterations", [](const ProblemConfig& c) { return c.optimizer.iterations; })
      .def_property_readonly("samples", [](const ProblemConfig& c) { return c.optimizer.samples; })
      .def_property_readonly("eta", [](const ProblemConfig& c) { return c.optimizer.eta; })
      .def_property_readonly("catalog_count", [](const ProblemConfig& c) { return c.catalog.count; })
      .def_readonly("verification_samples", &ProblemConfig::verification_samples)
      .def("validate", &ProblemConfig::validate)
      .def("mesh", &ProblemConfig::mesh)
      .def("set", &apply_override, py::arg("assignment"), "Applies one section.key=value override.")
      .def("update", &apply_overrides, py::arg("assignments"), "All overrides or none.")
      .def("to_ini", &to_ini)
      .def("hash", &config_hash)
      .def("__repr__", &to_ini);
  m.def("load_config", &load_config, py::arg("path"));
  m.def("parse_config", &parse_config, py::arg("text"), py::arg("base_dir") = std::filesystem::path{});
  m.def("preset", &preset, py::arg("name"));

  m.def("obtain_catalog", &obtain_catalog, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("initial_design", &initial_design, py::arg("model"), py::arg("config"));
  m.def("write_design", &write_design, py::arg("path"), py::arg("mesh"), py::arg("theta"));
  m.def("read_design", &read_design, py::arg("path"), py::arg("mesh"));

  py::class_<McReport>(m, "McReport")
      .def_readonly("samples", &McReport::samples)
      .def_property_readonly("objective", [](const McReport& r) { return stats_dict(r.objective); })
      .def_property_readonly("constraint", [](const McReport& r) { return stats_dict(r.constraint); })
      .def_property_readonly("strain_energy", [](const McReport& r) { return stats_dict(r.strain_energy); })
      .def_readonly("penalty", &McReport::penalty)
      .def_readonly("mass_ratio", &McReport::mass_ratio)
      .def_readonly("raw_objective", &McReport::raw_objective)
      .def_readonly("raw_constraint", &McReport::raw_constraint);

  m.def(
      "monte_carlo_evaluate",
      [](const MacroModel& mm, const ElementLibrary& lib, const Eigen::VectorXd& theta, double psi0,
         std::size_t samples, RandomStream& stream, unsigned threads, bool keep_raw) {
        return monte_carlo_evaluate(mm, lib.k, theta, psi0, samples, stream, threads, keep_raw);
      },
      py::arg("model"), py::arg("library"), py::arg("theta"), py::arg("psi0"), py::arg("samples"),
      py::arg("stream"), py::arg("threads") = 1, py::arg("keep_raw") = false,
      py::call_guard<py::gil_scoped_release>());
  m.def(
      "exhaustive_evaluate",
      [](const MacroModel& mm, const ElementLibrary& lib, const Eigen::VectorXd& theta, double psi0,
         unsigned threads) { return exhaustive_evaluate(mm, lib.k, theta, psi0, threads); },
      py::arg("model"), py::arg("library"), py::arg("theta"), py::arg("psi0"), py::arg("threads") = 1,
      py::call_guard<py::gil_scoped_release>());

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("exit_code", &RunResult::exit_code)
      .def_readonly("directory", &RunResult::directory)
      .def_readonly("error", &RunResult::error)
      .def_readonly("psi0", &RunResult::psi0)
      .def_property_readonly("theta", [](const RunResult& r) { return r.state.theta; })
      .def_property_readonly("iterations", [](const RunResult& r) { return r.state.iteration; })
      .def_property_readonly("stopped_early", [](const RunResult& r) { return r.state.stopped_early; })
      .def_property_readonly("history",
                             [](const RunResult& r) {
                               py::list rows;
                               for (const auto& h : r.state.history)
                                 rows.append(py::make_tuple(h.iteration, h.objective, h.constraints, h.penalty,
                                                            h.step_norm));
                               return rows;
                             },
                             "(iteration, objective, constraints, penalty, step_norm) per iteration.")
      .def_readonly("initial_mc", &RunResult::initial_mc)
      .def_readonly("final_mc", &RunResult::final_mc);

  m.def(
      "run",
      [](const ProblemConfig& config, std::optional<std::filesystem::path> directory,
         std::optional<std::filesystem::path> resume, bool skip_verification, bool quiet) {
        RunOptions o;
        o.directory = std::move(directory);
        o.resume = std::move(resume);
        o.skip_verification = skip_verification;
        o.quiet = quiet;
        return run(config, o);
      },
      py::arg("config"), py::arg("directory") = py::none(), py::arg("resume") = py::none(),
      py::arg("skip_verification") = false, py::arg("quiet") = true, py::call_guard<py::gil_scoped_release>());
}
