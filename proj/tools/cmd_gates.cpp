#include "cli_support.hpp"

#include "quditkit/decomposer.hpp"
#include "quditkit/gates.hpp"
#include "quditkit/parallel.hpp"
#include "quditkit/wigner.hpp"

#include <algorithm>

namespace quditkit::cli {
namespace {

std::string prefix(ConfigReader& r, const std::string& fallback) {
  const auto name = r.get<std::string>("name", fallback);
  require_range(!name.empty() && name.find('/') == std::string::npos, "name must be a plain file stem");
  return name;
}

Json matrix_json(const ComplexMatrix& m) {
  Json re = Json::array(), im = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json rr = Json::array(), ir = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      rr.push_back(m(i, j).real());
      ir.push_back(m(i, j).imag());
    }
    re.push_back(rr);
    im.push_back(ir);
  }
  return Json{{"re", re}, {"im", im}};
}

ComplexMatrix matrix_from_json(const Json& j, int d, const std::string& what) {
  ConfigReader r(j, what);
  const Json& re = r.raw("re");
  const Json im = r.has("im") ? r.raw("im") : Json();
  r.finish();
  ComplexMatrix m(d, d);
  auto entry = [&](const Json& a, int i, int k) {
    if (!a.is_array() || static_cast<int>(a.size()) != d || !a[static_cast<size_t>(i)].is_array() ||
        static_cast<int>(a[static_cast<size_t>(i)].size()) != d || !a[static_cast<size_t>(i)][static_cast<size_t>(k)].is_number())
      throw ConfigError(what + " must be a " + std::to_string(d) + "x" + std::to_string(d) + " numeric matrix");
    return a[static_cast<size_t>(i)][static_cast<size_t>(k)].get<double>();
  };
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) m(i, k) = {entry(re, i, k), im.is_null() ? 0.0 : entry(im, i, k)};
  return m;
}

// ---------------------------------------------------------------------------
// displace-scan: level populations and <Jz> of D(theta, phi)|0> vs pulse area

Command displace_scan() {
  return {"displace-scan", "populations vs displacement angle", [](ConfigReader& r) {
            const std::string name = prefix(r, "displace_scan");
            const int d = r.get<int>("d", 8);
            const double lo = r.get<double>("theta_min", 0.0);
            const double hi = r.get<double>("theta_max", kPi);
            const int points = r.get<int>("points", 101);
            const double phi = r.get<double>("phi", 0.0);
            const int level = r.get<int>("initial_level", 0);
            require_range(d >= 2, "displace-scan: d must be >= 2");
            require_range(points >= 2, "displace-scan: points must be >= 2");
            require_range(hi > lo, "displace-scan: theta_max must exceed theta_min");
            require_range(level >= 0 && level < d, "displace-scan: initial_level out of range");
            return [=](const RunContext&, Outputs& out) {
              const SpinDimension dim(d);
              std::vector<std::string> header{"theta"};
              for (int n = 0; n < d; ++n) header.push_back("p" + std::to_string(n));
              header.push_back("jz");
              header.push_back("jz_coherent");
              Csv csv(header);
              const ComplexVector psi0 = basis_state(d, level);
              for (int i = 0; i < points; ++i) {
                const double theta = lo + (hi - lo) * i / (points - 1);
                const ComplexVector psi = displacement(dim, theta, phi) * psi0;
                std::vector<double> row{theta};
                for (int n = 0; n < d; ++n) row.push_back(std::norm(psi(n)));
                row.push_back(expectation_jz(psi));
                row.push_back(dim.j() * std::cos(theta));
                csv.row(row);
              }
              const ComplexVector flipped = displacement(dim, kPi, 0.0) * basis_state(d, 0);
              Json summary;
              summary["command"] = "displace-scan";
              summary["d"] = d;
              summary["full_transfer_population"] = std::norm(flipped(d - 1));
              out.add(name + ".csv", csv.str());
              out.add_json(name + ".json", summary);
              std::vector<std::string> ys(header.begin() + 1, header.end());
              out.plot(name + ".csv", "theta", ys, "Level populations vs displacement angle");
            };
          }};
}

// ---------------------------------------------------------------------------
// wigner-scan: W(theta, phi) on a Gauss-Legendre grid, then reconstruction

ComplexMatrix make_state(ConfigReader r, int d, std::uint64_t seed) {
  const SpinDimension dim(d);
  const std::string kind = r.get<std::string>("kind", "cat");
  ComplexMatrix rho;
  if (kind == "coherent") {
    const ComplexVector v = coherent_state(dim, r.get<double>("theta", kPi / 2), r.get<double>("phi", 0.0));
    rho = v * v.adjoint();
  } else if (kind == "cat") {
    const int sign = r.get<int>("sign", 1);
    require_range(sign == 1 || sign == -1, "state.sign must be +1 or -1");
    const ComplexVector v = cat_state(dim, sign);
    rho = v * v.adjoint();
  } else if (kind == "basis") {
    const int n = r.get<int>("level", 0);
    require_range(n >= 0 && n < d, "state.level out of range");
    const ComplexVector v = basis_state(d, n);
    rho = v * v.adjoint();
  } else if (kind == "random_mixed") {
    const int rank = r.get<int>("rank", d);
    require_range(rank >= 1 && rank <= d, "state.rank must lie in [1, d]");
    rho = random_density_matrix(d, rank, r.get<std::uint64_t>("seed", seed));
  } else if (kind == "density") {
    rho = matrix_from_json(r.raw("rho"), d, "state.rho");
    try {
      require_density_matrix(rho, "state.rho", 1e-8);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  } else {
    throw ConfigError("state.kind must be coherent, cat, basis, random_mixed or density");
  }
  r.finish();
  return rho;
}

std::vector<WignerSample> read_scan_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scan_csv '" + path + "'");
  std::string line;
  std::getline(f, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "theta,phi,w") throw ConfigError("scan_csv must start with the header theta,phi,w");
  std::vector<WignerSample> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string a, b, c;
    WignerSample s;
    try {
      if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) throw std::invalid_argument("");
      size_t pos = 0;
      s.theta = std::stod(a, &pos);
      s.phi = std::stod(b);
      s.w = std::stod(c);
    } catch (const std::exception&) {
      throw ConfigError("scan_csv line " + std::to_string(lineno) + " is not three numbers");
    }
    out.push_back(s);
  }
  return out;
}

Command wigner_scan() {
  return {"wigner-scan", "spin Wigner function scan and density reconstruction", [](ConfigReader& r) {
            const std::string name = prefix(r, "wigner_scan");
            const int d = r.get<int>("d", 3);
            require_range(d >= 2, "wigner-scan: d must be >= 2");
            const int n_theta = r.get<int>("n_theta", 4 * d);
            const int n_phi = r.get<int>("n_phi", 4 * d);
            require_range(n_theta >= 1 && n_phi >= 1, "wigner-scan: grid sizes must be positive");
            const bool do_reconstruct = r.get<bool>("reconstruct", true);
            const std::string scan_csv = r.get<std::string>("scan_csv", "");
            std::optional<Json> state_json;
            if (r.has("state")) state_json = r.raw("state");
            if (!scan_csv.empty() && state_json) throw ConfigError("wigner-scan: give either state or scan_csv, not both");
            return [=](const RunContext& ctx, Outputs& out) {
              Json summary;
              summary["command"] = "wigner-scan";
              summary["d"] = d;
              std::vector<WignerSample> samples;
              std::optional<ComplexMatrix> truth;
              if (!scan_csv.empty()) {
                samples = read_scan_csv(scan_csv);
                summary["source"] = scan_csv;
              } else {
                truth = make_state(ConfigReader(state_json ? *state_json : Json::object(), "state"), d, ctx.seed);
                const auto grid = PhaseSpaceGrid::gauss_legendre(n_theta, n_phi);
                samples = wigner_scan(*truth, grid, ctx.threads);
                Csv csv({"theta", "phi", "w"});
                for (const auto& s : samples) csv.row({s.theta, s.phi, s.w});
                out.add(name + ".csv", csv.str());
                out.plot(name + ".csv", "phi", {"theta", "w"}, "Spin Wigner function");
                summary["grid"] = {{"n_theta", n_theta}, {"n_phi", n_phi}};
              }
              summary["samples"] = samples.size();
              if (do_reconstruct) {
                const auto rec = reconstruct_density(samples, SpinDimension(d));
                Json rj;
                rj["residual_norm"] = rec.residual_norm;
                rj["min_eigenvalue"] = rec.min_eigenvalue;
                rj["psd_distance"] = rec.psd_distance;
                rj["rank"] = rec.rank;
                if (truth) rj["trace_distance"] = trace_distance(rec.rho, *truth);
                rj["rho"] = matrix_json(rec.rho);
                summary["reconstruction"] = rj;
              }
              out.add_json(name + ".json", summary);
            };
          }};
}

// ---------------------------------------------------------------------------
// decompose: SNAP-displacement synthesis of Haar-random (or given) unitaries

Command decompose_cmd() {
  return {"decompose", "SNAP-displacement synthesis of SU(d) targets", [](ConfigReader& r) {
            const std::string name = prefix(r, "decompose");
            const int d = r.get<int>("d", 4);
            require_range(d >= 2, "decompose: d must be >= 2");
            const int depth = r.get<int>("depth", d);
            require_range(depth >= 0, "decompose: depth must be >= 0");
            const SynthesisMode mode = [&] {
              try {
                return synthesis_mode_from_string(r.get<std::string>("mode", "general"));
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            }();
            DecomposeOptions opt;
            opt.restarts = r.get<int>("restarts", 20);
            opt.max_iterations = r.get<int>("max_iterations", opt.max_iterations);
            opt.threshold = r.get<double>("threshold", opt.threshold);
            require_range(opt.restarts >= 1, "decompose: restarts must be >= 1");
            require_range(opt.max_iterations >= 1, "decompose: max_iterations must be >= 1");
            const double success = r.get<double>("success_infidelity", 1e-6);
            std::optional<ComplexMatrix> given;
            if (r.has("target")) {
              given = matrix_from_json(r.raw("target"), d, "target");
              require_range(is_unitary(*given, 1e-8), "decompose: target is not unitary");
            }
            const int targets = r.get<int>("targets", given ? 1 : 100);
            require_range(targets >= 1, "decompose: targets must be >= 1");
            require_range(!given || targets == 1, "decompose: an explicit target implies targets = 1");
            return [=](const RunContext& ctx, Outputs& out) {
              const Rng root(ctx.seed);
              std::vector<DecomposeResult> results(static_cast<size_t>(targets));
              std::vector<std::uint64_t> seeds(static_cast<size_t>(targets));
              parallel_for(targets, ctx.threads, [&](int i) {
                const std::uint64_t s = root.split(static_cast<std::uint64_t>(i)).seed();
                seeds[static_cast<size_t>(i)] = s;
                DecomposeOptions o = opt;
                o.seed = splitmix64(s);
                o.threads = 1;
                const ComplexMatrix u = given ? *given : haar_random_unitary(d, s);
                results[static_cast<size_t>(i)] = decompose(u, depth, mode, o);
              });
              Csv csv({"target", "target_seed", "infidelity", "best_restart", "restarts_run", "pulses"});
              std::string programs;
              std::vector<double> inf;
              int ok = 0;
              for (int i = 0; i < targets; ++i) {
                const auto& res = results[static_cast<size_t>(i)];
                csv.row(std::vector<std::string>{std::to_string(i), std::to_string(seeds[static_cast<size_t>(i)]), num(res.infidelity),
                                                 std::to_string(res.best_restart), std::to_string(res.restart_infidelities.size()),
                                                 std::to_string(res.program.pulse_count())});
                Json pj = program_to_json(res.program);
                Json line;
                line["target"] = i;
                line["infidelity"] = res.infidelity;
                line["program"] = pj;
                programs += line.dump() + "\n";
                inf.push_back(res.infidelity);
                ok += res.infidelity < success;
                ctx.log("target " + std::to_string(i) + " infidelity " + num(res.infidelity));
              }
              std::sort(inf.begin(), inf.end());
              const double median = inf.size() % 2 ? inf[inf.size() / 2] : 0.5 * (inf[inf.size() / 2 - 1] + inf[inf.size() / 2]);
              Json summary;
              summary["command"] = "decompose";
              summary["d"] = d;
              summary["depth"] = depth;
              summary["mode"] = to_string(mode);
              summary["restarts"] = opt.restarts;
              summary["targets"] = targets;
              summary["success_infidelity"] = success;
              summary["successes"] = ok;
              summary["median_infidelity"] = median;
              summary["max_infidelity"] = inf.back();
              out.add(name + ".csv", csv.str());
              out.add(name + "_programs.jsonl", programs);
              out.add_json(name + ".json", summary);
              out.plot(name + ".csv", "target", {"infidelity"}, "Synthesis infidelity per target");
            };
          }};
}

}  // namespace

std::vector<Command> gate_commands() { return {displace_scan(), wigner_scan(), decompose_cmd()}; }

}  // namespace quditkit::cli
