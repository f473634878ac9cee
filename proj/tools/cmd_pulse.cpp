#include "cli_support.hpp"

#include "quditkit/budget.hpp"
#include "quditkit/parallel.hpp"
#include "quditkit/pulse.hpp"

#include <cmath>

namespace quditkit::cli {
namespace {

constexpr int kCalibrationVersion = 1;

std::string prefix(ConfigReader& r, const std::string& fallback) {
  const auto name = r.get<std::string>("name", fallback);
  require_range(!name.empty() && name.find('/') == std::string::npos, "name must be a plain file stem");
  return name;
}

Json corrections_json(const CorrectionSet& c) {
  Json j;
  j["pre_snap"] = c.pre_snap.phases;
  j["post_snap"] = c.post_snap.phases;
  j["detunings_ghz"] = c.detunings;
  j["drag_weights"] = c.drag_weights;
  return j;
}

// ---------------------------------------------------------------------------
// pulse-optimize

struct StagedResult {
  double none = 0.0, phase = 0.0, detuning = 0.0, drag = 0.0;
  double leakage_none = 0.0, leakage_final = 0.0;
  double final_fidelity = 0.0;
  CorrectionSet final_corrections;
  int evaluations = 0;
};

// Stages run in the fixed order phase -> detuning -> drag, each warm-started
// from the previous one; a stage that would lower the fidelity is discarded.
StagedResult run_stages(const PulseModel& model, bool phase, bool detuning, bool drag, const GoatOptions& goat) {
  StagedResult s;
  const int tones = model.base_drive().size();
  const auto bare = model.run(model.base_drive());
  s.none = gate_fidelity(model.target(), bare.frame);
  s.leakage_none = s.leakage_final = bare.leakage;
  s.final_fidelity = s.none;
  s.final_corrections.pre_snap = s.final_corrections.post_snap = SnapPhases::zeros(model.problem().d);
  s.final_corrections.detunings.assign(static_cast<size_t>(tones), 0.0);
  s.final_corrections.drag_weights.assign(static_cast<size_t>(tones), 0.0);
  if (!(phase || detuning || drag)) return s;
  const auto ph = optimize_phase_corrections(bare.frame, model.target());
  s.phase = ph.fidelity;
  if (ph.fidelity >= s.final_fidelity) {
    s.final_fidelity = ph.fidelity;
    s.final_corrections.pre_snap = ph.pre;
    s.final_corrections.post_snap = ph.post;
  }
  auto stage = [&](PulseParameterSet set, double& slot) {
    const GoatResult r = goat_optimize(model, set, s.final_corrections, goat);
    s.evaluations += r.evaluations;
    if (r.fidelity >= s.final_fidelity) {
      s.final_fidelity = r.fidelity;
      s.final_corrections = r.corrections;
      s.leakage_final = r.leakage;
    }
    slot = s.final_fidelity;
  };
  if (detuning) stage({.detunings = true, .drag = false}, s.detuning);
  if (drag) stage({.detunings = detuning, .drag = true}, s.drag);
  return s;
}

Command pulse_optimize() {
  return {"pulse-optimize", "multi-tone displacement pulses with phase, detuning and DRAG corrections", [](ConfigReader& r) {
            const std::string name = prefix(r, "pulse");
            std::optional<TransmonSpec> device;
            if (r.has("device_spec")) device = device_from(r.raw("device_spec"), "device_spec");
            const int d = r.get<int>("d", 3);
            require_range(d >= 2, "pulse-optimize: d must be >= 2");
            std::vector<double> durations;
            if (r.has("T_ns") && r.has("durations")) throw ConfigError("pulse-optimize: give T_ns or durations, not both");
            if (r.has("durations"))
              durations = get_list<double>(r, "durations", {});
            else
              durations = {r.get<double>("T_ns", 60.0)};
            require_range(!durations.empty(), "pulse-optimize: durations must not be empty");
            for (double t : durations) require_range(t > 0.0, "pulse-optimize: durations must be positive");
            const double theta = r.get<double>("theta", kPi / 2);
            const double phi = r.get<double>("phi", 0.0);
            const auto corrections = get_list<std::string>(r, "corrections", {"phase", "detuning", "drag"});
            bool phase = false, detuning = false, drag = false;
            for (const auto& c : corrections) {
              if (c == "phase")
                phase = true;
              else if (c == "detuning")
                detuning = true;
              else if (c == "drag")
                drag = true;
              else
                throw ConfigError("pulse-optimize: unknown correction '" + c + "' (phase, detuning, drag)");
            }
            GoatOptions goat;
            goat.max_iterations = r.get<int>("max_iterations", goat.max_iterations);
            goat.max_evaluations = r.get<int>("max_evaluations", goat.max_evaluations);
            goat.gradient_tolerance = r.get<double>("gradient_tolerance", goat.gradient_tolerance);
            require_range(goat.max_iterations >= 1 && goat.max_evaluations >= 1, "pulse-optimize: iteration limits must be >= 1");
            const int guard = r.get<int>("guard_levels", 3);
            require_range(guard >= 1, "pulse-optimize: guard_levels must be >= 1");
            // The optimiser is deterministic; the seed is recorded for provenance.
            const auto job_seed = r.get<std::uint64_t>("seed", 0);
            return [=](const RunContext& ctx, Outputs& out) {
              const TransmonSpec dev = device ? *device : ctx.device;
              std::vector<StagedResult> results(durations.size());
              parallel_for(static_cast<int>(durations.size()), ctx.threads, [&](int i) {
                PulseProblem p;
                p.device = dev;
                p.d = d;
                p.duration = durations[static_cast<size_t>(i)];
                p.theta = theta;
                p.phi = phi;
                p.guard_levels = guard;
                results[static_cast<size_t>(i)] = run_stages(PulseModel(p), phase, detuning, drag, goat);
              });
              Csv csv({"T_ns", "F_none", "F_phase", "F_phase_detuning", "F_all", "F_final", "leakage_none", "leakage_final"});
              std::string log;
              std::vector<double> t, e_none;
              for (size_t i = 0; i < durations.size(); ++i) {
                const auto& s = results[i];
                csv.row({durations[i], s.none, phase || detuning || drag ? s.phase : NAN, detuning ? s.detuning : NAN, drag ? s.drag : NAN,
                         s.final_fidelity, s.leakage_none, s.leakage_final});
                Json line;
                line["d"] = d;
                line["T_ns"] = durations[i];
                line["theta"] = theta;
                line["phi"] = phi;
                line["corrections"] = corrections;
                line["seed"] = job_seed;
                line["fidelity_none"] = s.none;
                line["fidelity"] = s.final_fidelity;
                line["leakage"] = s.leakage_final;
                line["evaluations"] = s.evaluations;
                line["parameters"] = corrections_json(s.final_corrections);
                log += line.dump() + "\n";
                t.push_back(durations[i]);
                e_none.push_back(1.0 - s.none);
                ctx.log("T = " + num(durations[i]) + " ns: F_none " + num(s.none) + " -> " + num(s.final_fidelity));
              }
              Json summary;
              summary["command"] = "pulse-optimize";
              summary["d"] = d;
              summary["device"] = {{"ej", dev.ej}, {"ec", dev.ec}, {"ng", dev.ng}, {"f01", transition_frequencies(dev, 1)[0]}};
              if (durations.size() >= 2) {
                const auto fit = fit_inverse_square(t, e_none);
                summary["uncorrected_inverse_square_fit"] = {{"coefficient_ns2", fit.coefficient}, {"r_squared", fit.r_squared}};
              }
              out.add(name + ".jsonl", log);
              out.add(name + ".csv", csv.str());
              out.add_json(name + ".json", summary);
              out.plot(name + ".csv", "T_ns", {"F_none", "F_phase", "F_phase_detuning", "F_all"}, "Displacement fidelity vs duration");
            };
          }};
}

// ---------------------------------------------------------------------------
// calibrate-budget: A(d) from uncorrected pulse sweeps

Command calibrate_budget() {
  return {"calibrate-budget", "coherent-error coefficient A(d) from pulse sweeps", [](ConfigReader& r) {
            const std::string name = prefix(r, "budget_calibration");
            const auto ds = get_list<int>(r, "ds", {3, 5, 8});
            require_range(!ds.empty(), "calibrate-budget: ds must not be empty");
            for (int d : ds) require_range(d >= 2, "calibrate-budget: every d must be >= 2");
            const double f01 = r.get<double>("f01", 4.896);
            const double ratio = r.get<double>("ej_over_ec", 270.0);
            require_range(f01 > 0.0 && ratio > 0.0, "calibrate-budget: f01 and ej_over_ec must be positive");
            const auto scales = get_list<double>(r, "duration_scales", {1.0, 1.5, 2.0, 2.5, 3.0, 3.5});
            require_range(scales.size() >= 2, "calibrate-budget: need at least two duration scales");
            for (double s : scales) require_range(s > 0.0, "calibrate-budget: duration scales must be positive");
            return [=](const RunContext& ctx, Outputs& out) {
              const TransmonSpec dev = budget_device(f01, ratio);
              Json entries = Json::array();
              Csv sweep({"d", "T_ns", "infidelity", "leakage"});
              for (int d : ds) {
                std::vector<double> durations;
                for (double s : scales) durations.push_back((6.0 * d + 12.0) * s);
                const auto cal = calibrate_coherent_coefficient(dev, d, durations, ctx.threads);
                Json e;
                e["d"] = d;
                e["a_d"] = cal.a_d;
                e["coefficient_ns2"] = cal.coefficient;
                e["r_squared"] = cal.r_squared;
                e["durations_ns"] = durations;
                entries.push_back(e);
                for (const auto& p : cal.points) sweep.row({static_cast<double>(d), p.duration, p.infidelity, p.leakage});
                ctx.log("A(" + std::to_string(d) + ") = " + num(cal.a_d) + ", R^2 " + num(cal.r_squared));
              }
              Json doc;
              doc["format"] = "quditkit-budget-calibration";
              doc["version"] = kCalibrationVersion;
              doc["device"] = {{"f01", f01}, {"ej_over_ec", ratio}, {"ej", dev.ej}, {"ec", dev.ec}};
              doc["entries"] = entries;
              out.add_json(name + ".json", doc);
              out.add(name + "_sweep.csv", sweep.str());
              out.plot(name + "_sweep.csv", "T_ns", {"infidelity"}, "Uncorrected infidelity vs duration per d");
            };
          }};
}

// ---------------------------------------------------------------------------
// budget: T_opt and E_min curves from a calibration file

std::map<int, double> read_calibration(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("budget: calibration file '" + path.string() + "' not found; run calibrate-budget first");
  const Json doc = load_json_file(path);
  if (!doc.is_object() || doc.value("format", "") != "quditkit-budget-calibration")
    throw ConfigError("budget: '" + path.string() + "' is not a budget calibration file");
  if (doc.value("version", 0) != kCalibrationVersion) throw ConfigError("budget: unsupported calibration version");
  std::map<int, double> a;
  for (const auto& e : doc.at("entries")) a[e.at("d").get<int>()] = e.at("a_d").get<double>();
  return a;
}

Command budget_cmd() {
  return {"budget", "optimal duration and minimum infidelity vs quality factor", [](ConfigReader& r) {
            const std::string name = prefix(r, "budget");
            const std::string calibration = r.get<std::string>("calibration", "");
            const auto ds = get_list<int>(r, "ds", {3, 5, 8});
            require_range(!ds.empty(), "budget: ds must not be empty");
            BudgetInputs base;
            base.f01 = r.get<double>("f01", base.f01);
            base.ej_over_ec = r.get<double>("ej_over_ec", base.ej_over_ec);
            const double t01_us = r.get<double>("t01_us", 46.0);
            require_range(t01_us > 0.0, "budget: t01_us must be positive");
            const double q_ref = t01_us * 1e3 * base.f01;
            std::vector<double> qs = get_list<double>(r, "q_values", {});
            if (qs.empty()) {
              const double lo = r.get<double>("q_min", 1e5), hi = r.get<double>("q_max", 1e8);
              const int points = r.get<int>("points", 31);
              require_range(lo > 0.0 && hi > lo && points >= 2, "budget: need 0 < q_min < q_max and points >= 2");
              for (int i = 0; i < points; ++i) qs.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
            }
            for (double q : qs) require_range(q > 0.0, "budget: Q values must be positive");
            base.validate(false);
            return [=](const RunContext& ctx, Outputs& out) {
              const fs::path path = calibration.empty() ? ctx.out / "budget_calibration.json" : fs::path(calibration);
              const auto a = read_calibration(path);
              Csv csv({"Q", "d", "T_opt", "E_min"});
              Json predictions = Json::array();
              for (int d : ds) {
                const auto it = a.find(d);
                if (it == a.end()) throw ConfigError("budget: no A(d) for d = " + std::to_string(d) + " in the calibration file");
                BudgetInputs in = base;
                in.d = d;
                in.a_d = it->second;
                for (const auto& row : budget_curve(in, qs)) csv.row({row.q_factor, static_cast<double>(row.d), row.t_opt, row.e_min});
                in.q_factor = q_ref;
                const auto numeric = minimize_total_error(in);
                Json p;
                p["d"] = d;
                p["a_d"] = in.a_d;
                p["Q"] = q_ref;
                p["T_opt_ns"] = optimal_duration(in);
                p["E_min"] = minimum_infidelity(in);
                p["fidelity"] = 1.0 - minimum_infidelity(in);
                p["numeric_T_opt_ns"] = numeric.duration;
                p["numeric_E_min"] = numeric.error;
                predictions.push_back(p);
              }
              Json summary;
              summary["command"] = "budget";
              summary["calibration"] = path.string();
              summary["f01"] = base.f01;
              summary["ej_over_ec"] = base.ej_over_ec;
              summary["t01_us"] = t01_us;
              summary["predictions"] = predictions;
              out.add(name + ".csv", csv.str());
              out.add_json(name + ".json", summary);
              out.plot(name + ".csv", "Q", {"E_min", "T_opt"}, "Minimum infidelity and optimal duration vs Q");
            };
          }};
}

}  // namespace

std::vector<Command> pulse_commands() { return {pulse_optimize(), calibrate_budget(), budget_cmd()}; }

}  // namespace quditkit::cli
