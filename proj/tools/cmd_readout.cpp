#include "cli_support.hpp"

#include "quditkit/readout.hpp"

namespace quditkit::cli {
namespace {

std::string prefix(ConfigReader& r, const std::string& fallback) {
  const auto name = r.get<std::string>("name", fallback);
  require_range(!name.empty() && name.find('/') == std::string::npos, "name must be a plain file stem");
  return name;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Command readout_cmd() {
  return {"readout", "synthetic multi-tone readout, GMM classification and population correction", [](ConfigReader& r) {
            const std::string name = prefix(r, "readout");
            const int d = r.get<int>("d", 8);
            require_range(d >= 2, "readout: d must be >= 2");
            const double f_r = r.get<double>("f_r", 6.410);
            const double g = r.get<double>("g", 0.028);
            const double kappa = r.get<double>("kappa_mhz", 0.1);
            require_range(f_r > 0.0 && g > 0.0 && kappa > 0.0, "readout: f_r, g and kappa_mhz must be positive");
            if (r.has("sigma") && r.has("target_fidelity")) throw ConfigError("readout: give sigma or target_fidelity, not both");
            const double sigma = r.get<double>("sigma", -1.0);
            const double target = r.get<double>("target_fidelity", sigma < 0.0 ? 0.883 : -1.0);
            if (sigma < 0.0) require_range(target > 1.0 / d && target < 1.0, "readout: target_fidelity must lie in (1/d, 1)");
            const int tuning_shots = r.get<int>("tuning_shots", 2000);
            const int training_shots = r.get<int>("training_shots", 1000);
            const int calibration_shots = r.get<int>("calibration_shots", 5000);
            const int trials = r.get<int>("population_trials", 5);
            const int population_shots = r.get<int>("population_shots", 5000);
            const int restarts = r.get<int>("gmm_restarts", 4);
            const bool write_dataset = r.get<bool>("write_dataset", true);
            require_range(tuning_shots >= 1 && training_shots >= 2 && calibration_shots >= 1 && population_shots >= 1,
                          "readout: shot counts must be positive");
            require_range(trials >= 0 && restarts >= 1, "readout: population_trials >= 0 and gmm_restarts >= 1 required");
            return [=](const RunContext& ctx, Outputs& out) {
              const Rng root(ctx.seed);
              ResonatorModel model = synthetic_resonator(d, ctx.device, f_r, g);
              model.kappa_mhz = kappa;
              choose_tones(model);
              Json spectrum;
              spectrum["chi_mhz"] = model.chi_mhz;
              spectrum["tones_ghz"] = model.tones;
              spectrum["kappa_mhz"] = kappa;
              if (sigma >= 0.0) {
                model.sigma = sigma;
              } else {
                GmmOptions tg;
                tg.restarts = restarts;
                tg.seed = root.split(2).seed();
                const NoiseTuning t = tune_noise_trained(model, target, training_shots, tuning_shots, root.split(0).seed(), tg);
                spectrum["target_fidelity"] = target;
                spectrum["tuned_fidelity"] = t.fidelity;
                spectrum["tuning_iterations"] = t.iterations;
              }
              spectrum["sigma"] = model.sigma;
              ctx.log("sigma = " + num(model.sigma));

              const IqDataset training = simulate_calibration(model, training_shots, root.split(1).seed());
              GmmOptions go;
              go.restarts = restarts;
              go.seed = root.split(2).seed();
              const GaussianMixture mix = fit_gmm(training, d, go);
              if (!mix.converged) ctx.log("warning: EM stopped at the iteration limit");
              const IqDataset calibration = simulate_calibration(model, calibration_shots, root.split(3).seed());
              const AssignmentMatrix a = assignment_matrix(mix, calibration, d);

              Json aj;
              aj["d"] = d;
              aj["convention"] = "matrix[assigned][prepared]";
              Json rows = Json::array();
              for (int i = 0; i < d; ++i) {
                std::vector<double> row;
                for (int k = 0; k < d; ++k) row.push_back(a.p(i, k));
                rows.push_back(row);
              }
              aj["matrix"] = rows;
              aj["average_fidelity"] = a.average_fidelity();
              aj["average_fidelity_standard_error"] = average_fidelity_standard_error(a, calibration_shots);
              aj["condition_number"] = a.condition_number();
              aj["shots_per_state"] = calibration_shots;

              Json pops = Json::array();
              double worst_z = 0.0;
              for (int t = 0; t < trials; ++t) {
                Rng rng = root.split(100 + static_cast<std::uint64_t>(t));
                Eigen::VectorXd p(d);
                for (int i = 0; i < d; ++i) p(i) = -std::log(rng.uniform(1e-12, 1.0));
                p /= p.sum();
                const IqDataset shots = simulate_populations(model, p, population_shots, rng.split(1).seed());
                Eigen::VectorXd raw = Eigen::VectorXd::Zero(d);
                for (int c : classify(mix, shots.samples)) raw(c) += 1.0;
                raw /= static_cast<double>(population_shots);
                const PopulationEstimate est = correct_populations(raw, a);
                const Eigen::VectorXd se = corrected_standard_errors(a, p, population_shots, calibration_shots);
                const Eigen::VectorXd z = (est.p - p).cwiseAbs().cwiseQuotient(se);
                worst_z = std::max(worst_z, z.maxCoeff());
                Json pj;
                pj["true"] = to_std(p);
                pj["raw"] = to_std(raw);
                pj["corrected"] = to_std(est.p);
                pj["standard_error"] = to_std(se);
                pj["max_z"] = z.maxCoeff();
                pops.push_back(pj);
              }

              Json summary;
              summary["command"] = "readout";
              summary["d"] = d;
              summary["spectrum"] = spectrum;
              summary["gmm"] = {{"log_likelihood", mix.log_likelihood}, {"iterations", mix.iterations}, {"converged", mix.converged},
                                {"regularized", mix.regularized}, {"training_shots_per_state", training_shots}};
              summary["average_fidelity"] = a.average_fidelity();
              summary["population_trials"] = pops;
              if (trials > 0) summary["max_population_z"] = worst_z;

              if (write_dataset) {
                Csv csv({"i1", "q1", "i2", "q2", "i3", "q3", "label"});
                for (int i = 0; i < calibration.size(); ++i) {
                  std::vector<std::string> row;
                  for (int f = 0; f < kReadoutFeatures; ++f) row.push_back(num(calibration.samples(i, f)));
                  row.push_back(std::to_string(calibration.labels[static_cast<size_t>(i)]));
                  csv.row(row);
                }
                out.add(name + "_dataset.csv", csv.str());
                out.plot(name + "_dataset.csv", "i1", {"q1"}, "IQ clusters, tone 1");
              }
              out.add_json(name + "_assignment.json", aj);
              out.add_json(name + ".json", summary);
            };
          }};
}

}  // namespace

std::vector<Command> readout_commands() { return {readout_cmd()}; }

}  // namespace quditkit::cli
