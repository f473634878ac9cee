#include "cli_support.hpp"

#include "quditkit/parallel.hpp"
#include "quditkit/rb.hpp"

namespace quditkit::cli {
namespace {

std::string prefix(ConfigReader& r, const std::string& fallback) {
  const auto name = r.get<std::string>("name", fallback);
  require_range(!name.empty() && name.find('/') == std::string::npos, "name must be a plain file stem");
  return name;
}

RbOptions read_rb(ConfigReader& r) {
  RbOptions o;
  o.lengths = get_list<int>(r, "lengths", o.lengths);
  o.sequences = r.get<int>("n_sequences", o.sequences);
  require_range(o.lengths.size() >= 3, "rb: need at least three sequence lengths");
  for (int m : o.lengths) require_range(m >= 0, "rb: lengths must be >= 0");
  require_range(o.sequences >= 1, "rb: n_sequences must be >= 1");
  return o;
}

CliffordSet compile(int d, std::uint64_t seed, int threads) {
  DecomposeOptions o;
  o.seed = seed;
  o.threads = threads;
  return compile_clifford_set(SpinDimension(d), o);
}

Json fit_json(const RbFit& f) {
  Json j;
  j["A"] = f.a;
  j["p"] = f.p;
  j["B"] = f.b;
  j["r_squared"] = f.r_squared;
  j["f_rb"] = f.f_rb();
  j["ok"] = f.ok;
  if (!f.ok) j["message"] = f.message;
  return j;
}

// ---------------------------------------------------------------------------
// rb: survival curves of the spin-cat logical qubit under one noisy pulse model

Command rb_cmd() {
  return {"rb", "randomized benchmarking of the spin-cat logical qubit", [](ConfigReader& r) {
            const std::string name = prefix(r, "rb");
            const int d = r.get<int>("d", 3);
            require_range(d >= 2, "rb: d must be >= 2");
            const double q = r.get<double>("q", 0.02);
            require_range(q >= 0.0 && q <= 1.0, "rb: q must lie in [0, 1]");
            const auto seeds = get_list<std::uint64_t>(r, "seeds", {0});
            require_range(!seeds.empty(), "rb: seeds must not be empty");
            const RbOptions rb = read_rb(r);
            const std::string channel = r.get<std::string>("channel", "random_cptp");
            require_range(channel == "random_cptp" || channel == "depolarizing", "rb: channel must be random_cptp or depolarizing");
            return [=](const RunContext& ctx, Outputs& out) {
              const CliffordSet set = compile(d, ctx.seed, ctx.threads);
              const double n_pulses = set.average_pulses();
              const ComplexMatrix pulse = displacement(SpinDimension(d), kPi / 2, 0.0);
              std::string log;
              Csv csv({"seed", "length", "survival", "survival_error"});
              for (std::uint64_t s : seeds) {
                const NoisyChannel err = channel == "depolarizing" ? depolarizing_channel(d) : random_cptp_map(d, s);
                const NoisyChannel noisy = perturbed_unitary(pulse, err, q);
                RbOptions o = rb;
                o.seed = splitmix64(ctx.seed ^ splitmix64(s));
                o.threads = ctx.threads;
                const RbResult res = run_rb(build_noisy_model(set, noisy), o);
                for (size_t i = 0; i < res.lengths.size(); ++i)
                  csv.row({static_cast<double>(s), static_cast<double>(res.lengths[i]), res.survival[i], res.survival_error[i]});
                Json line;
                line["d"] = d;
                line["q"] = q;
                line["seed"] = s;
                line["channel"] = channel;
                line["lengths"] = res.lengths;
                line["survival"] = res.survival;
                line["survival_error"] = res.survival_error;
                line["fit"] = fit_json(res.fit);
                line["pulses_per_clifford"] = n_pulses;
                line["f_d_true"] = average_gate_fidelity(noisy, pulse);
                if (res.fit.f_rb() > 0.0) {
                  line["f_d_from_rb"] = fd_from_frb(res.fit.f_rb(), n_pulses);
                  line["f_d_from_rb_n53"] = fd_from_frb(res.fit.f_rb());
                }
                line["trace_drift"] = res.trace_drift;
                log += line.dump() + "\n";
                ctx.log("seed " + std::to_string(s) + ": F_RB " + num(res.fit.f_rb()));
              }
              Json summary;
              summary["command"] = "rb";
              summary["d"] = d;
              summary["q"] = q;
              summary["pulses_per_clifford"] = n_pulses;
              summary["encoder_infidelity"] = set.encoding.encoder_infidelity;
              double worst = 0.0;
              for (const auto& g : set.gates) worst = std::max(worst, g.infidelity);
              summary["max_clifford_infidelity"] = worst;
              out.add(name + ".jsonl", log);
              out.add(name + ".csv", csv.str());
              out.add_json(name + ".json", summary);
              out.plot(name + ".csv", "length", {"survival"}, "Logical survival vs sequence length");
            };
          }};
}

// ---------------------------------------------------------------------------
// rb-validate: F_D against F_RB^{1/N} over noise strengths and channels

Command rb_validate() {
  return {"rb-validate", "displacement fidelity vs RB-inferred fidelity", [](ConfigReader& r) {
            const std::string name = prefix(r, "rb_validate");
            const auto ds = get_list<int>(r, "ds", {3, 5, 8});
            require_range(!ds.empty(), "rb-validate: ds must not be empty");
            for (int d : ds) require_range(d >= 2, "rb-validate: every d must be >= 2");
            RelationOptions rel;
            rel.q_grid = get_list<double>(r, "q_grid", rel.q_grid);
            require_range(!rel.q_grid.empty(), "rb-validate: q_grid must not be empty");
            for (double q : rel.q_grid) require_range(q >= 0.0 && q <= 1.0, "rb-validate: q values must lie in [0, 1]");
            rel.randomizations = r.get<int>("randomizations", rel.randomizations);
            require_range(rel.randomizations >= 1, "rb-validate: randomizations must be >= 1");
            rel.rb = read_rb(r);
            const double reference_frb = r.get<double>("reference_f_rb", 0.9825);
            require_range(reference_frb > 0.0 && reference_frb <= 1.0, "rb-validate: reference_f_rb must lie in (0, 1]");
            return [=](const RunContext& ctx, Outputs& out) {
              Csv csv({"d", "q", "randomization", "f_d", "f_rb", "p", "r_squared", "model_fd", "model_fd_n53"});
              Json per_d = Json::array();
              for (int d : ds) {
                RelationOptions o = rel;
                o.seed = splitmix64(ctx.seed + static_cast<std::uint64_t>(d));
                o.threads = ctx.threads;
                const CliffordSet set = compile(d, ctx.seed, ctx.threads);
                const RelationReport rep = validate_relation(set, o);
                for (const auto& row : rep.rows)
                  csv.row({static_cast<double>(row.d), row.q, static_cast<double>(row.randomization), row.f_d, row.f_rb, row.p, row.r_squared,
                           row.model_fd, row.model_fd_53});
                Json j;
                j["d"] = d;
                j["pulses_per_clifford"] = rep.pulses_per_clifford;
                j["max_deviation"] = rep.max_deviation;
                j["max_deviation_n53"] = rep.max_deviation_53;
                per_d.push_back(j);
                ctx.log("d = " + std::to_string(d) + ": N " + num(rep.pulses_per_clifford) + ", max |F_D - F_RB^(1/N)| " + num(rep.max_deviation));
              }
              Json summary;
              summary["command"] = "rb-validate";
              summary["relation"] = per_d;
              summary["reference_pair"] = {{"f_rb", reference_frb}, {"f_d_n53", fd_from_frb(reference_frb)}};
              out.add(name + ".csv", csv.str());
              out.add_json(name + ".json", summary);
              out.plot(name + ".csv", "f_rb", {"f_d", "model_fd", "model_fd_n53"}, "Displacement fidelity vs Clifford fidelity");
            };
          }};
}

}  // namespace

std::vector<Command> rb_commands() { return {rb_cmd(), rb_validate()}; }

}  // namespace quditkit::cli
