#include "cli_support.hpp"

#include "quditkit/parallel.hpp"

#include <CLI11.hpp>

namespace {

using namespace quditkit;
using namespace quditkit::cli;

enum ExitCode { kOk = 0, kConfigError = 2, kNumericalFailure = 3 };

int fail(int code, const std::string& kind, const std::string& message) {
  Json j;
  j["status"] = "error";
  j["exit_code"] = code;
  j["kind"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Command> commands;
  for (auto group : {gate_commands(), pulse_commands(), rb_commands(), readout_commands()})
    for (auto& c : group) commands.push_back(std::move(c));

  CLI::App app{"quditkit: spin-qudit control, tomography, benchmarking and readout simulations"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::string out_flag;
  int threads_flag = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed_flag, "RNG seed (overrides the config)");
  app.add_option("--out", out_flag, "output directory (overrides output_path)");
  app.add_option("--threads", threads_flag, "worker threads (default: QUDITKIT_THREADS or 1)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", verbose, "progress on standard error");
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kConfigError, "usage_error", e.what());
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const Command& command = *std::find_if(commands.begin(), commands.end(), [&](const Command& c) { return c.name == chosen->get_name(); });

  RunContext ctx;
  std::function<void(const RunContext&, Outputs&)> work;
  try {
    const Json doc = config_path.empty() ? Json::object() : load_json_file(config_path);
    ConfigReader reader(doc, "config");
    const auto cfg_seed = reader.get<std::uint64_t>("seed", 0);
    const auto cfg_out = reader.get<std::string>("output_path", "out");
    ctx.device = reference_transmon();
    if (reader.has("device_spec_path")) {
      ctx.device = device_from(reader.raw("device_spec_path"), "device_spec_path");
      ctx.device_given = true;
    }
    ctx.seed = seed_flag ? *seed_flag : cfg_seed;
    ctx.out = out_flag.empty() ? cfg_out : out_flag;
    ctx.threads = resolve_threads(threads_flag);
    ctx.verbose = verbose;
    work = command.prepare(reader);
    reader.finish();
  } catch (const std::invalid_argument& e) {
    return fail(kConfigError, "config_error", e.what());
  } catch (const std::exception& e) {
    return fail(kConfigError, "config_error", e.what());
  }

  Outputs outputs;
  try {
    work(ctx, outputs);
  } catch (const std::invalid_argument& e) {
    return fail(kConfigError, "config_error", e.what());
  } catch (const std::exception& e) {
    return fail(kNumericalFailure, "numerical_failure", e.what());
  }

  std::vector<std::string> written;
  try {
    written = outputs.commit(ctx.out, command.name);
  } catch (const std::exception& e) {
    return fail(kNumericalFailure, "io_error", e.what());
  }
  Json ok;
  ok["status"] = "ok";
  ok["command"] = command.name;
  ok["files"] = written;
  std::cout << ok.dump() << std::endl;
  return kOk;
}
