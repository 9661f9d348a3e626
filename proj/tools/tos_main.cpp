#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "tos/config.hpp"
#include "tos/io.hpp"
#include "tos/runner.hpp"
#include "tos/solvers.hpp"

namespace {

// Exit codes: 0 ok, 1 unexpected failure, 2 config error, 3 step
// certification failure, 4 solver hit non-finite iterates.
int dispatch(const std::string& command, const std::string& config_path,
             const tos::RunnerOptions& opt) {
  const tos::ExperimentConfig cfg = tos::load_config(config_path);
  if (command == "solve") return tos::cmd_solve(cfg, opt);
  if (command == "validate-steps") return tos::cmd_validate_steps(cfg, opt);
  if (command == "phantom") return tos::cmd_phantom(cfg, opt);
  return tos::cmd_reference(cfg, opt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic primal-dual splitting benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool override_unsafe = false;
  int threads = 1;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config file")->required();
    sub->add_option("--out-dir", out_dir, "override the configured output directory");
    sub->add_flag("--override-unsafe-steps", override_unsafe,
                  "run even when the step sizes fail certification");
    sub->add_option("--threads", threads, "worker threads for the run grid")
        ->check(CLI::PositiveNumber);
  };
  add_common(app.add_subcommand("solve", "run every configured (algorithm, seed) pair"));
  add_common(app.add_subcommand("validate-steps", "print the step-size certification table"));
  add_common(app.add_subcommand("phantom", "generate and write phantom and sinogram files"));
  add_common(app.add_subcommand("reference", "compute and write a high-accuracy reference"));

  CLI11_PARSE(app, argc, argv);

  tos::RunnerOptions opt;
  if (!out_dir.empty()) opt.out_dir = out_dir;
  opt.override_unsafe = override_unsafe;
  opt.threads = threads;

  try {
    if (const char* env = std::getenv("TOS_SEED"); env && *env) {
      try {
        size_t idx = 0;
        const unsigned long long v = std::stoull(env, &idx);
        if (env[idx] != '\0') throw std::invalid_argument("trailing characters");
        opt.seed_override = v;
      } catch (const std::exception&) {
        throw tos::ConfigError("TOS_SEED must be a nonnegative integer, got '" +
                               std::string(env) + "'");
      }
    }
    return dispatch(app.get_subcommands().front()->get_name(), config_path, opt);
  } catch (const tos::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const tos::CertificationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const tos::SolverAbort& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
