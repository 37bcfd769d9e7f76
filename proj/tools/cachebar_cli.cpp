// cachebar: experiment driver.
//
//   cachebar <verb> [--config FILE] [--out DIR] [--seed N] [--set path=value]... [verb flags]
//
// Precedence: verb flags and --set > config file > defaults. The output
// directory is --out, else $CACHEBAR_OUT_DIR, else the config's output_dir.
// Exit status: 0 ok, 1 embedded assertion failed, 2 usage or config error.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cachebar/experiments.hpp"

namespace {

using namespace cachebar;

constexpr int kOk = 0;
constexpr int kAssertFailed = 1;
constexpr int kUsage = 2;

// Applies "a.b.c=value" to the config tree. The value is read as JSON when it
// parses, else as a plain string.
void apply_set(json& j, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set: expected path=value, got '" + expr + "'");
  std::string path = expr.substr(0, eq);
  const std::string text = expr.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("--set: bad path '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("--set: '" + key + "' is not a section");
    node = &next;
    start = dot + 1;
  }
}

template <class T>
void add_value(CLI::App* app, std::vector<std::function<void(json&)>>& edits, const std::string& flag,
          const std::string& path, const std::string& help) {
  auto value = std::make_shared<T>();
  CLI::Option* opt = app->add_option(flag, *value, help);
  edits.push_back([opt, value, path](json& j) {
    if (opt->count()) apply_set(j, path + "=" + json(*value).dump());
  });
}

void bind_switch(CLI::App* app, std::vector<std::function<void(json&)>>& edits, const std::string& flag,
                 const std::string& path, bool value, const std::string& help) {
  CLI::Option* opt = app->add_flag(flag, help);
  edits.push_back([opt, path, value](json& j) {
    if (opt->count()) apply_set(j, path + "=" + (value ? "true" : "false"));
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CacheBar experiment driver"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::vector<std::string> sets;
  std::vector<std::function<void(json&)>> edits;

  std::map<std::string, CLI::App*> subs;
  for (const auto& verb : verbs()) {
    CLI::App* s = app.add_subcommand(verb);
    s->add_option("--config,-c", config_path, "JSON config file");
    s->add_option("--out,-o", out_dir, "output directory");
    s->add_option("--set", sets, "override a config field, e.g. --set budget.w=8");
    add_value<std::uint64_t>(s, edits, "--seed", "seed", "master seed");
    subs[verb] = s;
  }

  CLI::App* cm = subs["check-model"];
  bind_switch(cm, edits, "--no-flush-on-demote", "model.flush_on_demote", false, "omit the demotion flush");
  bind_switch(cm, edits, "--no-flush-on-merge", "model.flush_on_merge", false, "omit the merge flush");
  bind_switch(cm, edits, "--relaxed", "model.strict_flush_reload", false, "attacker may repeat actions");

  CLI::App* op = subs["optimize"];
  add_value<std::uint32_t>(op, edits, "--w", "budget.w", "associativity");
  add_value<std::uint32_t>(op, edits, "--m", "budget.m", "attacker domains");
  add_value<double>(op, edits, "--epsilon", "budget.epsilon", "performance slack");
  add_value<std::uint32_t>(op, edits, "--starts", "budget.starts", "optimizer restarts");
  add_value<std::uint32_t>(op, edits, "--expect-support-max", "budget.expect_support_max",
                      "fail if the PMF puts mass above this budget");

  CLI::App* fr = subs["simulate-fr"];
  bind_switch(fr, edits, "--defense", "flush_reload.defense", true, "copy-on-access enabled");
  bind_switch(fr, edits, "--no-defense", "flush_reload.defense", false, "plain shared cache");
  bind_switch(fr, edits, "--sender-idle", "flush_reload.sender_idle", true, "sender never accesses");
  add_value<std::uint64_t>(fr, edits, "--trials", "flush_reload.trials", "trial count");
  add_value<std::uint32_t>(fr, edits, "--fr-interval", "flush_reload.fr_interval", "cycles per trial");

  CLI::App* pp = subs["simulate-pp"];
  bind_switch(pp, edits, "--defense", "prime_probe.defense", true, "cacheability budgets enforced");
  bind_switch(pp, edits, "--no-defense", "prime_probe.defense", false, "no budgets");
  add_value<std::uint64_t>(pp, edits, "--trials", "prime_probe.trials", "trials per demand");
  add_value<std::vector<std::uint32_t>>(pp, edits, "--demand", "prime_probe.demands", "victim demands d");
  add_value<std::uint32_t>(pp, edits, "--q-v", "prime_probe.q_v", "fixed victim budget");
  add_value<std::uint32_t>(pp, edits, "--q-a", "prime_probe.q_a", "fixed attacker budget");
  add_value<double>(pp, edits, "--noise", "prime_probe.noise", "probe miscount probability");
  add_value<std::string>(pp, edits, "--pmf", "budget.pmf", "optimize|uniform|degenerate:<q>|file:<path>");
  add_value<std::uint32_t>(pp, edits, "--w", "budget.w", "associativity");

  CLI::App* cl = subs["classify"];
  add_value<std::uint64_t>(cl, edits, "--train", "classify.train_trials", "training trials per cell");
  add_value<std::uint64_t>(cl, edits, "--test", "classify.test_trials", "test trials per cell");
  add_value<double>(cl, edits, "--noise", "classify.noise", "probe miscount probability");
  add_value<std::string>(cl, edits, "--pmf", "budget.pmf", "optimize|uniform|degenerate:<q>|file:<path>");
  add_value<std::string>(cl, edits, "--attacker-weights", "classify.attacker_weights", "sum|single");

  CLI::App* fp = subs["footprint"];
  add_value<std::string>(fp, edits, "--workload", "footprint.workload", "idle|busy|<trace file>");
  add_value<std::uint32_t>(fp, edits, "--domains", "footprint.domains", "domain count");
  add_value<std::uint32_t>(fp, edits, "--shared-pages", "footprint.shared_pages", "pages per domain");
  add_value<std::uint32_t>(fp, edits, "--ticks", "footprint.ticks", "ticks to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  std::string verb;
  for (const auto& [name, s] : subs)
    if (s->parsed()) verb = name;

  Report report;
  std::filesystem::path dir;
  try {
    json tree = config_path.empty() ? config_to_json(ExperimentConfig{}) : load_json_file(config_path);
    for (const auto& s : sets) apply_set(tree, s);
    for (const auto& e : edits) e(tree);
    const ExperimentConfig cfg = config_from_json(tree);
    if (!out_dir.empty()) dir = out_dir;
    else if (const char* env = std::getenv("CACHEBAR_OUT_DIR"); env && *env) dir = env;
    else dir = cfg.output_dir;
    report = run(verb, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "cachebar " << verb << ": " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "cachebar " << verb << ": error: " << e.what() << "\n";
    return kAssertFailed;
  }

  try {
    const auto files = emit_report(report, dir / verb);
    std::cout << verb << ": " << (report.passed() ? "ok" : "FAILED") << "\n";
    std::cout << report.summary.dump(2) << "\n";
    for (const auto& f : report.failures) std::cout << "assertion failed: " << f << "\n";
    for (const auto& f : files) std::cout << "wrote " << f << "\n";
    if (auto it = report.artifacts.find("trace.txt"); it != report.artifacts.end()) std::cout << it->second;
  } catch (const std::exception& e) {
    std::cerr << "cachebar " << verb << ": " << e.what() << "\n";
    return kUsage;
  }
  return report.passed() ? kOk : kAssertFailed;
}
