// nvreadout <command> [--config FILE] [--key value ...]
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nvreadout/cli.hpp"
#include "nvreadout/config.hpp"

int main(int argc, char** argv) {
  using namespace nvreadout;

  CLI::App app{"Nuclear-spin-assisted NV readout simulator"};
  app.set_version_flag("--version", std::string(kVersion));

  std::string command;
  std::string help = "one of:";
  for (const auto& c : cli::commands()) help += std::string("\n  ") + c.name + "  " + c.help;
  app.add_option("command", command, help)->required();

  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")->envname("NVREADOUT_CONFIG");

  std::map<std::string, std::string> flags;
  for (const auto& k : config_schema()) {
    std::string name = k.name;
    app.add_option("--" + name, flags[name], k.doc);
  }
  app.add_flag_callback("--list-keys", [] {
    for (const auto& k : config_schema()) std::cout << k.name << "  " << k.doc << "\n";
    std::exit(0);
  }, "print every configuration key and exit");

  CLI11_PARSE(app, argc, argv);

  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot read config file '" << config_path << "'\n";
      return 1;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }

  std::vector<ConfigEntry> overrides;
  for (const auto& k : config_schema()) {
    auto* opt = app.get_option(std::string("--") + k.name);
    if (opt->count() > 0) overrides.push_back({k.name, flags[k.name], std::string("--") + k.name});
  }

  SimulationConfig cfg;
  try {
    cfg = parse_config(text, overrides);
  } catch (const std::exception& e) {
    std::cerr << "error: " << (config_path.empty() ? "" : config_path + ": ") << e.what() << "\n";
    return 1;
  }
  return cli::dispatch(command, cfg, std::cout, std::cerr);
}
