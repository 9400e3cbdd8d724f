#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sxgeo/commands.hpp"
#include "sxgeo/error.hpp"

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  std::string model_file;
  std::string seed;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config_file, "key = value run manifest");
  sub->add_option("-s,--set", o.overrides, "override a config key (key=value), repeatable");
  sub->add_option("--data", o.data, "input CSV");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geospatial self-explaining regression trees"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "generate a synthetic spatial regression dataset"},
      {"train", "train one model family and write metrics and explanations"},
      {"cv", "k-fold search over (msl, md)"},
      {"explain", "attributions, communities and dispersion for a saved model"},
      {"ablate", "full model vs. without Moran vs. without modularity"},
      {"audit", "metric battery on external predictions and attributions"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    if (name == "explain") sub->add_option("--model", o.model_file, "model JSON written by train");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  sxgeo::RunConfig config;
  try {
    if (!o.config_file.empty()) config = sxgeo::RunConfig::load(o.config_file);
    if (!o.data.empty()) config.set("data", o.data);
    if (!o.out.empty()) config.set("out", o.out);
    if (!o.seed.empty()) config.set("seed", o.seed);
    if (!o.model_file.empty()) config.set("model_file", o.model_file);
    for (const auto& kv : o.overrides) config.apply_override(kv);
  } catch (const sxgeo::Error& e) {
    return sxgeo::report_error(e.kind(), e.what(), static_cast<int>(e.exit_code()));
  }
  return sxgeo::run_command(command, config);
}
