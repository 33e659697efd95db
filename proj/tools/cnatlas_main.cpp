// cnatlas command-line entry point. Everything goes through the C API.
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cnatlas/cnatlas.h"

namespace {

constexpr int kExitUsage = 64;

int report(int status, const char* result, bool quiet) {
  if (status != CNATLAS_OK) {
    std::fprintf(stderr, "cnatlas: %s: %s\n", cnatlas_status_name(status), cnatlas_last_error());
    return cnatlas_exit_code(status);
  }
  if (result != nullptr && !quiet) std::printf("%s\n", result);
  return 0;
}

/// "--set a.b=value" pairs into a JSON object; values parse as JSON when
/// they can, otherwise they are taken as strings.
std::string overrides_json(const std::vector<std::string>& sets) {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    const std::string value = s.substr(eq + 1);
    try {
      o[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      o[key] = value;
    }
  }
  return o.dump();
}

void print_convert(const char* result) {
  const auto j = nlohmann::json::parse(result);
  for (const auto& f : j.at("details").at("files")) {
    const auto& s = f.at("stats");
    std::printf("%s -> %s: %zu streamlines, %zu points, length min %.2f mean %.2f max %.2f mm\n",
                f.at("input").get<std::string>().c_str(), f.at("output").get<std::string>().c_str(),
                s.at("streamlines").get<std::size_t>(), s.at("points").get<std::size_t>(),
                s.at("min_length_mm").get<double>(), s.at("mean_length_mm").get<double>(),
                s.at("max_length_mm").get<double>());
  }
}

void on_ready(int port, void* user) {
  const auto* host = static_cast<const std::string*>(user);
  std::printf("listening on http://%s:%d\n", host->c_str(), port);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cranial nerve fiber-clustering atlas toolkit"};
  app.require_subcommand(1);
  int workers = 0;
  bool quiet = false;
  app.add_option("--workers", workers, "Worker threads (default: $CNATLAS_WORKERS or all cores)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "Suppress the JSON result on stdout");
  app.set_version_flag("--version", std::string(cnatlas_version()));

  std::vector<std::string> inputs;
  std::string out;
  std::string format;
  auto* convert = app.add_subcommand("convert", "Convert tractograms between TCK and VTK");
  convert->add_option("inputs", inputs, "Input .tck/.vtk files")->required();
  convert->add_option("-o,--out", out, "Output file, or directory for several inputs")->required();
  convert->add_option("--to", format, "Output format")->check(CLI::IsMember({"tck", "vtk"}));

  std::string config;
  std::vector<std::string> sets;
  int stage = 0;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "Pipeline config (JSON)")->required();
    sub->add_option("--set", sets, "Override a config key: key.path=value");
  };
  auto* reg = app.add_subcommand("register", "Groupwise affine registration of the training subjects");
  add_config(reg);
  auto* build = app.add_subcommand("build-atlas", "Build the initial (1) or enhanced (2) clustering atlas");
  add_config(build);
  build->add_option("--stage", stage, "Atlas stage")->required()->check(CLI::IsMember({1, 2}));
  auto* screen = app.add_subcommand("screen-roi", "Screen stage-1 clusters with ROI/ROA masks");
  add_config(screen);
  auto* apply = app.add_subcommand("apply", "Identify cranial nerves in new subjects");
  add_config(apply);
  auto* eval = app.add_subcommand("eval", "Score identifications against manual bundles");
  add_config(eval);

  std::string preset_config;
  auto* presets = app.add_subcommand("emit-presets", "Write the per-nerve tracking presets");
  presets->add_option("-o,--out", out, "Output JSON path")->required();
  presets->add_option("-c,--config", preset_config, "Take the presets table from a pipeline config");

  std::string atlas_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors;
  auto* serve = app.add_subcommand("serve", "Serve the label review API for an atlas");
  serve->add_option("--atlas", atlas_dir, "Atlas directory")->required();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port, 0 picks a free one")->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--cors-origin", cors, "Access-Control-Allow-Origin value");

  std::string batch;
  std::string truth;
  std::string rater;
  std::string timestamp;
  auto* label = app.add_subcommand("label", "Apply cluster labels from a batch file or phantom truth");
  label->add_option("--atlas", atlas_dir, "Atlas directory")->required();
  auto* batch_opt = label->add_option("--batch", batch, "{\"labels\": [{\"cluster\": id, \"label\": name}]}");
  auto* truth_opt = label->add_option("--truth", truth, "Phantom truth labels; label clusters by member majority");
  batch_opt->excludes(truth_opt);
  label->add_option("--rater", rater, "Rater recorded in the audit log");
  label->add_option("--timestamp", timestamp, "Timestamp recorded in the audit log (default: now)");

  std::uint64_t seed = 7;
  std::size_t subjects = 4;
  std::size_t held_out = 1;
  auto* phantom = app.add_subcommand("phantom", "Write a synthetic cohort with masks, truth and a pipeline config");
  phantom->add_option("-o,--out", out, "Output directory")->required();
  phantom->add_option("--seed", seed, "Cohort seed")->capture_default_str();
  phantom->add_option("--subjects", subjects, "Training subjects")->capture_default_str();
  phantom->add_option("--held-out", held_out, "Held-out subjects")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (label->parsed() && batch.empty() && truth.empty()) {
      throw CLI::RequiredError("label needs --batch or --truth");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (workers > 0) cnatlas_set_workers(workers);
  std::string overrides;
  try {
    overrides = overrides_json(sets);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const char* result = nullptr;
  if (convert->parsed()) {
    std::vector<const char*> in;
    for (const auto& s : inputs) in.push_back(s.c_str());
    const int st = cnatlas_run_convert(in.data(), in.size(), out.c_str(), format.c_str(), &result);
    if (st == CNATLAS_OK && !quiet) {
      print_convert(result);
      return 0;
    }
    return report(st, nullptr, quiet);
  }
  int st = CNATLAS_E_INTERNAL;
  if (reg->parsed()) st = cnatlas_run_register(config.c_str(), overrides.c_str(), &result);
  if (build->parsed()) st = cnatlas_run_build_atlas(config.c_str(), stage, overrides.c_str(), &result);
  if (screen->parsed()) st = cnatlas_run_screen_roi(config.c_str(), overrides.c_str(), &result);
  if (apply->parsed()) st = cnatlas_run_apply(config.c_str(), overrides.c_str(), &result);
  if (eval->parsed()) st = cnatlas_run_eval(config.c_str(), overrides.c_str(), &result);
  if (presets->parsed()) st = cnatlas_emit_presets(out.c_str(), preset_config.c_str(), &result);
  if (serve->parsed()) st = cnatlas_serve(atlas_dir.c_str(), host.c_str(), port, cors.c_str(), on_ready, &host);
  if (label->parsed()) {
    st = batch.empty()
             ? cnatlas_label_construction(atlas_dir.c_str(), truth.c_str(), rater.c_str(), timestamp.c_str(), &result)
             : cnatlas_label_batch(atlas_dir.c_str(), batch.c_str(), rater.c_str(), timestamp.c_str(), &result);
  }
  if (phantom->parsed()) st = cnatlas_phantom(out.c_str(), seed, subjects, held_out, &result);
  return report(st, result, quiet);
}
