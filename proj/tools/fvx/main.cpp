// fvx: batch command-line front end. Every subcommand writes its artifacts
// plus a manifest.json into an output directory and exits with 0 (ok),
// 2 (configuration), 3 (data) or 4 (numerical failure).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "fvx/artifacts.hpp"
#include "fvx/config.hpp"
#include "fvx/metrics.hpp"
#include "fvx/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fvx;
using namespace fvx::orchestry;

namespace {

struct Globals {
  std::string config_path;
  std::size_t workers = 0;  // 0: take FVX_WORKERS or the config value
  PipelineConfig cfg;

  std::size_t worker_threads() const { return workers ? workers : worker_count(cfg); }
};

struct Input {
  fs::path path;
  fvbin::File file;
};

// Directories are read through their manifest (hashes verified); files are taken as given.
std::vector<Input> read_inputs(const std::vector<std::string>& args, const std::set<std::string>& kinds) {
  std::vector<Input> out;
  auto accept = [&](const fs::path& p) {
    Input in{p, fvbin::read(p)};
    const std::string kind = artifact_kind(in.file);
    if (!kinds.count(kind)) throw DataError(p.string() + ": unexpected artifact kind '" + kind + "'");
    out.push_back(std::move(in));
  };
  for (const auto& a : args) {
    const fs::path p(a);
    if (!fs::exists(p)) throw DataError("missing input " + p.string());
    if (fs::is_directory(p)) {
      const Manifest m = read_manifest(p);
      verify_manifest(p, m);
      for (const auto& e : m.artifacts)
        if (kinds.count(e.kind)) accept(p / e.path);
    } else {
      accept(p);
    }
  }
  if (out.empty()) throw DataError("no input artifacts found");
  return out;
}

json config_record(const PipelineConfig& cfg) {
  json j = to_json(cfg);
  j["experiment"].erase("workers");  // scheduling only; never part of the content
  return j;
}

std::string provenance_text(const fvbin::File& f, const char* key, const std::string& fallback) {
  const auto& p = f.metadata.value("provenance", json::object());
  return p.contains(key) && p[key].is_string() ? p[key].get<std::string>() : fallback;
}

double source_offset(const elastodyn::AcquisitionGeometry& g) { return g.receiver_x_m.front() - g.source_x_m; }

ManifestEntry write_text_artifact(const fs::path& dir, const std::string& name, const std::string& text,
                                  const std::string& kind) {
  fvbin::write_bytes_atomic(dir / name, text);
  return {name, sha256_hex(text), kind, json::object()};
}

void finish(const fs::path& dir, Manifest& m, const std::string& what) {
  write_manifest(dir, m);
  json status{{"stage", m.stage}, {"artifacts", m.artifacts.size()}, {"quarantined", m.quarantined.size()}};
  std::cout << status.dump() << "\n";
  for (const auto& q : m.quarantined)
    std::cerr << json{{"quarantined", {{"item", q.item}, {"stage", q.stage}, {"reason", q.reason}}}}.dump() << "\n";
  if (m.artifacts.empty() && !m.quarantined.empty())
    throw Error(what + ": every item failed; first: " + m.quarantined.front().reason,
                static_cast<ExitCode>(m.quarantined.front().exit_code));
}

Manifest start(const fs::path& dir, const std::string& stage, const PipelineConfig& cfg) {
  fs::create_directories(dir);
  return Manifest{stage, config_record(cfg), {}, {}};
}

std::vector<double> parse_offsets(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw ValidationError("stack", "'" + text + "' is not a comma-separated list of offsets");
    }
  }
  if (out.size() < 2) throw ValidationError("stack", "needs at least two offsets");
  return out;
}

std::string stack_name(const std::vector<double>& offsets) {
  std::string s = "stack";
  for (std::size_t i = 0; i < offsets.size(); ++i) s += (i ? "+" : "") + format_number(offsets[i]);
  return s;
}

GridD flipped_rows(const GridD& g) {
  GridD out(g.rows(), g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) = g(g.rows() - 1 - r, c);
  return out;
}

void quarantine_failures(Manifest& m, const std::vector<std::string>& items, const std::string& stage,
                         const std::vector<std::exception_ptr>& errors) {
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i]) m.quarantined.push_back(quarantine_record(items[i], stage, errors[i]));
}

// ---------------------------------------------------------------------------

void cmd_genmodels(Globals& g, std::size_t count, std::optional<std::uint64_t> seed, std::uint64_t first,
                   const fs::path& out) {
  if (seed) g.cfg.model.seed = *seed;
  validate(g.cfg);
  if (count == 0) throw ValidationError("count", "must be positive");
  Manifest m = start(out, "genmodels", g.cfg);
  std::vector<ManifestEntry> entries(count);
  std::vector<std::exception_ptr> errors;
  parallel_for(
      count, g.worker_threads(),
      [&](std::size_t i) {
        const auto model = geomodel::generate_model(g.cfg.model, first + i);
        entries[i] = write_artifact(out, model_id(first + i) + ".fvb", model_to_fvbin(model),
                                    {{"index", first + i}, {"interface_class", geomodel::to_string(model.interface_class)}});
      },
      &errors);
  std::vector<std::string> items;
  for (std::size_t i = 0; i < count; ++i) {
    items.push_back(model_id(first + i));
    if (!errors[i]) m.artifacts.push_back(entries[i]);
  }
  quarantine_failures(m, items, "genmodels", errors);
  finish(out, m, "genmodels");
}

void cmd_simulate(Globals& g, const std::vector<std::string>& models, const std::string& variant_name,
                  const fs::path& out) {
  validate(g.cfg);
  const Variant variant = parse_variant(variant_name, g.cfg.acquisition);
  const auto inputs = read_inputs(models, {"model"});
  struct Job {
    std::size_t input;
    double offset;
    std::string name;
  };
  std::vector<Job> jobs;
  std::vector<std::string> items;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (double off : variant.source_offsets_m) {
      const std::string id = inputs[i].path.stem().string();
      jobs.push_back({i, off, id + "." + variant.name + ".o" + format_number(off) + ".fvb"});
      items.push_back(id + "/" + variant.name);
    }
  Manifest m = start(out, "simulate", g.cfg);
  std::vector<ManifestEntry> entries(jobs.size());
  std::vector<std::exception_ptr> errors;
  parallel_for(
      jobs.size(), g.worker_threads(),
      [&](std::size_t j) {
        const auto& in = inputs[jobs[j].input];
        const auto model = model_from_fvbin(in.file);
        const auto gather = simulate_shot(g.cfg, model, variant, jobs[j].offset);
        auto file = gather_to_fvbin(gather);
        const std::string id = in.path.stem().string();
        file.metadata["provenance"] = {{"model", id}, {"variant", variant.name}, {"offset_m", jobs[j].offset}};
        entries[j] = write_artifact(out, jobs[j].name, file, {{"model", id}, {"offset_m", jobs[j].offset}});
      },
      &errors);
  for (std::size_t j = 0; j < jobs.size(); ++j)
    if (!errors[j]) m.artifacts.push_back(entries[j]);
  quarantine_failures(m, items, "simulate", errors);
  finish(out, m, "simulate");
}

beamform::DispersionImage raw_image(const Globals& g, const Input& in) {
  if (artifact_kind(in.file) == "gather") return beamform::fdbf(gather_from_fvbin(in.file), g.cfg.grid, g.cfg.steering);
  return image_from_fvbin(in.file);
}

beamform::DispersionImage normalized(const beamform::DispersionImage& im, beamform::Normalization n) {
  switch (n) {
    case beamform::Normalization::per_frequency:
      return beamform::normalize_per_frequency(im);
    case beamform::Normalization::absolute_max:
      return beamform::normalize_absolute_max(im);
    case beamform::Normalization::raw:
      break;
  }
  return im;
}

void cmd_disperse(Globals& g, const std::vector<std::string>& args, const std::string& stack,
                  const std::string& steering, const std::string& normalization, const fs::path& out) {
  if (!steering.empty()) g.cfg.steering = beamform::steering_from_string(steering);
  validate(g.cfg);
  const auto norm = beamform::normalization_from_string(normalization);
  const auto inputs = read_inputs(args, {"gather", "image"});
  Manifest m = start(out, "disperse", g.cfg);

  if (stack.empty()) {
    std::vector<ManifestEntry> entries(inputs.size());
    std::vector<std::string> items;
    for (const auto& in : inputs) items.push_back(in.path.stem().string());
    std::vector<std::exception_ptr> errors;
    parallel_for(
        inputs.size(), g.worker_threads(),
        [&](std::size_t i) {
          auto file = image_to_fvbin(normalized(raw_image(g, inputs[i]), norm));
          file.metadata["provenance"] = inputs[i].file.metadata.value("provenance", json::object());
          entries[i] = write_artifact(out, inputs[i].path.filename().string(), file,
                                      {{"model", provenance_text(inputs[i].file, "model", items[i])}});
        },
        &errors);
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (!errors[i]) m.artifacts.push_back(entries[i]);
    quarantine_failures(m, items, "disperse", errors);
    finish(out, m, "disperse");
    return;
  }

  const auto offsets = parse_offsets(stack);
  const std::string name = stack_name(offsets);
  // Inputs grouped by model, in order of first appearance.
  std::vector<std::string> models;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string id = provenance_text(inputs[i].file, "model", inputs[i].path.stem().string());
    if (!members.count(id)) models.push_back(id);
    members[id].push_back(i);
  }
  auto offset_of = [&](const Input& in) {
    if (artifact_kind(in.file) == "gather") return source_offset(gather_from_fvbin(in.file).geometry);
    return source_offset(image_from_fvbin(in.file).geometry);
  };
  std::vector<ManifestEntry> entries(models.size());
  std::vector<std::exception_ptr> errors;
  std::vector<std::string> items;
  for (const auto& id : models) items.push_back(id + "/" + name);
  parallel_for(
      models.size(), g.worker_threads(),
      [&](std::size_t k) {
        std::vector<beamform::DispersionImage> raw;
        for (double want : offsets) {
          const Input* match = nullptr;
          for (std::size_t i : members[models[k]])
            if (std::abs(offset_of(inputs[i]) - want) < 1e-6) match = &inputs[i];
          if (!match) throw DataError(models[k] + ": no input at source offset " + format_number(want) + " m");
          raw.push_back(raw_image(g, *match));
        }
        auto file = image_to_fvbin(beamform::stack_offsets(raw));
        file.metadata["provenance"] = {{"model", models[k]}, {"variant", name}, {"offsets_m", offsets}};
        entries[k] = write_artifact(out, models[k] + "." + name + ".fvb", file, {{"model", models[k]}});
      },
      &errors);
  for (std::size_t k = 0; k < models.size(); ++k)
    if (!errors[k]) m.artifacts.push_back(entries[k]);
  quarantine_failures(m, items, "disperse", errors);
  finish(out, m, "disperse");
}

std::vector<float> input_vector(const fvbin::File& f) {
  if (artifact_kind(f) == "image") return network_input(image_from_fvbin(f));
  return network_input(gather_from_fvbin(f));
}

void cmd_train(Globals& g, const std::vector<std::string>& input_args, const std::vector<std::string>& model_args,
               std::optional<std::size_t> epochs, const fs::path& out) {
  if (epochs) g.cfg.training.epochs = *epochs;
  validate(g.cfg);
  const auto arch = architecture_by_name(g.cfg.architecture);
  const auto models = read_inputs(model_args, {"model"});
  std::map<std::string, geomodel::VelocityModel> by_id;
  for (const auto& in : models) by_id.emplace(in.path.stem().string(), model_from_fvbin(in.file));
  const auto inputs = read_inputs(input_args, {"image", "gather"});

  std::vector<std::pair<std::uint64_t, std::size_t>> order;  // (model index, input position)
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string id = provenance_text(inputs[i].file, "model", "");
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError(inputs[i].path.string() + ": no model '" + id + "' among the targets");
    order.emplace_back(it->second.index, i);
  }
  std::sort(order.begin(), order.end());
  PairSet pairs;
  for (const auto& [index, i] : order) {
    const auto& model = by_id.at(provenance_text(inputs[i].file, "model", ""));
    pairs.indices.push_back(index);
    pairs.inputs.push_back(input_vector(inputs[i].file));
    pairs.targets_mps.push_back(target_vs(model));
    pairs.classes.push_back(geomodel::to_string(model.interface_class));
    if (pairs.inputs.back().size() != arch.input.size())
      throw DataError(inputs[i].path.string() + ": input does not fit " + arch.input.str());
  }
  const SplitData split = split_pairs(pairs, arch, g.cfg.training.split);
  auto tc = g.cfg.training;
  tc.vs_norm_max = split.vs_norm_max;
  neuralvision::Network<float> net(arch);
  net.initialize(tc.seed);
  const auto history = neuralvision::train(net, split.train, split.validation.size() ? &split.validation : nullptr, tc,
                                           [](const neuralvision::EpochRecord& r, const neuralvision::Network<float>&) {
                                             std::cerr << json{{"epoch", r.epoch},
                                                               {"train_loss", r.train_loss},
                                                               {"validation_mape", r.validation_mape}}
                                                              .dump()
                                                       << "\n";
                                             return true;
                                           });

  Manifest m = start(out, "train", g.cfg);
  m.artifacts.push_back(write_artifact(out, "network.fvb", neuralvision::to_fvbin(net)));
  std::string csv = "epoch,train_loss,validation_loss,validation_mape_percent\n";
  for (const auto& h : history)
    csv += std::to_string(h.epoch) + "," + format_number(h.train_loss) + "," + format_number(h.validation_loss) + "," +
           format_number(h.validation_mape) + "\n";
  m.artifacts.push_back(write_text_artifact(out, "history.csv", csv, "csv"));
  auto ids = [](const std::vector<std::uint64_t>& v) {
    json a = json::array();
    for (auto i : v) a.push_back(i);
    return a;
  };
  const json split_doc{{"train", ids(split.train_indices)},
                       {"validation", ids(split.validation_indices)},
                       {"test", ids(split.test_indices)},
                       {"vs_norm_max", split.vs_norm_max}};
  m.artifacts.push_back(write_text_artifact(out, "split.json", split_doc.dump(2) + "\n", "split"));
  finish(out, m, "train");
}

void cmd_predict(Globals& g, const fs::path& network, const std::vector<std::string>& args, const fs::path& out) {
  validate(g.cfg);
  const auto net = neuralvision::load(network);
  const std::string network_id = sha256_file(network).substr(0, 16);
  const auto inputs = read_inputs(args, {"image", "gather"});
  Manifest m = start(out, "predict", g.cfg);
  std::vector<ManifestEntry> entries(inputs.size());
  std::vector<std::string> items;
  for (const auto& in : inputs) items.push_back(in.path.stem().string());
  std::vector<std::exception_ptr> errors;
  parallel_for(
      inputs.size(), g.worker_threads(),
      [&](std::size_t i) {
        const auto x = input_vector(inputs[i].file);
        if (x.size() != net.architecture().input.size())
          throw DataError(inputs[i].path.string() + ": input does not fit " + net.architecture().input.str());
        auto file = prediction_to_fvbin(neuralvision::predict(net, x, network_id, items[i]));
        file.metadata["provenance"]["model"] = provenance_text(inputs[i].file, "model", items[i]);
        file.metadata["provenance"]["variant"] = provenance_text(inputs[i].file, "variant", "base");
        entries[i] = write_artifact(out, inputs[i].path.filename().string(), file);
      },
      &errors);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!errors[i]) m.artifacts.push_back(entries[i]);
  quarantine_failures(m, items, "predict", errors);
  finish(out, m, "predict");
}

void write_report(const fs::path& out, Manifest& m, const ExperimentReport& report) {
  m.artifacts.push_back(write_text_artifact(out, "report.csv", report_csv(report), "csv"));
  m.artifacts.push_back(write_text_artifact(out, "summary.csv", summary_csv(report), "csv"));
  m.artifacts.push_back(write_text_artifact(out, "summary.txt", summary_table(report), "text"));
  m.quarantined.insert(m.quarantined.end(), report.quarantined.begin(), report.quarantined.end());
  std::cout << summary_table(report);
}

void cmd_evaluate(Globals& g, const std::vector<std::string>& prediction_args,
                  const std::vector<std::string>& model_args, const fs::path& out) {
  validate(g.cfg);
  std::map<std::string, geomodel::VelocityModel> truth;
  for (const auto& in : read_inputs(model_args, {"model"})) truth.emplace(in.path.stem().string(), model_from_fvbin(in.file));
  const auto preds = read_inputs(prediction_args, {"prediction"});

  std::vector<std::string> used;
  for (const auto& p : preds) {
    const std::string id = provenance_text(p.file, "model", "");
    if (!truth.count(id)) throw DataError(p.path.string() + ": no true model '" + id + "'");
    if (std::find(used.begin(), used.end(), id) == used.end()) used.push_back(id);
  }
  std::vector<GridD> truths;
  for (const auto& id : used) truths.push_back(target_vs(truth.at(id)));
  metrics::MetricConfig mc;
  mc.dynamic_range = metrics::dynamic_range(truths);

  ExperimentReport report;
  std::vector<std::string> order;
  for (const auto& p : preds) {
    const std::string id = provenance_text(p.file, "model", "");
    const std::string variant = provenance_text(p.file, "variant", "base");
    if (std::find(order.begin(), order.end(), variant) == order.end()) order.push_back(variant);
    const auto& model = truth.at(id);
    const GridD t = target_vs(model);
    const auto pred = prediction_from_fvbin(p.file);
    report.rows.push_back({id, variant, geomodel::to_string(model.interface_class), metrics::mape(pred.vs_mps, t),
                           metrics::mssim(pred.vs_mps, t, mc)});
  }
  report.aggregates = aggregate(report.rows, {}, order);
  Manifest m = start(out, "evaluate", g.cfg);
  write_report(out, m, report);
  write_manifest(out, m);
}

void cmd_experiment(Globals& g, const fs::path& network, const fs::path& split_path,
                    const std::vector<std::string>& variant_names, const fs::path& out) {
  if (!variant_names.empty()) g.cfg.experiment.variants = variant_names;
  validate(g.cfg);
  const auto net = neuralvision::load(network, architecture_by_name(g.cfg.architecture));
  json split;
  try {
    split = json::parse(fvbin::read_bytes(split_path));
  } catch (const json::exception& e) {
    throw DataError(split_path.string() + ": " + e.what());
  }
  std::vector<std::uint64_t> test;
  try {
    test = split.at("test").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw DataError(split_path.string() + ": " + e.what());
  }
  if (g.cfg.experiment.test_subset > 0) test = stratified_subset(g.cfg.model, test, g.cfg.experiment.test_subset);
  std::vector<GridD> truths;
  for (auto idx : test) truths.push_back(target_vs(geomodel::generate_model(g.cfg.model, idx)));
  const double range = truths.empty() ? 1.0 : metrics::dynamic_range(truths);
  const auto variants = parse_variants(g.cfg.experiment.variants, g.cfg.acquisition);
  const auto report = run_experiment(g.cfg, net, test, variants, range, g.worker_threads());
  Manifest m = start(out, "experiment", g.cfg);
  write_report(out, m, report);
  write_manifest(out, m);
}

void cmd_peaks(const fs::path& image, const std::string& out) {
  const auto im = image_from_fvbin(fvbin::read(image));
  std::string csv = "frequency_hz,velocity_mps\n";
  for (const auto& p : beamform::extract_peaks(im))
    csv += format_number(p.frequency_hz) + "," + format_number(p.velocity_mps) + "\n";
  if (out.empty() || out == "-")
    std::cout << csv;
  else
    fvbin::write_bytes_atomic(out, csv);
}

void cmd_import_csv(Globals& g, const std::vector<std::string>& files, std::size_t receivers, double spacing,
                    double first_x, double offset, double rate, const fs::path& out) {
  validate(g.cfg);
  std::vector<fs::path> paths(files.begin(), files.end());
  const auto geometry = elastodyn::linear_array(receivers, spacing, first_x, offset);
  const auto gather = import_csv(paths, geometry, rate);
  auto file = gather_to_fvbin(gather);
  file.metadata["source"]["label"] = "field record";
  file.metadata["provenance"] = {{"model", out.stem().string()},
                                 {"variant", "field"},
                                 {"offset_m", offset},
                                 {"stacked_records", files.size()}};
  const auto dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  fs::create_directories(dir);
  Manifest m = start(dir, "import-csv", g.cfg);
  m.artifacts.push_back(write_artifact(dir, out.filename().string(), file));
  finish(dir, m, "import-csv");
}

void cmd_export_plot(const fs::path& input, const std::string& prefix, std::size_t scale) {
  const auto file = fvbin::read(input);
  const std::string kind = artifact_kind(file);
  GridD grid;
  double lo = 0.0, hi = 1.0;
  auto range_of = [&](const GridD& gr) {
    lo = *std::min_element(gr.values().begin(), gr.values().end());
    hi = *std::max_element(gr.values().begin(), gr.values().end());
  };
  if (kind == "image") {
    grid = flipped_rows(image_from_fvbin(file).power);  // highest velocity on top
    lo = 0.0;
    hi = *std::max_element(grid.values().begin(), grid.values().end());
  } else if (kind == "model") {
    grid = model_from_fvbin(file).vs;
    range_of(grid);
  } else if (kind == "prediction") {
    grid = prediction_from_fvbin(file).vs_mps;
    range_of(grid);
  } else if (kind == "gather") {
    grid = gather_from_fvbin(file).traces;
    double peak = 0.0;
    for (double v : grid.values()) peak = std::max(peak, std::abs(v));
    lo = -peak;
    hi = peak;
  } else {
    throw DataError(input.string() + ": cannot plot artifact kind '" + kind + "'");
  }
  const fs::path base(prefix);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  write_png(base.string() + ".png", grid, lo, hi, scale);
  fvbin::write_bytes_atomic(base.string() + ".csv", grid_to_csv(grid));
}

void print_error(const std::string& type, const std::string& message, int code, const std::string& field = {}) {
  json e{{"type", type}, {"message", message}, {"exit_code", code}};
  if (!field.empty()) e["field"] = field;
  std::cerr << json{{"error", e}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fvx: synthetic surface-wave data, dispersion imaging and Vs-image inversion"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML configuration file");
  app.add_option("--workers", g.workers, "Worker threads (overrides FVX_WORKERS and the config)");

  std::size_t count = 0;
  std::optional<std::uint64_t> seed;
  std::uint64_t first = 0;
  std::string out;
  auto* genmodels = app.add_subcommand("genmodels", "Generate velocity models");
  genmodels->add_option("--count", count, "Number of models")->required();
  genmodels->add_option("--seed", seed, "Overrides geomodel.seed");
  genmodels->add_option("--first", first, "Index of the first model");
  genmodels->add_option("--out", out, "Output directory")->required();

  std::vector<std::string> inputs, models;
  std::string variant = "base";
  auto* simulate = app.add_subcommand("simulate", "Simulate shot gathers for models");
  simulate->add_option("--models", models, "Model files or directories")->required();
  simulate->add_option("--variant", variant, "Acquisition variant (base, rec24@2, offset20, stack5+20, spike15, ...)");
  simulate->add_option("--out", out, "Output directory")->required();

  std::string stack, steering, normalization = "per_frequency";
  auto* disperse = app.add_subcommand("disperse", "Dispersion images from gathers (or stack raw images)");
  disperse->add_option("inputs", inputs, "Gather or image files or directories")->required();
  disperse->add_option("--stack", stack, "Stack offsets, e.g. 5,20");
  disperse->add_option("--steering", steering, "plane or cylindrical")
      ->check(CLI::IsMember({"plane", "cylindrical"}));
  disperse->add_option("--normalization", normalization, "per_frequency, absolute_max or raw")
      ->check(CLI::IsMember({"per_frequency", "absolute_max", "raw"}));
  disperse->add_option("--out", out, "Output directory")->required();

  std::optional<std::size_t> epochs;
  auto* train = app.add_subcommand("train", "Train a network on input/target pairs");
  train->add_option("--inputs", inputs, "Image or gather files or directories")->required();
  train->add_option("--models", models, "Target model files or directories")->required();
  train->add_option("--epochs", epochs, "Overrides neuralvision.epochs");
  train->add_option("--out", out, "Output directory")->required();

  std::string network;
  auto* predict = app.add_subcommand("predict", "Predict Vs images");
  predict->add_option("--network", network, "Network file")->required();
  predict->add_option("inputs", inputs, "Image or gather files or directories")->required();
  predict->add_option("--out", out, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against true models");
  evaluate->add_option("--predictions", inputs, "Prediction files or directories")->required();
  evaluate->add_option("--models", models, "True model files or directories")->required();
  evaluate->add_option("--out", out, "Output directory")->required();

  std::string split;
  std::vector<std::string> variants;
  auto* experiment = app.add_subcommand("experiment", "Run the acquisition-variant matrix on the test models");
  experiment->add_option("--network", network, "Network file")->required();
  experiment->add_option("--split", split, "split.json written by train")->required();
  experiment->add_option("--variants", variants, "Overrides experiment.variants")->delimiter(',');
  experiment->add_option("--out", out, "Output directory")->required();

  std::string image;
  auto* peaks = app.add_subcommand("peaks", "Peak velocity per frequency of an image");
  peaks->add_option("image", image, "Image file")->required();
  peaks->add_option("--out", out, "CSV file (default: stdout)");

  std::size_t receivers = 0;
  double spacing = 1.0, first_x = 0.0, offset = 5.0, rate = 400.0;
  auto* import = app.add_subcommand("import-csv", "Import field waveforms; several files are stacked");
  import->add_option("files", inputs, "CSV files, one column per receiver")->required();
  import->add_option("--receivers", receivers, "Receiver count")->required();
  import->add_option("--spacing", spacing, "Receiver spacing in m");
  import->add_option("--first-x", first_x, "Position of the first receiver in m");
  import->add_option("--source-offset", offset, "Source distance before the first receiver in m");
  import->add_option("--rate", rate, "Sampling rate in Hz");
  import->add_option("--out", out, "Output gather file")->required();

  std::size_t scale = 4;
  auto* plot = app.add_subcommand("export-plot", "PNG and CSV of a model, gather, image or prediction");
  plot->add_option("input", image, "Artifact file")->required();
  plot->add_option("--out", out, "Output prefix (writes .png and .csv)")->required();
  plot->add_option("--scale", scale, "Pixels per grid cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what(), 2);
    return 2;
  }

  try {
    if (!g.config_path.empty()) g.cfg = load_config(g.config_path);
    if (*genmodels) cmd_genmodels(g, count, seed, first, out);
    if (*simulate) cmd_simulate(g, models, variant, out);
    if (*disperse) cmd_disperse(g, inputs, stack, steering, normalization, out);
    if (*train) cmd_train(g, inputs, models, epochs, out);
    if (*predict) cmd_predict(g, network, inputs, out);
    if (*evaluate) cmd_evaluate(g, inputs, models, out);
    if (*experiment) cmd_experiment(g, network, split, variants, out);
    if (*peaks) cmd_peaks(image, out);
    if (*import) cmd_import_csv(g, inputs, receivers, spacing, first_x, offset, rate, out);
    if (*plot) cmd_export_plot(image, out, scale);
  } catch (const ValidationError& e) {
    print_error("ValidationError", e.what(), static_cast<int>(e.code()), e.field());
    return static_cast<int>(e.code());
  } catch (const NumericalError& e) {
    print_error("NumericalError", e.what(), static_cast<int>(e.code()));
    return static_cast<int>(e.code());
  } catch (const Error& e) {
    print_error("DataError", e.what(), static_cast<int>(e.code()));
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    print_error("DataError", e.what(), 3);
    return 3;
  }
  return 0;
}
