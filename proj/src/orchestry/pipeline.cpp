#include "fvx/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <regex>
#include <sstream>

#include "fvx/metrics.hpp"

namespace fvx::orchestry {

namespace {

constexpr double kWindowWidthM = 48.0;
constexpr double kWindowDepthM = 24.0;

double parse_positive(const std::string& s, const std::string& variant) {
  const double v = std::stod(s);
  if (!(v > 0.0)) throw ValidationError("experiment.variants", "'" + variant + "' needs positive values");
  return v;
}

bool is_fv(const PipelineConfig& cfg) {
  return architecture_by_name(cfg.architecture).input == neuralvision::frequency_velocity_architecture().input;
}

std::vector<float> input_for(const PipelineConfig& cfg, const geomodel::VelocityModel& model, const Variant& v) {
  if (is_fv(cfg)) return network_input(variant_image(cfg, model, v));
  if (v.source_offsets_m.size() != 1)
    throw ValidationError("experiment.variants", "the time-distance network takes single-offset variants only");
  return network_input(simulate_shot(cfg, model, v, v.source_offsets_m.front()));
}

std::string quarantine_item(std::uint64_t index, const std::string& variant) {
  return model_id(index) + "/" + variant;
}

}  // namespace

Variant base_variant(const AcquisitionConfig& acq) {
  Variant v;
  v.name = "base";
  v.receivers = acq.receivers;
  v.spacing_m = acq.spacing_m;
  v.source_offsets_m = {acq.source_offset_m};
  v.source = acq.source;
  return v;
}

Variant parse_variant(const std::string& name, const AcquisitionConfig& base) {
  static const std::regex rec(R"(rec([0-9]+)@([0-9]+(?:\.[0-9]+)?))");
  static const std::regex offset(R"(offset([0-9]+(?:\.[0-9]+)?))");
  static const std::regex stack(R"(stack([0-9]+(?:\.[0-9]+)?(?:\+[0-9]+(?:\.[0-9]+)?)+))");
  Variant v = base_variant(base);
  v.name = name;
  std::smatch m;
  if (name == "base") return v;
  if (std::regex_match(name, m, rec)) {
    v.receivers = std::stoul(m[1]);
    v.spacing_m = parse_positive(m[2], name);
    if (v.receivers < 2) throw ValidationError("experiment.variants", "'" + name + "' needs at least 2 receivers");
    return v;
  }
  if (std::regex_match(name, m, offset)) {
    v.source_offsets_m = {parse_positive(m[1], name)};
    return v;
  }
  if (std::regex_match(name, m, stack)) {
    v.source_offsets_m.clear();
    std::stringstream ss(m[1].str());
    for (std::string part; std::getline(ss, part, '+');) v.source_offsets_m.push_back(parse_positive(part, name));
    return v;
  }
  try {
    parse_source(name);
  } catch (const ValidationError&) {
    throw ValidationError("experiment.variants", "unknown variant '" + name +
                                                     "' (expected base, recN@S, offsetX, stackA+B or a source name)");
  }
  v.source = name;
  return v;
}

std::vector<Variant> parse_variants(const std::vector<std::string>& names, const AcquisitionConfig& base) {
  std::vector<Variant> out;
  for (const auto& n : names) {
    if (std::any_of(out.begin(), out.end(), [&](const Variant& v) { return v.name == n; }))
      throw ValidationError("experiment.variants", "duplicate variant '" + n + "'");
    out.push_back(parse_variant(n, base));
  }
  return out;
}

std::vector<std::string> robustness_variant_names() {
  return {"base",     "rec24@2",  "rec16@3",    "rec12@4",     "offset6",  "offset10",
          "offset20", "stack5+20", "stack10+20", "spike15", "chirp3-80"};
}

elastodyn::AcquisitionGeometry variant_geometry(const Variant& v, double first_receiver_x_m, double offset_m) {
  return elastodyn::linear_array(v.receivers, v.spacing_m, first_receiver_x_m, offset_m);
}

double record_duration(const PipelineConfig& cfg, const elastodyn::SourceFunction& src) {
  return src.kind == elastodyn::SourceKind::linear_chirp ? cfg.acquisition.chirp_duration_s : cfg.sim.duration_s;
}

geomodel::VelocityModel simulation_model(const PipelineConfig& cfg, const geomodel::VelocityModel& model) {
  if (std::abs(model.pixel_m - cfg.sim.grid_pixel_m) < 1e-12) return model;
  return geomodel::refine(model, cfg.sim.grid_pixel_m);
}

GridD target_vs(const geomodel::VelocityModel& model) {
  return geomodel::crop(model, geomodel::centered_window(model.width_m(), kWindowWidthM, kWindowDepthM)).vs;
}

elastodyn::ShotGather simulate_shot(const PipelineConfig& cfg, const geomodel::VelocityModel& model,
                                    const Variant& variant, double offset_m) {
  const auto src = parse_source(variant.source);
  elastodyn::SimConfig sim = cfg.sim;
  sim.duration_s = record_duration(cfg, src);
  const double first_x = geomodel::centered_window(model.width_m(), kWindowWidthM, kWindowDepthM).x_start_m;
  return elastodyn::simulate(simulation_model(cfg, model), variant_geometry(variant, first_x, offset_m), src, sim);
}

beamform::DispersionImage image_from_gathers(const PipelineConfig& cfg,
                                             const std::vector<elastodyn::ShotGather>& gathers) {
  if (gathers.empty()) throw ValidationError("gathers", "need at least one gather");
  if (gathers.size() == 1) return beamform::normalize_per_frequency(beamform::fdbf(gathers[0], cfg.grid, cfg.steering));
  std::vector<beamform::DispersionImage> raw;
  for (const auto& g : gathers) raw.push_back(beamform::fdbf(g, cfg.grid, cfg.steering));
  return beamform::stack_offsets(raw);
}

beamform::DispersionImage variant_image(const PipelineConfig& cfg, const geomodel::VelocityModel& model,
                                        const Variant& variant) {
  std::vector<elastodyn::ShotGather> gathers;
  for (double offset : variant.source_offsets_m) gathers.push_back(simulate_shot(cfg, model, variant, offset));
  return image_from_gathers(cfg, gathers);
}

std::vector<float> network_input(const beamform::DispersionImage& image) {
  return {image.power.values().begin(), image.power.values().end()};
}

std::vector<float> network_input(const elastodyn::ShotGather& gather) {
  double peak = 0.0;
  for (double v : gather.traces.values()) peak = std::max(peak, std::abs(v));
  std::vector<float> out(gather.traces.size(), 0.0f);
  if (peak > 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(gather.traces.data()[i] / peak);
  return out;
}

std::vector<std::uint64_t> stratified_subset(const geomodel::ModelSpec& spec,
                                             const std::vector<std::uint64_t>& candidates, std::size_t count) {
  if (count > candidates.size())
    throw RangeError("subset of " + std::to_string(count) + " from " + std::to_string(candidates.size()) +
                     " candidates");
  const double total = std::accumulate(spec.class_mix.begin(), spec.class_mix.end(), 0.0);
  std::array<std::size_t, 3> quota{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double exact = static_cast<double>(count) * spec.class_mix[c] / total;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < count; ++i, ++assigned) ++quota[order[i % 3]];

  std::vector<std::uint64_t> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::uint64_t> out;
  for (std::uint64_t idx : sorted) {
    auto& q = quota[static_cast<std::size_t>(geomodel::interface_class_for(spec, idx))];
    if (q > 0) {
      --q;
      out.push_back(idx);
    }
  }
  if (out.size() != count)
    throw RangeError("candidates do not contain enough models of every interface class for a subset of " +
                     std::to_string(count));
  return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn,
                  std::vector<std::exception_ptr>* errors) {
  std::vector<std::exception_ptr> local(n);
  auto& errs = errors ? *errors : local;
  errs.assign(n, nullptr);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const std::size_t extra = std::min(workers, n) > 1 ? std::min(workers, n) - 1 : 0;
  std::vector<std::thread> threads;
  threads.reserve(extra);
  for (std::size_t t = 0; t < extra; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (!errors)
    for (const auto& e : errs)
      if (e) std::rethrow_exception(e);
}

QuarantineEntry quarantine_record(const std::string& item, const std::string& stage, std::exception_ptr e) {
  QuarantineEntry q{item, stage, "unknown failure", 1};
  try {
    std::rethrow_exception(e);
  } catch (const Error& err) {
    q.reason = err.what();
    q.exit_code = static_cast<int>(err.code());
  } catch (const std::exception& err) {
    q.reason = err.what();
  } catch (...) {
  }
  return q;
}

PairSet build_pairs(const PipelineConfig& cfg, std::uint64_t first, std::size_t count, const Variant& variant,
                    const neuralvision::Architecture& arch, std::size_t workers) {
  std::vector<std::vector<float>> inputs(count);
  std::vector<GridD> targets(count);
  std::vector<std::string> classes(count);
  std::vector<std::exception_ptr> errors;
  const std::size_t expected = arch.input.size();
  parallel_for(
      count, workers,
      [&](std::size_t i) {
        const auto model = geomodel::generate_model(cfg.model, first + i);
        auto input = input_for(cfg, model, variant);
        if (input.size() != expected)
          throw ValidationError("neuralvision.architecture",
                                "input of " + std::to_string(input.size()) + " values does not fit " +
                                    arch.input.str());
        inputs[i] = std::move(input);
        targets[i] = target_vs(model);
        classes[i] = geomodel::to_string(model.interface_class);
      },
      &errors);
  PairSet out;
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) {
      out.quarantined.push_back(quarantine_record(quarantine_item(first + i, variant.name), "simulate", errors[i]));
      continue;
    }
    out.indices.push_back(first + i);
    out.inputs.push_back(std::move(inputs[i]));
    out.targets_mps.push_back(std::move(targets[i]));
    out.classes.push_back(std::move(classes[i]));
  }
  return out;
}

SplitData split_pairs(const PairSet& pairs, const neuralvision::Architecture& arch,
                      const std::array<double, 3>& fractions) {
  const std::size_t n = pairs.inputs.size();
  const auto ranges = neuralvision::split_ranges(n, fractions);
  SplitData out;
  for (std::size_t i = ranges.train[0]; i < ranges.train[1]; ++i)
    for (double v : pairs.targets_mps[i].values()) out.vs_norm_max = std::max(out.vs_norm_max, v);
  if (!(out.vs_norm_max > 0.0)) throw DataError("training split is empty or has no positive Vs");

  const auto target_shape = arch.output_shape();
  auto fill = [&](const std::array<std::size_t, 2>& r, neuralvision::Dataset& d, std::vector<std::uint64_t>& idx) {
    d.input_shape = arch.input;
    d.target_shape = target_shape;
    for (std::size_t i = r[0]; i < r[1]; ++i) {
      if (pairs.targets_mps[i].size() != target_shape.size())
        throw DataError("target of " + std::to_string(pairs.targets_mps[i].size()) + " values does not fit " +
                        target_shape.str());
      std::vector<float> t(pairs.targets_mps[i].size());
      for (std::size_t k = 0; k < t.size(); ++k)
        t[k] = static_cast<float>(pairs.targets_mps[i].data()[k] / out.vs_norm_max);
      d.add(pairs.inputs[i], t);
      idx.push_back(pairs.indices[i]);
    }
  };
  fill(ranges.train, out.train, out.train_indices);
  fill(ranges.validation, out.validation, out.validation_indices);
  fill(ranges.test, out.test, out.test_indices);
  return out;
}

std::vector<VariantAggregate> aggregate(const std::vector<ReportRow>& rows,
                                        const std::vector<QuarantineEntry>& quarantined,
                                        const std::vector<std::string>& variant_order) {
  std::vector<std::string> order = variant_order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  std::vector<VariantAggregate> out;
  for (const auto& name : order) {
    VariantAggregate a;
    a.variant = name;
    double sum_mape = 0.0, sum_mssim = 0.0;
    for (const auto& r : rows)
      if (r.variant == name) {
        sum_mape += r.mape;
        sum_mssim += r.mssim;
        ++a.count;
      }
    const std::string suffix = "/" + name;
    for (const auto& q : quarantined)
      if (q.item.size() > suffix.size() && q.item.compare(q.item.size() - suffix.size(), suffix.size(), suffix) == 0)
        ++a.discarded;
    if (a.count) {
      a.mean_mape = sum_mape / static_cast<double>(a.count);
      a.mean_mssim = sum_mssim / static_cast<double>(a.count);
    } else {
      a.mean_mape = a.mean_mssim = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(a);
  }
  return out;
}

ExperimentReport run_experiment(const PipelineConfig& cfg, const neuralvision::Network<float>& net,
                                const std::vector<std::uint64_t>& test_indices,
                                const std::vector<Variant>& variants, double dynamic_range_mps,
                                std::size_t workers) {
  ExperimentReport report;
  if (variants.empty() || test_indices.empty()) {
    for (const auto& v : variants) report.aggregates.push_back({v.name, std::nan(""), std::nan(""), 0, 0});
    return report;
  }
  if (!(dynamic_range_mps > 0.0)) throw ValidationError("dynamic_range", "must be positive");
  if (!(net.vs_norm_max > 0.0)) throw DataError("network has no Vs normalisation constant");
  metrics::MetricConfig mc;
  mc.dynamic_range = dynamic_range_mps;

  const std::size_t n_models = test_indices.size();
  const std::size_t n = n_models * variants.size();
  std::vector<ReportRow> rows(n);
  std::vector<std::exception_ptr> errors;
  parallel_for(
      n, workers,
      [&](std::size_t job) {
        const auto& v = variants[job / n_models];
        const std::uint64_t idx = test_indices[job % n_models];
        const auto model = geomodel::generate_model(cfg.model, idx);
        const auto input = input_for(cfg, model, v);
        const auto pred = neuralvision::predict(net, input, "", model_id(idx));
        const GridD truth = target_vs(model);
        rows[job] = {model_id(idx), v.name, geomodel::to_string(model.interface_class),
                     metrics::mape(pred.vs_mps, truth), metrics::mssim(pred.vs_mps, truth, mc)};
      },
      &errors);
  std::vector<std::string> order;
  for (const auto& v : variants) order.push_back(v.name);
  for (std::size_t job = 0; job < n; ++job) {
    if (errors[job]) {
      const auto& v = variants[job / n_models];
      report.quarantined.push_back(
          quarantine_record(quarantine_item(test_indices[job % n_models], v.name), "evaluate", errors[job]));
    } else {
      report.rows.push_back(rows[job]);
    }
  }
  report.aggregates = aggregate(report.rows, report.quarantined, order);
  return report;
}

std::string report_csv(const ExperimentReport& report) {
  std::string out = "model_id,variant,interface_class,mape_percent,mssim\n";
  for (const auto& r : report.rows)
    out += r.model_id + "," + r.variant + "," + r.interface_class + "," + format_number(r.mape) + "," +
           format_number(r.mssim) + "\n";
  return out;
}

std::string summary_csv(const ExperimentReport& report) {
  std::string out = "variant,mean_mape_percent,mean_mssim,count,discarded\n";
  for (const auto& a : report.aggregates)
    out += a.variant + "," + format_number(a.mean_mape) + "," + format_number(a.mean_mssim) + "," +
           std::to_string(a.count) + "," + std::to_string(a.discarded) + "\n";
  return out;
}

std::string summary_table(const ExperimentReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %10s %8s %7s %10s\n", "variant", "MAPE (%)", "MSSIM", "count", "discarded");
  out += line;
  for (const auto& a : report.aggregates) {
    std::snprintf(line, sizeof(line), "%-14s %10.2f %8.3f %7zu %10zu\n", a.variant.c_str(), a.mean_mape,
                  a.mean_mssim, a.count, a.discarded);
    out += line;
  }
  return out;
}

ProfileSet slice_profiles(const GridD& vs, double pixel_m) {
  if (vs.empty()) throw ValidationError("prediction", "empty Vs image");
  if (!(pixel_m > 0.0)) throw ValidationError("pixel_m", "must be positive");
  for (double v : vs.values())
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("Vs image has a nonpositive or non-finite value");
  ProfileSet out;
  out.profiles.assign(vs.cols(), std::vector<double>(vs.rows()));
  out.median.resize(vs.rows());
  for (std::size_t r = 0; r < vs.rows(); ++r) {
    out.depth_m.push_back((static_cast<double>(r) + 0.5) * pixel_m);
    double log_sum = 0.0;
    for (std::size_t c = 0; c < vs.cols(); ++c) {
      out.profiles[c][r] = vs(r, c);
      log_sum += std::log(vs(r, c));
    }
    out.median[r] = std::exp(log_sum / static_cast<double>(vs.cols()));
  }
  return out;
}

std::vector<SearchResult> grid_search(const neuralvision::Architecture& arch, const neuralvision::Dataset& train,
                                      const neuralvision::Dataset& validation,
                                      const neuralvision::TrainConfig& base, const SearchSpace& space) {
  std::vector<SearchResult> out;
  for (double lr : space.learning_rates)
    for (std::size_t bs : space.batch_sizes)
      for (std::size_t ep : space.epochs)
        for (auto opt : space.optimizers)
          for (auto loss : space.losses) {
            neuralvision::TrainConfig tc = base;
            tc.learning_rate = lr;
            tc.batch_size = bs;
            tc.epochs = ep;
            tc.optimizer = opt;
            tc.loss = loss;
            neuralvision::Network<float> net(arch);
            net.initialize(tc.seed);
            const auto history = neuralvision::train(net, train, &validation, tc);
            SearchResult res{tc, std::numeric_limits<double>::infinity(), 0};
            for (const auto& h : history)
              if (h.validation_loss < res.best_validation_loss) {
                res.best_validation_loss = h.validation_loss;
                res.best_epoch = h.epoch;
              }
            out.push_back(res);
          }
  std::stable_sort(out.begin(), out.end(), [](const SearchResult& a, const SearchResult& b) {
    return a.best_validation_loss < b.best_validation_loss;
  });
  return out;
}

std::string model_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "model_%06llu", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace fvx::orchestry
