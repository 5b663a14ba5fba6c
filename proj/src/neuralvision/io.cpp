#include "fvx/neuralvision.hpp"

namespace fvx::neuralvision {

namespace {

std::string weight_block(std::size_t layer) { return "layer" + std::to_string(layer) + ".weights"; }
std::string bias_block(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

}  // namespace

fvbin::File to_fvbin(const Network<float>& net) {
  fvbin::File f;
  const auto& arch = net.architecture();
  f.metadata = {{"kind", "network"},
                {"architecture", to_json(arch)},
                {"shape", {arch.output_shape().h, arch.output_shape().w}},
                {"units", "normalized Vs (multiply by vs_norm_max for m/s)"},
                {"seed", net.seed},
                {"epochs_seen", net.epochs_seen},
                {"vs_norm_max", net.vs_norm_max},
                {"provenance", {{"parameters", arch.parameter_count()}}}};
  const auto shapes = arch.output_shapes();
  Shape3 in = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.kind == LayerKind::conv2d) {
      const auto w = net.weights(i);
      f.blocks.push_back({weight_block(i), {l.kh, l.kw, in.c, l.units}, {w.begin(), w.end()}});
    } else if (l.kind == LayerKind::dense) {
      const auto w = net.weights(i);
      f.blocks.push_back({weight_block(i), {in.size(), l.units}, {w.begin(), w.end()}});
    }
    if (l.has_parameters()) {
      const auto b = net.biases(i);
      f.blocks.push_back({bias_block(i), {l.units}, {b.begin(), b.end()}});
    }
    in = shapes[i];
  }
  return f;
}

Network<float> from_fvbin(const fvbin::File& f) {
  if (f.metadata.value("kind", "") != "network") throw DataError("FVBIN file does not hold a network");
  if (!f.metadata.contains("architecture")) throw DataError("network file lacks an architecture");
  Architecture arch = architecture_from_json(f.metadata["architecture"]);
  Network<float> net(arch);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (!arch.layers[i].has_parameters()) continue;
    auto fill = [&](const std::string& name, std::span<float> dst) {
      const auto& b = f.block(name);
      if (b.values.size() != dst.size())
        throw DataError("shape mismatch in block '" + name + "': expected " + std::to_string(dst.size()) +
                        " values, found " + std::to_string(b.values.size()));
      std::copy(b.values.begin(), b.values.end(), dst.begin());
    };
    fill(weight_block(i), net.weights(i));
    fill(bias_block(i), net.biases(i));
  }
  net.seed = f.metadata.value("seed", std::uint64_t{0});
  net.epochs_seen = f.metadata.value("epochs_seen", std::uint64_t{0});
  net.vs_norm_max = f.metadata.value("vs_norm_max", 0.0);
  return net;
}

void save(const Network<float>& net, const std::filesystem::path& path) { fvbin::write(path, to_fvbin(net)); }

Network<float> load(const std::filesystem::path& path) { return from_fvbin(fvbin::read(path)); }

Network<float> load(const std::filesystem::path& path, const Architecture& expected) {
  auto net = load(path);
  if (!(net.architecture() == expected))
    throw DataError(path.string() + ": stored architecture '" + net.architecture().name +
                    "' does not match the expected '" + expected.name + "'");
  return net;
}

}  // namespace fvx::neuralvision
