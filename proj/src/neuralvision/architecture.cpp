#include <sstream>

#include "fvx/neuralvision.hpp"

namespace fvx::neuralvision {

std::string Shape3::str() const {
  std::ostringstream os;
  os << h << "x" << w << "x" << c;
  return os.str();
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::reshape: return "reshape";
  }
  return "unknown";
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

namespace {

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::flatten, LayerKind::dense,
                 LayerKind::reshape})
    if (to_string(k) == s) return k;
  throw DataError("unknown layer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw DataError("unknown activation '" + s + "'");
}

}  // namespace

LayerSpec LayerSpec::conv(std::size_t kh, std::size_t kw, std::size_t channels, Activation act) {
  return {LayerKind::conv2d, kh, kw, channels, act, {}};
}
LayerSpec LayerSpec::pool(std::size_t ph, std::size_t pw) {
  return {LayerKind::maxpool2d, ph, pw, 0, Activation::linear, {}};
}
LayerSpec LayerSpec::flatten() { return {LayerKind::flatten, 1, 1, 0, Activation::linear, {}}; }
LayerSpec LayerSpec::dense(std::size_t units, Activation act) {
  return {LayerKind::dense, 1, 1, units, act, {}};
}
LayerSpec LayerSpec::reshape(std::size_t h, std::size_t w) {
  return {LayerKind::reshape, 1, 1, 0, Activation::linear, {h, w, 1}};
}

std::vector<Shape3> Architecture::output_shapes() const {
  if (input.size() == 0) throw ValidationError("architecture.input", "empty input shape");
  std::vector<Shape3> out;
  Shape3 s = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string field = "architecture.layers[" + std::to_string(i) + "]";
    switch (l.kind) {
      case LayerKind::conv2d:
        if (l.kh == 0 || l.kw == 0 || l.units == 0) throw ValidationError(field, "empty kernel");
        if (l.kh > s.h || l.kw > s.w)
          throw ValidationError(field, "kernel larger than input " + s.str());
        s = {s.h - l.kh + 1, s.w - l.kw + 1, l.units};
        break;
      case LayerKind::maxpool2d:
        if (l.kh == 0 || l.kw == 0) throw ValidationError(field, "empty pooling window");
        if (l.kh > s.h || l.kw > s.w)
          throw ValidationError(field, "pooling window larger than input " + s.str());
        s = {s.h / l.kh, s.w / l.kw, s.c};
        break;
      case LayerKind::flatten: s = {1, 1, s.size()}; break;
      case LayerKind::dense:
        if (l.units == 0) throw ValidationError(field, "zero units");
        if (s.h != 1 || s.w != 1) throw ValidationError(field, "dense layer needs a flat input");
        s = {1, 1, l.units};
        break;
      case LayerKind::reshape:
        if (l.target.size() != s.size())
          throw ValidationError(field, "cannot reshape " + s.str() + " to " + l.target.str());
        s = l.target;
        break;
    }
    out.push_back(s);
  }
  return out;
}

Shape3 Architecture::output_shape() const {
  const auto shapes = output_shapes();
  return shapes.empty() ? input : shapes.back();
}

std::size_t Architecture::parameter_count() const {
  const auto shapes = output_shapes();
  std::size_t n = 0;
  Shape3 in = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::conv2d) n += l.kh * l.kw * in.c * l.units + l.units;
    if (l.kind == LayerKind::dense) n += in.size() * l.units + l.units;
    in = shapes[i];
  }
  return n;
}

Architecture frequency_velocity_architecture() {
  Architecture a;
  a.name = "frequency_velocity";
  a.input = {400, 76, 1};
  a.layers = {LayerSpec::conv(3, 1, 32),  LayerSpec::pool(3, 1), LayerSpec::conv(3, 1, 32),
              LayerSpec::pool(3, 1),      LayerSpec::conv(3, 1, 64), LayerSpec::pool(1, 3),
              LayerSpec::conv(3, 3, 128), LayerSpec::pool(3, 3), LayerSpec::conv(3, 3, 128),
              LayerSpec::flatten(),       LayerSpec::dense(1152), LayerSpec::reshape(24, 48)};
  return a;
}

Architecture time_distance_architecture() {
  Architecture a;
  a.name = "time_distance";
  a.input = {48, 800, 1};
  a.layers = {LayerSpec::conv(1, 3, 32),  LayerSpec::pool(1, 3), LayerSpec::conv(1, 3, 32),
              LayerSpec::pool(1, 3),      LayerSpec::conv(1, 3, 64), LayerSpec::pool(2, 3),
              LayerSpec::conv(3, 3, 128), LayerSpec::pool(2, 2), LayerSpec::conv(3, 3, 128),
              LayerSpec::flatten(),       LayerSpec::dense(1152), LayerSpec::reshape(24, 48)};
  return a;
}

nlohmann::json to_json(const Architecture& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : arch.layers) {
    nlohmann::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv2d:
        j["kernel"] = {l.kh, l.kw};
        j["units"] = l.units;
        j["activation"] = to_string(l.activation);
        break;
      case LayerKind::maxpool2d: j["pool"] = {l.kh, l.kw}; break;
      case LayerKind::dense:
        j["units"] = l.units;
        j["activation"] = to_string(l.activation);
        break;
      case LayerKind::reshape: j["target"] = {l.target.h, l.target.w, l.target.c}; break;
      case LayerKind::flatten: break;
    }
    layers.push_back(j);
  }
  return {{"name", arch.name},
          {"input", {arch.input.h, arch.input.w, arch.input.c}},
          {"layers", layers}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  try {
    Architecture a;
    a.name = j.at("name").get<std::string>();
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw DataError("architecture input must have 3 dimensions");
    a.input = {in[0], in[1], in[2]};
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
      switch (l.kind) {
        case LayerKind::conv2d: {
          const auto k = jl.at("kernel").get<std::vector<std::size_t>>();
          l = LayerSpec::conv(k.at(0), k.at(1), jl.at("units").get<std::size_t>(),
                              activation_from_string(jl.at("activation").get<std::string>()));
          break;
        }
        case LayerKind::maxpool2d: {
          const auto p = jl.at("pool").get<std::vector<std::size_t>>();
          l = LayerSpec::pool(p.at(0), p.at(1));
          break;
        }
        case LayerKind::dense:
          l = LayerSpec::dense(jl.at("units").get<std::size_t>(),
                               activation_from_string(jl.at("activation").get<std::string>()));
          break;
        case LayerKind::reshape: {
          const auto t = jl.at("target").get<std::vector<std::size_t>>();
          l = LayerSpec::reshape(t.at(0), t.at(1));
          l.target.c = t.at(2);
          break;
        }
        case LayerKind::flatten: l = LayerSpec::flatten(); break;
      }
      a.layers.push_back(l);
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed architecture: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("malformed architecture: ") + e.what());
  }
}

}  // namespace fvx::neuralvision
