#include "fvx/artifacts.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <sstream>

namespace fvx::orchestry {

namespace {

using json = nlohmann::json;

std::vector<float> to_f32(const std::vector<double>& v) { return {v.begin(), v.end()}; }

GridD grid_from_block(const fvbin::Block& b, const std::string& what) {
  if (b.shape.size() != 2) throw DataError(what + ": block '" + b.name + "' is not two-dimensional");
  GridD g(b.shape[0], b.shape[1]);
  std::copy(b.values.begin(), b.values.end(), g.values().begin());
  return g;
}

fvbin::Block grid_block(const std::string& name, const GridD& g) {
  return {name, {g.rows(), g.cols()}, to_f32(g.values())};
}

void expect_kind(const fvbin::File& f, const std::string& kind) {
  const std::string k = artifact_kind(f);
  if (k != kind) throw DataError("expected a " + kind + " file, found kind '" + k + "'");
}

json source_json(const elastodyn::SourceFunction& s) {
  return {{"kind", elastodyn::to_string(s.kind)}, {"center_hz", s.center_hz}, {"highcut_hz", s.highcut_hz},
          {"f0_hz", s.f0_hz},  {"f1_hz", s.f1_hz},   {"sweep_s", s.sweep_s},
          {"taper_s", s.taper_s}, {"label", s.label()}};
}

elastodyn::SourceFunction source_from_json(const json& j) {
  elastodyn::SourceFunction s;
  s.kind = elastodyn::source_kind_from_string(j.at("kind").get<std::string>());
  s.center_hz = j.at("center_hz").get<double>();
  s.highcut_hz = j.at("highcut_hz").get<double>();
  s.f0_hz = j.at("f0_hz").get<double>();
  s.f1_hz = j.at("f1_hz").get<double>();
  s.sweep_s = j.at("sweep_s").get<double>();
  s.taper_s = j.at("taper_s").get<double>();
  return s;
}

json geometry_json(const elastodyn::AcquisitionGeometry& g) {
  return {{"receiver_x_m", g.receiver_x_m}, {"source_x_m", g.source_x_m}};
}

elastodyn::AcquisitionGeometry geometry_from_json(const json& j) {
  elastodyn::AcquisitionGeometry g;
  g.receiver_x_m = j.at("receiver_x_m").get<std::vector<double>>();
  g.source_x_m = j.at("source_x_m").get<double>();
  return g;
}

json grid_json(const beamform::DispersionGrid& g) {
  return {{"f_min_hz", g.f_min_hz}, {"f_max_hz", g.f_max_hz}, {"f_step_hz", g.f_step_hz},
          {"v_min_mps", g.v_min_mps}, {"v_max_mps", g.v_max_mps}, {"v_step_mps", g.v_step_mps}};
}

beamform::DispersionGrid grid_from_json(const json& j) {
  beamform::DispersionGrid g;
  g.f_min_hz = j.at("f_min_hz").get<double>();
  g.f_max_hz = j.at("f_max_hz").get<double>();
  g.f_step_hz = j.at("f_step_hz").get<double>();
  g.v_min_mps = j.at("v_min_mps").get<double>();
  g.v_max_mps = j.at("v_max_mps").get<double>();
  g.v_step_mps = j.at("v_step_mps").get<double>();
  return g;
}

template <typename F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(what + ": malformed metadata: " + e.what());
  }
}

// Splits one CSV record on commas; quoted cells may contain commas.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

bool parse_double(std::string_view cell, double& out) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return false;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw DataError("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(fvbin::read_bytes(path)); }

std::string artifact_kind(const fvbin::File& f) { return f.metadata.value("kind", std::string("unknown")); }

fvbin::File model_to_fvbin(const geomodel::VelocityModel& m) {
  fvbin::File f;
  std::vector<double> material(m.material.values().begin(), m.material.values().end());
  f.metadata = {{"kind", "model"},
                {"shape", {m.rows(), m.cols()}},
                {"units", {{"vs", "m/s"}, {"vp", "m/s"}, {"rho", "kg/m^3"}, {"interface_depth", "m"}}},
                {"pixel_m", m.pixel_m},
                {"x_origin_m", m.x_origin_m},
                {"provenance",
                 {{"seed", m.seed},
                  {"index", m.index},
                  {"interface_class", geomodel::to_string(m.interface_class)},
                  {"soil_factor", m.soil_factor},
                  {"bedrock_vs", m.bedrock_vs},
                  {"mean_interface_depth", m.mean_interface_depth},
                  {"undulation_freq", m.undulation_freq},
                  {"undulation_amp", m.undulation_amp},
                  {"undulation_phase", m.undulation_phase},
                  {"corr_v_m", m.corr_v_m},
                  {"corr_h_m", m.corr_h_m}}}};
  f.blocks.push_back(grid_block("vs", m.vs));
  f.blocks.push_back(grid_block("vp", m.vp));
  f.blocks.push_back(grid_block("rho", m.rho));
  f.blocks.push_back({"material", {m.rows(), m.cols()}, to_f32(material)});
  f.blocks.push_back({"interface_depth", {m.interface_depth.size()}, to_f32(m.interface_depth)});
  return f;
}

geomodel::VelocityModel model_from_fvbin(const fvbin::File& f) {
  expect_kind(f, "model");
  return guarded("model", [&] {
    geomodel::VelocityModel m;
    m.pixel_m = f.metadata.at("pixel_m").get<double>();
    m.x_origin_m = f.metadata.at("x_origin_m").get<double>();
    m.vs = grid_from_block(f.block("vs"), "model");
    m.vp = grid_from_block(f.block("vp"), "model");
    m.rho = grid_from_block(f.block("rho"), "model");
    const GridD mat = grid_from_block(f.block("material"), "model");
    if (!m.vp.same_shape(m.vs) || !m.rho.same_shape(m.vs) || !mat.same_shape(m.vs))
      throw DataError("model: grids differ in shape");
    m.material = Grid2D<std::uint8_t>(mat.rows(), mat.cols());
    for (std::size_t i = 0; i < mat.size(); ++i) m.material.data()[i] = static_cast<std::uint8_t>(mat.data()[i]);
    const auto& depth = f.block("interface_depth").values;
    m.interface_depth.assign(depth.begin(), depth.end());
    const auto& p = f.metadata.at("provenance");
    m.seed = p.at("seed").get<std::uint64_t>();
    m.index = p.at("index").get<std::uint64_t>();
    m.interface_class = geomodel::interface_class_from_string(p.at("interface_class").get<std::string>());
    m.soil_factor = p.at("soil_factor").get<double>();
    m.bedrock_vs = p.at("bedrock_vs").get<double>();
    m.mean_interface_depth = p.at("mean_interface_depth").get<double>();
    m.undulation_freq = p.at("undulation_freq").get<std::array<double, 3>>();
    m.undulation_amp = p.at("undulation_amp").get<std::array<double, 3>>();
    m.undulation_phase = p.at("undulation_phase").get<std::array<double, 3>>();
    m.corr_v_m = p.at("corr_v_m").get<double>();
    m.corr_h_m = p.at("corr_h_m").get<double>();
    return m;
  });
}

fvbin::File gather_to_fvbin(const elastodyn::ShotGather& g) {
  fvbin::File f;
  f.metadata = {{"kind", "gather"},
                {"shape", {g.n_receivers(), g.n_samples()}},
                {"units", "m/s vertical particle velocity"},
                {"rate_hz", g.rate_hz},
                {"geometry", geometry_json(g.geometry)},
                {"source", source_json(g.source)},
                {"provenance", json::object()}};
  f.blocks.push_back(grid_block("traces", g.traces));
  return f;
}

elastodyn::ShotGather gather_from_fvbin(const fvbin::File& f) {
  expect_kind(f, "gather");
  return guarded("gather", [&] {
    elastodyn::ShotGather g;
    g.traces = grid_from_block(f.block("traces"), "gather");
    g.rate_hz = f.metadata.at("rate_hz").get<double>();
    g.geometry = geometry_from_json(f.metadata.at("geometry"));
    g.source = source_from_json(f.metadata.at("source"));
    if (g.geometry.n_receivers() != g.traces.rows())
      throw DataError("gather: geometry has " + std::to_string(g.geometry.n_receivers()) + " receivers but " +
                      std::to_string(g.traces.rows()) + " traces");
    return g;
  });
}

fvbin::File image_to_fvbin(const beamform::DispersionImage& im) {
  fvbin::File f;
  std::vector<int> degenerate(im.degenerate_columns.begin(), im.degenerate_columns.end());
  f.metadata = {{"kind", "image"},
                {"shape", {im.power.rows(), im.power.cols()}},
                {"units", "beam power, rows = trial velocity, columns = frequency"},
                {"grid", grid_json(im.grid)},
                {"normalization", beamform::to_string(im.normalization)},
                {"degenerate_columns", degenerate},
                {"degenerate", im.degenerate},
                {"geometry", geometry_json(im.geometry)},
                {"source", im.source_label},
                {"steering", im.steering.label()},
                {"provenance", json::object()}};
  f.blocks.push_back(grid_block("power", im.power));
  return f;
}

beamform::DispersionImage image_from_fvbin(const fvbin::File& f) {
  expect_kind(f, "image");
  return guarded("image", [&] {
    beamform::DispersionImage im;
    im.power = grid_from_block(f.block("power"), "image");
    im.grid = grid_from_json(f.metadata.at("grid"));
    if (im.power.rows() != im.grid.n_velocities() || im.power.cols() != im.grid.n_frequencies())
      throw DataError("image: power shape does not match its grid");
    im.normalization = beamform::normalization_from_string(f.metadata.at("normalization").get<std::string>());
    for (int d : f.metadata.at("degenerate_columns").get<std::vector<int>>())
      im.degenerate_columns.push_back(static_cast<std::uint8_t>(d));
    im.degenerate = f.metadata.at("degenerate").get<bool>();
    im.geometry = geometry_from_json(f.metadata.at("geometry"));
    im.source_label = f.metadata.at("source").get<std::string>();
    im.steering = beamform::steering_from_string(f.metadata.at("steering").get<std::string>());
    return im;
  });
}

fvbin::File prediction_to_fvbin(const neuralvision::VsImagePrediction& p) {
  fvbin::File f;
  f.metadata = {{"kind", "prediction"},
                {"shape", {p.vs_mps.rows(), p.vs_mps.cols()}},
                {"units", {{"normalized", "1"}, {"vs_mps", "m/s"}}},
                {"vs_norm_max", p.vs_norm_max},
                {"provenance", {{"network", p.network_id}, {"input", p.input_id}}}};
  f.blocks.push_back(grid_block("normalized", p.normalized));
  f.blocks.push_back(grid_block("vs_mps", p.vs_mps));
  return f;
}

neuralvision::VsImagePrediction prediction_from_fvbin(const fvbin::File& f) {
  expect_kind(f, "prediction");
  return guarded("prediction", [&] {
    neuralvision::VsImagePrediction p;
    p.normalized = grid_from_block(f.block("normalized"), "prediction");
    p.vs_mps = grid_from_block(f.block("vs_mps"), "prediction");
    p.vs_norm_max = f.metadata.at("vs_norm_max").get<double>();
    p.network_id = f.metadata.at("provenance").at("network").get<std::string>();
    p.input_id = f.metadata.at("provenance").at("input").get<std::string>();
    return p;
  });
}

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  json artifacts = json::array();
  for (const auto& a : m.artifacts)
    artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"kind", a.kind}, {"info", a.info}});
  json quarantined = json::array();
  for (const auto& q : m.quarantined)
    quarantined.push_back({{"item", q.item}, {"stage", q.stage}, {"reason", q.reason}, {"exit_code", q.exit_code}});
  const json doc{{"stage", m.stage}, {"config", m.config}, {"artifacts", artifacts}, {"quarantined", quarantined}};
  fvbin::write_bytes_atomic(dir / "manifest.json", doc.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw DataError("missing manifest " + path.string());
  json doc;
  try {
    doc = json::parse(fvbin::read_bytes(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return guarded(path.string(), [&] {
    Manifest m;
    m.stage = doc.at("stage").get<std::string>();
    m.config = doc.at("config");
    for (const auto& a : doc.at("artifacts"))
      m.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>(),
                             a.at("kind").get<std::string>(), a.value("info", json::object())});
    for (const auto& q : doc.at("quarantined"))
      m.quarantined.push_back({q.at("item").get<std::string>(), q.at("stage").get<std::string>(),
                               q.at("reason").get<std::string>(), q.at("exit_code").get<int>()});
    return m;
  });
}

void verify_manifest(const std::filesystem::path& dir, const Manifest& m) {
  for (const auto& a : m.artifacts) {
    const auto path = dir / a.path;
    if (!std::filesystem::exists(path)) throw DataError("manifest lists missing artifact " + path.string());
    const std::string h = sha256_file(path);
    if (h != a.sha256)
      throw DataError("hash mismatch for " + path.string() + ": manifest " + a.sha256 + ", file " + h);
  }
}

ManifestEntry write_artifact(const std::filesystem::path& dir, const std::string& name, const fvbin::File& file,
                             json info) {
  const std::string bytes = fvbin::encode(file);
  fvbin::write_bytes_atomic(dir / name, bytes);
  return {name, sha256_hex(bytes), artifact_kind(file), std::move(info)};
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_number(float v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string grid_to_csv(const GridD& g) {
  std::string out;
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      if (c) out += ',';
      out += format_number(g(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string gather_to_csv(const elastodyn::ShotGather& g) {
  std::string out;
  for (std::size_t r = 0; r < g.n_receivers(); ++r) out += (r ? ",r" : "r") + std::to_string(r);
  out += '\n';
  for (std::size_t k = 0; k < g.n_samples(); ++k) {
    for (std::size_t r = 0; r < g.n_receivers(); ++r) {
      if (r) out += ',';
      out += format_number(static_cast<float>(g.traces(r, k)));
    }
    out += '\n';
  }
  return out;
}

elastodyn::ShotGather parse_gather_csv(std::string_view text, const elastodyn::AcquisitionGeometry& geometry,
                                       double rate_hz, const std::string& origin) {
  elastodyn::validate(geometry);
  if (!(rate_hz > 0.0)) throw ValidationError("rate_hz", "must be positive");
  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cells = split_record(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (!parse_double(cells[c], values[c])) {
        numeric = false;
        bad = c;
        break;
      }
    if (!numeric) {
      if (rows.empty() && columns == 0) {
        columns = cells.size();  // header row
        continue;
      }
      throw DataError(origin + ":" + std::to_string(line_no) + ": non-numeric cell '" + cells[bad] +
                      "' in column " + std::to_string(bad + 1));
    }
    if (columns == 0) columns = cells.size();
    if (cells.size() != columns)
      throw DataError(origin + ":" + std::to_string(line_no) + ": ragged row with " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(columns));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError(origin + ": no numeric rows");
  if (columns != geometry.n_receivers())
    throw DataError(origin + ": CSV has " + std::to_string(columns) + " columns but the geometry has " +
                    std::to_string(geometry.n_receivers()) + " receivers");
  elastodyn::ShotGather g;
  g.geometry = geometry;
  g.rate_hz = rate_hz;
  g.traces = GridD(columns, rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t r = 0; r < columns; ++r) g.traces(r, k) = rows[k][r];
  return g;
}

elastodyn::ShotGather import_csv(const std::filesystem::path& path, const elastodyn::AcquisitionGeometry& geometry,
                                 double rate_hz) {
  return parse_gather_csv(fvbin::read_bytes(path), geometry, rate_hz, path.string());
}

elastodyn::ShotGather import_csv(const std::vector<std::filesystem::path>& paths,
                                 const elastodyn::AcquisitionGeometry& geometry, double rate_hz) {
  if (paths.empty()) throw ValidationError("inputs", "no CSV files given");
  std::vector<elastodyn::ShotGather> shots;
  for (const auto& p : paths) shots.push_back(import_csv(p, geometry, rate_hz));
  if (shots.size() == 1) return shots.front();
  return elastodyn::stack_shots(shots);
}

Rgb colormap(double t) {
  static constexpr std::array<Rgb, 9> knots{{{68, 1, 84},
                                              {71, 44, 122},
                                              {59, 81, 139},
                                              {44, 113, 142},
                                              {33, 144, 141},
                                              {39, 173, 129},
                                              {92, 200, 99},
                                              {170, 220, 50},
                                              {253, 231, 37}}};
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0) * 8.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), 7);
  const double u = t - static_cast<double>(i);
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(std::lround(knots[i][c] + u * (knots[i + 1][c] - knots[i][c])));
  return out;
}

void write_png(const std::filesystem::path& path, const GridD& grid, double lo, double hi, std::size_t scale) {
  if (grid.empty()) throw ValidationError("png", "empty grid");
  const std::size_t px = std::max<std::size_t>(scale, 1);
  const std::size_t width = grid.cols() * px;
  const std::size_t height = grid.rows() * px;
  const double span = hi > lo ? hi - lo : 1.0;

  std::string bytes;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: encoding failed for " + path.string());
  }
  png_set_write_fn(
      png, &bytes,
      [](png_structp p, png_bytep data, png_size_t n) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), n);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(width * 3);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t r = y / px;
    for (std::size_t x = 0; x < width; ++x) {
      const Rgb c = colormap((grid(r, x / px) - lo) / span);
      std::copy(c.begin(), c.end(), row.begin() + static_cast<std::ptrdiff_t>(3 * x));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  fvbin::write_bytes_atomic(path, bytes);
}

}  // namespace fvx::orchestry
