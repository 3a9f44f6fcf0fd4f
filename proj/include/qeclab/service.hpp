#pragma once

// JSON request handlers behind the HTTP API. Each handler is a pure function
// of (request body, model registry) and can be called without a server.
//
// Cells are addressed as {"row": r, "col": c} in layout grid coordinates.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeclab/dataset.hpp"
#include "qeclab/decoders.hpp"
#include "qeclab/explain.hpp"
#include "qeclab/geometry.hpp"
#include "qeclab/hld.hpp"
#include "qeclab/model_io.hpp"
#include "qeclab/noise.hpp"

namespace qeclab::service {

using nlohmann::json;

struct ApiError : std::runtime_error {
  int status;
  std::string code;
  ApiError(int s, std::string c, const std::string& message)
      : std::runtime_error(message), status(s), code(std::move(c)) {}
};

inline ApiError bad_request(const std::string& msg) { return {400, "invalid_request", msg}; }
inline ApiError not_found(const std::string& msg) { return {404, "not_found", msg}; }

struct Response {
  int status = 200;
  json body;
};

inline json error_body(const ApiError& e) { return {{"error", {{"status", e.status}, {"code", e.code}, {"message", e.what()}}}}; }

inline constexpr const char* kModelExtension = ".qmodel";

/// Models found in a directory as <id>.qmodel. Listing rescans the directory;
/// full models are loaded on first use and then shared read-only.
class ModelRegistry {
 public:
  ModelRegistry() = default;
  explicit ModelRegistry(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& directory() const { return dir_; }

  static bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 128) return false;
    for (char c : id) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
    }
    return id.front() != '.';
  }

  json list() const {
    if (dir_.empty()) throw ApiError(500, "no_models_dir", "models directory is not configured");
    std::error_code ec;
    std::filesystem::directory_iterator it(dir_, ec);
    if (ec) throw ApiError(500, "models_dir_unreadable", "cannot read models directory: " + ec.message());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : it) {
      if (entry.is_regular_file() && entry.path().extension() == kModelExtension) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    json out = json::array();
    for (const auto& f : files) {
      const std::string id = f.stem().string();
      json item{{"model_id", id}};
      try {
        std::ifstream is(f, std::ios::binary);
        std::size_t weights = 0;
        const ModelFile m = read_model_manifest(is, &weights);
        item.update(describe(m));
      } catch (const std::exception& e) {
        item["warning"] = std::string("unreadable model manifest: ") + e.what();
      }
      out.push_back(std::move(item));
    }
    return out;
  }

  std::shared_ptr<const ModelFile> get(const std::string& id) const {
    if (!valid_id(id)) throw bad_request("invalid model_id");
    {
      std::shared_lock lock(mu_);
      const auto it = cache_.find(id);
      if (it != cache_.end()) return it->second;
    }
    if (dir_.empty()) throw not_found("unknown model '" + id + "'");
    const auto path = dir_ / (id + kModelExtension);
    if (!std::filesystem::is_regular_file(path)) throw not_found("unknown model '" + id + "'");
    std::shared_ptr<const ModelFile> m;
    try {
      m = std::make_shared<const ModelFile>(load_model(path.string()));
    } catch (const std::exception& e) {
      throw ApiError(500, "model_unreadable", "model '" + id + "' cannot be loaded: " + e.what());
    }
    std::unique_lock lock(mu_);
    return cache_.emplace(id, std::move(m)).first->second;
  }

  /// Registers an in-memory model (used by tests and embedding programs).
  void add(const std::string& id, ModelFile model) {
    if (!valid_id(id)) throw std::invalid_argument("invalid model id");
    std::unique_lock lock(mu_);
    cache_[id] = std::make_shared<const ModelFile>(std::move(model));
  }

  static json describe(const ModelFile& m) {
    const int d = (m.spec.input.height + 1) / 2;
    json layers = json::array();
    for (const auto& l : m.spec.layers) layers.push_back(qeclab::detail::layer_to_string(l));
    return {
        {"d", d},
        {"noise_kind", m.spec.input.channels == 1 ? "depolarizing" : "phenomenological"},
        {"input", {m.spec.input.channels, m.spec.input.height, m.spec.input.width}},
        {"param_count", nn::param_count(m.spec)},
        {"architecture", layers},
        {"metadata", m.meta},
    };
  }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const ModelFile>> cache_;
};

namespace detail {

inline int get_int(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end()) throw bad_request(std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) throw bad_request(std::string("field '") + key + "' must be an integer");
  return it->get<int>();
}

inline double get_number(const json& body, const char* key, double fallback) {
  const auto it = body.find(key);
  if (it == body.end()) return fallback;
  if (!it->is_number()) throw bad_request(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

inline CodeLayout layout_for(int d) {
  try {
    return CodeLayout(d);
  } catch (const std::invalid_argument& e) {
    throw bad_request(e.what());
  }
}

inline Cell parse_cell(const json& j, const CodeLayout& layout) {
  if (!j.is_object() || !j.contains("row") || !j.contains("col") || !j["row"].is_number_integer() ||
      !j["col"].is_number_integer()) {
    throw bad_request("cells must be objects {\"row\": int, \"col\": int}");
  }
  const Cell c{j["row"].get<int>(), j["col"].get<int>()};
  if (!layout.contains(c)) throw bad_request("cell outside the lattice");
  return c;
}

inline json cell_json(Cell c) { return {{"row", c.row}, {"col", c.col}}; }

inline std::string pauli_name(Pauli p) {
  switch (p) {
    case Pauli::I: return "I";
    case Pauli::X: return "X";
    case Pauli::Z: return "Z";
    case Pauli::Y: return "Y";
  }
  return "I";
}

inline Pauli parse_pauli(const json& j) {
  if (!j.is_string()) throw bad_request("pauli must be one of \"X\", \"Y\", \"Z\", \"I\"");
  const auto s = j.get<std::string>();
  if (s == "I") return Pauli::I;
  if (s == "X") return Pauli::X;
  if (s == "Z") return Pauli::Z;
  if (s == "Y") return Pauli::Y;
  throw bad_request("pauli must be one of \"X\", \"Y\", \"Z\", \"I\"");
}

inline PauliError parse_errors(const json& arr, const CodeLayout& layout) {
  if (!arr.is_array()) throw bad_request("placed_errors must be an array");
  PauliError e(layout);
  for (const auto& item : arr) {
    const Cell c = parse_cell(item, layout);
    if (CodeLayout::role(c) != CellRole::Data) throw bad_request("errors can only be placed on data cells");
    if (!item.contains("pauli")) throw bad_request("placed error needs a 'pauli' field");
    e.apply(c, parse_pauli(item["pauli"]));
  }
  return e;
}

inline json error_json(const PauliError& e, const CodeLayout& layout) {
  json out = json::array();
  for (const Cell& c : layout.data_cells()) {
    const Pauli p = e.at(c);
    if (p != Pauli::I) out.push_back({{"row", c.row}, {"col", c.col}, {"pauli", pauli_name(p)}});
  }
  return out;
}

inline json syndrome_json(const Syndrome& s, const CodeLayout& layout) {
  json out = json::array();
  for (const Cell& c : layout.measurement_cells()) {
    if (s.flipped(c)) out.push_back(cell_json(c));
  }
  return out;
}

inline Syndrome parse_syndrome(const json& arr, const CodeLayout& layout) {
  if (!arr.is_array()) throw bad_request("each syndrome must be an array of flipped cells");
  Syndrome s(layout);
  for (const auto& item : arr) {
    const Cell c = parse_cell(item, layout);
    if (CodeLayout::role(c) == CellRole::Data) throw bad_request("syndrome cells must be stabilizer cells");
    s.set(c, true);
  }
  return s;
}

struct DecodeInput {
  std::optional<PauliError> error;
  std::vector<Syndrome> syndromes;  // last entry is the perfect syndrome
};

/// Exactly one of placed_errors / syndromes. Placed errors produce a single
/// perfect syndrome, repeated to `channels` when a multi-cycle model is used.
inline DecodeInput parse_decode_input(const json& body, const CodeLayout& layout, int channels) {
  const bool has_errors = body.contains("placed_errors");
  const bool has_syndromes = body.contains("syndromes");
  if (has_errors == has_syndromes) throw bad_request("give exactly one of 'placed_errors' or 'syndromes'");
  DecodeInput in;
  if (has_errors) {
    in.error = parse_errors(body["placed_errors"], layout);
    in.syndromes.assign(static_cast<std::size_t>(std::max(channels, 1)), syndrome_of(*in.error, layout));
  } else {
    const auto& arr = body["syndromes"];
    if (!arr.is_array() || arr.empty()) throw bad_request("'syndromes' must be a non-empty array");
    for (const auto& s : arr) in.syndromes.push_back(parse_syndrome(s, layout));
    if (channels > 0 && static_cast<int>(in.syndromes.size()) != channels) {
      throw bad_request("model expects " + std::to_string(channels) + " syndromes");
    }
  }
  return in;
}

inline void check_model_distance(const ModelFile& m, const CodeLayout& layout) {
  if (m.spec.input.height != layout.size() || m.spec.input.width != layout.size()) {
    throw bad_request("model was built for a different code distance");
  }
}

}  // namespace detail

inline json layout_json(const CodeLayout& layout) {
  json cells = json::array();
  json roles = json::array();
  for (int r = 0; r < layout.size(); ++r) {
    json row = json::array();
    for (int c = 0; c < layout.size(); ++c) {
      const CellRole role = CodeLayout::role(r, c);
      const char* name = role == CellRole::Data ? "data" : role == CellRole::StabX ? "stab_x" : "stab_z";
      row.push_back(name);
      cells.push_back({{"row", r}, {"col", c}, {"role", name}});
    }
    roles.push_back(std::move(row));
  }
  json lx = json::array();
  for (const Cell& c : layout.logical_x_support()) lx.push_back(detail::cell_json(c));
  json lz = json::array();
  for (const Cell& c : layout.logical_z_support()) lz.push_back(detail::cell_json(c));
  return {{"d", layout.distance()}, {"grid_size", layout.size()}, {"cells", cells}, {"roles", roles},
          {"logical_x_support", lx}, {"logical_z_support", lz}};
}

inline Response get_layout(const std::string& d_text) {
  int d = 0;
  try {
    std::size_t used = 0;
    d = std::stoi(d_text, &used);
    if (used != d_text.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw bad_request("distance must be an integer");
  }
  return {200, layout_json(detail::layout_for(d))};
}

inline Response post_decode(const json& body, const ModelRegistry& models) {
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  const CodeLayout layout = detail::layout_for(detail::get_int(body, "d"));
  const std::string decoder = body.value("decoder", "simple");
  if (decoder != "simple" && decoder != "mwpm" && decoder != "hld") {
    throw bad_request("decoder must be 'simple', 'mwpm' or 'hld'");
  }
  std::shared_ptr<const ModelFile> model;
  if (decoder == "hld") {
    if (!body.contains("model_id") || !body["model_id"].is_string()) throw bad_request("hld needs 'model_id'");
    model = models.get(body["model_id"].get<std::string>());
    detail::check_model_distance(*model, layout);
  }
  const detail::DecodeInput in =
      detail::parse_decode_input(body, layout, model ? model->spec.input.channels : 0);
  const Syndrome& final_syndrome = in.syndromes.back();

  json out;
  Correction correction(layout);
  if (decoder == "simple") {
    correction = simple_decode(final_syndrome, layout);
  } else if (decoder == "mwpm") {
    correction = mwpm_decode(final_syndrome, layout);
  } else {
    const HldDecodeResult r = decode_full_detailed(in.syndromes, layout, *model);
    correction = r.correction;
    out["probabilities"] = r.prediction.probabilities;
    out["predicted_class"] = std::string(to_string(r.prediction.cls));
  }
  json syndromes = json::array();
  for (const auto& s : in.syndromes) syndromes.push_back(detail::syndrome_json(s, layout));
  out["decoder"] = decoder;
  out["syndromes"] = syndromes;
  out["correction"] = detail::error_json(correction, layout);
  if (in.error) {
    const PauliError residual = compose(*in.error, correction);
    out["residual_class"] = std::string(to_string(logical_class(residual, layout)));
  } else {
    out["residual_class"] = nullptr;
  }
  return {200, out};
}

inline Response post_saliency(const json& body, const ModelRegistry& models) {
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  const CodeLayout layout = detail::layout_for(detail::get_int(body, "d"));
  if (!body.contains("model_id") || !body["model_id"].is_string()) throw bad_request("missing 'model_id'");
  const auto model = models.get(body["model_id"].get<std::string>());
  detail::check_model_distance(*model, layout);
  OcclusionConfig cfg;
  if (body.contains("patch")) cfg.patch_h = cfg.patch_w = detail::get_int(body, "patch");
  if (body.contains("stride")) cfg.stride = detail::get_int(body, "stride");
  if (cfg.patch_h < 1 || cfg.patch_h > layout.size()) throw bad_request("patch must be in [1, grid size]");
  if (cfg.stride < 1) throw bad_request("stride must be >= 1");
  const detail::DecodeInput in = detail::parse_decode_input(body, layout, model->spec.input.channels);
  const SaliencyMap map = occlusion_saliency(*model, encode_input(in.syndromes, layout), cfg);
  return {200, saliency_to_json(map)};
}

inline Response post_sample(const json& body) {
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  const CodeLayout layout = detail::layout_for(detail::get_int(body, "d"));
  NoiseConfig noise;
  try {
    noise.kind = noise_kind_from_string(body.value("noise", std::string("depolarizing")));
  } catch (const std::invalid_argument& e) {
    throw bad_request(e.what());
  }
  noise.p = detail::get_number(body, "p", 0.0);
  if (noise.kind == NoiseKind::Phenomenological) {
    noise.q = detail::get_number(body, "q", noise.p);
    noise.cycles = body.contains("cycles") ? detail::get_int(body, "cycles") : 3;
  }
  try {
    noise.validate();
  } catch (const std::invalid_argument& e) {
    throw bad_request(e.what());
  }
  std::uint64_t seed = 0;
  if (body.contains("seed")) {
    if (!body["seed"].is_number_unsigned() && !body["seed"].is_number_integer()) throw bad_request("seed must be an integer");
    seed = body["seed"].get<std::uint64_t>();
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  const std::uint64_t index = body.contains("index") ? body["index"].get<std::uint64_t>() : 0;
  const Sample s = draw_sample(layout, noise, SeedSpec{seed}, index);
  json syndromes = json::array();
  for (const auto& syn : s.syndromes) syndromes.push_back(detail::syndrome_json(syn, layout));
  return {200,
          {{"d", layout.distance()},
           {"noise", std::string(to_string(noise.kind))},
           {"seed", seed},
           {"error", detail::error_json(s.error, layout)},
           {"syndromes", syndromes},
           {"final_perfect", detail::syndrome_json(s.syndromes.back(), layout)},
           {"label", std::string(to_string(s.label))}}};
}

inline Response get_models(const ModelRegistry& models) { return {200, models.list()}; }

/// Runs a handler, mapping exceptions onto API errors.
template <class Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ApiError& e) {
    return {e.status, error_body(e)};
  } catch (const json::exception& e) {
    return {400, error_body(bad_request(std::string("malformed JSON: ") + e.what()))};
  } catch (const std::exception& e) {
    return {500, error_body(ApiError(500, "internal", e.what()))};
  }
}

/// Dispatches one request by method and path.
inline Response handle(const std::string& method, const std::string& path, const std::string& body,
                       const ModelRegistry& models) {
  return guarded([&]() -> Response {
    auto parse = [&] { return body.empty() ? json::object() : json::parse(body); };
    const std::string layouts = "/api/layouts/";
    if (method == "GET" && path.rfind(layouts, 0) == 0) return get_layout(path.substr(layouts.size()));
    if (method == "GET" && path == "/api/models") return get_models(models);
    if (method == "POST" && path == "/api/decode") return post_decode(parse(), models);
    if (method == "POST" && path == "/api/saliency") return post_saliency(parse(), models);
    if (method == "POST" && path == "/api/sample") return post_sample(parse());
    throw not_found("no route for " + method + " " + path);
  });
}

}  // namespace qeclab::service
