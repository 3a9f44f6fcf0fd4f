#pragma once

// Model file: a text manifest followed by a little-endian float64 weight blob.
//
//   qeclab-model 1
//   input <C> <H> <W>
//   classes 4
//   layers <n>
//   conv2d filters=64 kernel=3x3 stride=1 dilation=1 padding=same
//   relu
//   flatten
//   dense units=512
//   softmax
//   meta <key> <value...>        (zero or more)
//   weights <count>
//   <count * 8 bytes>
//
// Weights follow layer order; each layer stores its kernel ([out, in, kh, kw]
// or [units, inputs], row-major) followed by its bias.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "qeclab/nn.hpp"

namespace qeclab {

struct ModelFile {
  nn::ModelSpec spec;
  nn::Parameters params;
  std::map<std::string, std::string> meta;
};

namespace detail {

inline std::string layer_to_string(const nn::LayerSpec& layer) {
  std::ostringstream os;
  if (const auto* c = std::get_if<nn::Conv2D>(&layer)) {
    os << "conv2d filters=" << c->filters << " kernel=" << c->kernel_h << "x" << c->kernel_w
       << " stride=" << c->stride << " dilation=" << c->dilation
       << " padding=" << (c->padding == nn::Padding::Same ? "same" : "valid");
  } else if (const auto* d = std::get_if<nn::Dense>(&layer)) {
    os << "dense units=" << d->units;
  } else if (std::holds_alternative<nn::Flatten>(layer)) {
    os << "flatten";
  } else {
    os << (std::get<nn::Activation>(layer).kind == nn::ActivationKind::Relu ? "relu" : "softmax");
  }
  return os.str();
}

inline nn::LayerSpec layer_from_string(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  std::map<std::string, std::string> kv;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed layer attribute: " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto num = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("layer '" + kind + "' missing " + key);
    return std::stoi(it->second);
  };
  if (kind == "conv2d") {
    nn::Conv2D c;
    c.filters = num("filters");
    const auto it = kv.find("kernel");
    if (it == kv.end()) throw std::runtime_error("conv2d missing kernel");
    const auto x = it->second.find('x');
    if (x == std::string::npos) throw std::runtime_error("conv2d kernel must be HxW");
    c.kernel_h = std::stoi(it->second.substr(0, x));
    c.kernel_w = std::stoi(it->second.substr(x + 1));
    c.stride = num("stride");
    c.dilation = num("dilation");
    const auto pad = kv.at("padding");
    if (pad != "same" && pad != "valid") throw std::runtime_error("unknown padding " + pad);
    c.padding = pad == "same" ? nn::Padding::Same : nn::Padding::Valid;
    return c;
  }
  if (kind == "dense") return nn::Dense{num("units")};
  if (kind == "flatten") return nn::Flatten{};
  if (kind == "relu") return nn::Activation{nn::ActivationKind::Relu};
  if (kind == "softmax") return nn::Activation{nn::ActivationKind::Softmax};
  throw std::runtime_error("unknown layer kind: " + kind);
}

inline void write_f64_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline double read_f64_le(const unsigned char* buf) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline std::string expect_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(std::string("model file truncated before ") + what);
  return line;
}

}  // namespace detail

inline void write_model(std::ostream& os, const ModelFile& model) {
  nn::validate(model.spec);
  nn::check_parameters(model.spec, model.params);
  os << "qeclab-model 1\n";
  os << "input " << model.spec.input.channels << " " << model.spec.input.height << " " << model.spec.input.width
     << "\n";
  os << "classes " << model.spec.output_classes << "\n";
  os << "layers " << model.spec.layers.size() << "\n";
  for (const auto& l : model.spec.layers) os << detail::layer_to_string(l) << "\n";
  for (const auto& [k, v] : model.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("metadata keys must be single tokens and values single lines");
    }
    os << "meta " << k << " " << v << "\n";
  }
  os << "weights " << model.params.total() << "\n";
  for (const auto& t : model.params.tensors) {
    for (double v : t.data) detail::write_f64_le(os, v);
  }
  if (!os) throw std::runtime_error("failed writing model");
}

/// Parses the manifest only (no weights).
inline ModelFile read_model_manifest(std::istream& is, std::size_t* weight_count = nullptr) {
  ModelFile m;
  std::string line = detail::expect_line(is, "header");
  if (line != "qeclab-model 1") throw std::runtime_error("not a qeclab model file (bad magic)");
  {
    std::istringstream ls(detail::expect_line(is, "input"));
    std::string tag;
    ls >> tag >> m.spec.input.channels >> m.spec.input.height >> m.spec.input.width;
    if (tag != "input" || !ls) throw std::runtime_error("model file: malformed input line");
  }
  {
    std::istringstream ls(detail::expect_line(is, "classes"));
    std::string tag;
    ls >> tag >> m.spec.output_classes;
    if (tag != "classes" || !ls) throw std::runtime_error("model file: malformed classes line");
  }
  std::size_t n_layers = 0;
  {
    std::istringstream ls(detail::expect_line(is, "layers"));
    std::string tag;
    ls >> tag >> n_layers;
    if (tag != "layers" || !ls || n_layers > 4096) throw std::runtime_error("model file: malformed layers line");
  }
  for (std::size_t i = 0; i < n_layers; ++i) m.spec.layers.push_back(detail::layer_from_string(detail::expect_line(is, "layer")));
  while (true) {
    line = detail::expect_line(is, "weights");
    if (line.rfind("meta ", 0) == 0) {
      const auto rest = line.substr(5);
      const auto sp = rest.find(' ');
      if (sp == std::string::npos) {
        m.meta[rest] = "";
      } else {
        m.meta[rest.substr(0, sp)] = rest.substr(sp + 1);
      }
      continue;
    }
    std::istringstream ls(line);
    std::string tag;
    std::size_t count = 0;
    ls >> tag >> count;
    if (tag != "weights" || !ls) throw std::runtime_error("model file: expected weights line");
    if (weight_count) *weight_count = count;
    break;
  }
  try {
    nn::validate(m.spec);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("model file: invalid architecture: ") + e.what());
  }
  return m;
}

inline ModelFile read_model(std::istream& is) {
  std::size_t count = 0;
  ModelFile m = read_model_manifest(is, &count);
  m.params = nn::zero_parameters(m.spec);
  if (count != m.params.total()) throw std::runtime_error("model file: weight count does not match architecture");
  std::vector<unsigned char> buf(count * 8);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw std::runtime_error("model file: weight blob truncated");
  std::size_t k = 0;
  for (auto& t : m.params.tensors) {
    for (double& v : t.data) v = detail::read_f64_le(buf.data() + 8 * k++);
  }
  return m;
}

inline void save_model(const std::string& path, const ModelFile& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_model(os, model);
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_model(is);
}

}  // namespace qeclab
