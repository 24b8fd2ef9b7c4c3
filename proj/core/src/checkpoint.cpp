#include "masksparsity/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace masksparsity {

static_assert(std::endian::native == std::endian::little,
              "container blobs are written as native little-endian");

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'M', 'S', 'P', 'C', 'K', 'P', 'T', '\n'};
constexpr int kFormatVersion = 1;

struct BlobOut {
  std::string name;
  std::string dtype;
  std::vector<int64_t> shape;
  const void* data;
  size_t byte_length;
};

void write_container(const std::filesystem::path& path, json manifest,
                     const std::vector<BlobOut>& blobs) {
  json tensors = json::array();
  uint64_t offset = 0;
  for (const auto& b : blobs) {
    json t;
    t["name"] = b.name;
    t["shape"] = b.shape;
    t["dtype"] = b.dtype;
    t["byte_offset"] = offset;
    t["byte_length"] = b.byte_length;
    t["sha256"] = sha256_hex(b.data, b.byte_length);
    tensors.push_back(std::move(t));
    offset += b.byte_length;
  }
  manifest["tensors"] = std::move(tensors);

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : blobs) {
    out.write(static_cast<const char*>(b.data), static_cast<std::streamsize>(b.byte_length));
  }
  if (!out) throw IoError("checkpoint: failed writing " + path.string());
}

struct Container {
  json manifest;
  std::vector<char> data;  // blob section
};

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  char magic[8];
  uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: " + path.string() + " is not a container file");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint: truncated manifest in " + path.string());

  Container c;
  try {
    c.manifest = json::parse(text);
  } catch (const std::exception& e) {
    throw IoError("checkpoint: bad manifest in " + path.string() + ": " + e.what());
  }
  if (c.manifest.value("format_version", -1) != kFormatVersion) {
    throw IoError("checkpoint: unsupported format_version in " + path.string());
  }
  in.seekg(0, std::ios::end);
  const auto end = static_cast<uint64_t>(in.tellg());
  const uint64_t data_start = sizeof(kMagic) + sizeof(len) + len;
  c.data.resize(end - data_start);
  in.seekg(static_cast<std::streamoff>(data_start));
  in.read(c.data.data(), static_cast<std::streamsize>(c.data.size()));
  if (!in) throw IoError("checkpoint: truncated data section in " + path.string());
  return c;
}

/// Validates offsets and checksum, returns a pointer into the data section.
const char* blob_at(const Container& c, const json& entry, const std::filesystem::path& path,
                    size_t expect_bytes) {
  const uint64_t off = entry.at("byte_offset").get<uint64_t>();
  const uint64_t len = entry.at("byte_length").get<uint64_t>();
  if (len != expect_bytes || off + len > c.data.size()) {
    throw IoError("checkpoint: tensor '" + entry.at("name").get<std::string>() + "' in " +
                  path.string() + " has inconsistent extent");
  }
  const char* p = c.data.data() + off;
  if (sha256_hex(p, len) != entry.at("sha256").get<std::string>()) {
    throw IoError("checkpoint: checksum mismatch for tensor '" +
                  entry.at("name").get<std::string>() + "' in " + path.string());
  }
  return p;
}

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  j["name"] = l.name;
  j["inputs"] = l.inputs;
  switch (l.kind) {
    case LayerKind::conv:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"] = l.pad;
      break;
    case LayerKind::linear:
      j["in_features"] = l.in_features;
      j["out_features"] = l.out_features;
      break;
    default: break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
  l.name = j.at("name").get<std::string>();
  l.inputs = j.at("inputs").get<std::vector<int>>();
  if (l.kind == LayerKind::conv) {
    l.in_channels = j.at("in_channels").get<int>();
    l.out_channels = j.at("out_channels").get<int>();
    l.kernel = j.at("kernel").get<int>();
    l.stride = j.at("stride").get<int>();
    l.pad = j.at("pad").get<int>();
  } else if (l.kind == LayerKind::linear) {
    l.in_features = j.at("in_features").get<int>();
    l.out_features = j.at("out_features").get<int>();
  }
  return l;
}

void add_f32(std::vector<BlobOut>& blobs, const std::string& name, const Tensor& t) {
  blobs.push_back({name, "f32", t.shape(), t.data(), sizeof(float) * static_cast<size_t>(t.numel())});
}

Tensor read_f32(const Container& c, const json& entry, const std::filesystem::path& path) {
  if (entry.at("dtype") != "f32") {
    throw IoError("checkpoint: tensor '" + entry.at("name").get<std::string>() +
                  "' is not f32 in " + path.string());
  }
  const auto shape = entry.at("shape").get<std::vector<int64_t>>();
  const int64_t n = shape_numel(shape);
  const char* p = blob_at(c, entry, path, sizeof(float) * static_cast<size_t>(n));
  std::vector<float> values(static_cast<size_t>(n));
  std::memcpy(values.data(), p, sizeof(float) * static_cast<size_t>(n));
  return Tensor(shape, std::move(values));
}

}  // namespace

std::string sha256_hex(const void* data, size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int mdlen = 0;
  EVP_Digest(data, len, md, &mdlen, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out(2 * mdlen, '0');
  for (unsigned i = 0; i < mdlen; ++i) {
    out[2 * i] = hex[md[i] >> 4];
    out[2 * i + 1] = hex[md[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(const std::string& data) { return sha256_hex(data.data(), data.size()); }

void save_checkpoint(const ModelGraph& graph, const std::filesystem::path& path) {
  validate_graph(graph);
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = "model";
  json model;
  model["input_channels"] = graph.input_channels;
  json layers = json::array();
  for (const auto& l : graph.layers) layers.push_back(layer_to_json(l));
  model["layers"] = std::move(layers);
  model["coupling_groups"] = graph.coupling_groups;
  manifest["model"] = std::move(model);

  std::vector<BlobOut> blobs;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& l = graph.layers[i];
    switch (l.kind) {
      case LayerKind::conv: add_f32(blobs, l.name + ".weight", graph.weights[i]); break;
      case LayerKind::linear:
        add_f32(blobs, l.name + ".weight", graph.weights[i]);
        add_f32(blobs, l.name + ".bias", graph.biases[i]);
        break;
      case LayerKind::bn: {
        const auto& s = graph.bn_states[i];
        add_f32(blobs, l.name + ".gamma", s.gamma);
        add_f32(blobs, l.name + ".beta", s.beta);
        add_f32(blobs, l.name + ".running_mean", s.running_mean);
        add_f32(blobs, l.name + ".running_var", s.running_var);
        break;
      }
      default: break;
    }
  }
  write_container(path, std::move(manifest), blobs);
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.manifest.value("kind", "") != "model") {
    throw IoError("checkpoint: " + path.string() + " does not hold a model");
  }
  ModelGraph graph;
  const json& model = c.manifest.at("model");
  graph.input_channels = model.at("input_channels").get<int>();
  for (const auto& lj : model.at("layers")) graph.layers.push_back(layer_from_json(lj));
  graph.coupling_groups = model.at("coupling_groups").get<std::vector<std::vector<int>>>();
  graph.weights.resize(graph.layers.size());
  graph.biases.resize(graph.layers.size());
  graph.bn_states.resize(graph.layers.size());

  std::map<std::string, const json*> by_name;
  for (const auto& t : c.manifest.at("tensors")) {
    by_name[t.at("name").get<std::string>()] = &t;
  }
  auto fetch = [&](const std::string& name) -> Tensor {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw IoError("checkpoint: missing tensor '" + name + "' in " + path.string());
    }
    return read_f32(c, *it->second, path);
  };

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& l = graph.layers[i];
    switch (l.kind) {
      case LayerKind::conv: graph.weights[i] = fetch(l.name + ".weight"); break;
      case LayerKind::linear:
        graph.weights[i] = fetch(l.name + ".weight");
        graph.biases[i] = fetch(l.name + ".bias");
        break;
      case LayerKind::bn: {
        auto& s = graph.bn_states[i];
        s.gamma = fetch(l.name + ".gamma");
        s.beta = fetch(l.name + ".beta");
        s.running_mean = fetch(l.name + ".running_mean");
        s.running_var = fetch(l.name + ".running_var");
        break;
      }
      default: break;
    }
  }
  validate_graph(graph);
  return graph;
}

std::string model_state_digest(const ModelGraph& graph) {
  std::string acc;
  auto eat = [&acc](const Tensor& t) {
    if (t.empty()) return;
    acc += sha256_hex(t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
  };
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    eat(graph.weights[i]);
    eat(graph.biases[i]);
    const auto& s = graph.bn_states[i];
    eat(s.gamma);
    eat(s.beta);
    eat(s.running_mean);
    eat(s.running_var);
  }
  return sha256_hex(acc);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = "dataset";
  manifest["num_classes"] = dataset.num_classes;

  std::vector<int32_t> labels(dataset.labels.begin(), dataset.labels.end());
  Tensor mean({static_cast<int64_t>(dataset.mean.size())}, dataset.mean);
  Tensor stddev({static_cast<int64_t>(dataset.stddev.size())}, dataset.stddev);

  std::vector<BlobOut> blobs;
  add_f32(blobs, "images", dataset.images);
  blobs.push_back({"labels",
                   "i32",
                   {static_cast<int64_t>(labels.size())},
                   labels.data(),
                   sizeof(int32_t) * labels.size()});
  add_f32(blobs, "mean", mean);
  add_f32(blobs, "stddev", stddev);
  write_container(path, std::move(manifest), blobs);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.manifest.value("kind", "") != "dataset") {
    throw IoError("checkpoint: " + path.string() + " does not hold a dataset");
  }
  Dataset d;
  d.num_classes = c.manifest.at("num_classes").get<int>();
  for (const auto& t : c.manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    if (name == "images") {
      d.images = read_f32(c, t, path);
    } else if (name == "labels") {
      const auto shape = t.at("shape").get<std::vector<int64_t>>();
      const int64_t n = shape_numel(shape);
      const char* p = blob_at(c, t, path, sizeof(int32_t) * static_cast<size_t>(n));
      std::vector<int32_t> raw(static_cast<size_t>(n));
      std::memcpy(raw.data(), p, sizeof(int32_t) * static_cast<size_t>(n));
      d.labels.assign(raw.begin(), raw.end());
    } else if (name == "mean") {
      d.mean = read_f32(c, t, path).values();
    } else if (name == "stddev") {
      d.stddev = read_f32(c, t, path).values();
    }
  }
  if (d.images.empty() || d.labels.size() != static_cast<size_t>(d.images.dim(0))) {
    throw IoError("checkpoint: dataset in " + path.string() + " is incomplete");
  }
  return d;
}

std::string dataset_digest(const Dataset& dataset) {
  std::string acc = sha256_hex(dataset.images.data(),
                               sizeof(float) * static_cast<size_t>(dataset.images.numel()));
  acc += sha256_hex(dataset.labels.data(), sizeof(int) * dataset.labels.size());
  acc += std::to_string(dataset.num_classes);
  return sha256_hex(acc);
}

}  // namespace masksparsity
