#include "uma/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "uma/errors.hpp"

namespace uma {

namespace {

std::size_t parse_size(const std::string& token, const std::string& layer) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used == token.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ParseError("backbone layer '" + layer + "': '" + token + "' is not a positive integer");
}

std::string conv_name(std::size_t index, const char* what) {
  return "backbone.conv" + std::to_string(index) + "." + what;
}

const char* task_prefix(Task task) { return task == Task::Sot ? "tsa.sot." : "tsa.aff."; }

}  // namespace

std::vector<LayerSpec> parse_backbone(const std::string& text) {
  std::vector<LayerSpec> layers;
  std::stringstream in(text);
  std::string layer;
  while (std::getline(in, layer, ',')) {
    std::vector<std::string> parts;
    std::stringstream fields(layer);
    std::string f;
    while (std::getline(fields, f, ':')) parts.push_back(f);
    LayerSpec spec;
    if (!parts.empty() && parts[0] == "conv" && parts.size() == 4) {
      spec.kind = LayerSpec::Kind::Conv;
      spec.channels = parse_size(parts[1], layer);
      spec.kernel = parse_size(parts[2], layer);
      spec.stride = parse_size(parts[3], layer);
    } else if (!parts.empty() && parts[0] == "pool" && parts.size() == 3) {
      spec.kind = LayerSpec::Kind::Pool;
      spec.kernel = parse_size(parts[1], layer);
      spec.stride = parse_size(parts[2], layer);
    } else {
      throw ParseError("backbone layer '" + layer + "' is neither conv:<c>:<k>:<s> nor pool:<k>:<s>");
    }
    layers.push_back(spec);
  }
  if (layers.empty()) throw ParseError("backbone has no layers");
  return layers;
}

std::string format_backbone(const std::vector<LayerSpec>& layers) {
  std::ostringstream out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out << ',';
    const auto& l = layers[i];
    if (l.kind == LayerSpec::Kind::Conv) {
      out << "conv:" << l.channels << ':' << l.kernel << ':' << l.stride;
    } else {
      out << "pool:" << l.kernel << ':' << l.stride;
    }
  }
  return out.str();
}

NetworkConfig NetworkConfig::toy() {
  NetworkConfig c;
  c.backbone = parse_backbone("conv:16:3:1,pool:2:2,conv:32:3:1,conv:32:3:1");
  return c;
}

NetworkConfig NetworkConfig::full_scale() {
  NetworkConfig c;
  c.backbone = parse_backbone(
      "conv:96:11:2,pool:3:2,conv:256:5:1,pool:3:2,conv:384:3:1,conv:384:3:1,conv:256:3:1");
  c.exemplar_size = 127;
  c.instance_size_train = 239;
  c.num_identities = 439;
  return c;
}

NetworkConfig NetworkConfig::from_run_config(const RunConfig& config) {
  auto positive = [&](const char* key) {
    const long long v = config.get_int(key);
    if (v <= 0) throw ParseError(std::string(key) + " must be positive");
    return static_cast<std::size_t>(v);
  };
  NetworkConfig c;
  c.backbone = parse_backbone(config.get("network.backbone"));
  c.exemplar_size = positive("network.exemplar_size");
  c.instance_size_train = positive("network.instance_size_train");
  const long long track = config.get_int("network.instance_size_track");
  if (track < 0) throw ParseError("network.instance_size_track must be >= 0");
  c.instance_size_track = static_cast<std::size_t>(track);
  c.tsa_reduction = positive("network.tsa_reduction");
  c.num_identities = positive("network.num_identities");
  c.identity_hidden = positive("network.identity_hidden");
  c.response_scale = config.get_double("network.response_scale");
  c.roi_side = positive("network.roi_side");
  c.validate();
  return c;
}

void NetworkConfig::validate() const {
  if (backbone.empty() || backbone.back().kind != LayerSpec::Kind::Conv) {
    throw ContractError("backbone must end with a conv layer");
  }
  if (embed_dim() % tsa_reduction != 0) {
    throw ContractError("tsa_reduction " + std::to_string(tsa_reduction) + " does not divide embed_dim " +
                        std::to_string(embed_dim()));
  }
  if (!(response_scale > 0)) throw ContractError("response_scale must be positive");
  const std::size_t z = feature_side(exemplar_size);
  if (feature_side(instance_size_train) < z) {
    throw ContractError("training instance feature is smaller than the exemplar feature");
  }
  if (feature_side(track_instance_size()) < z) {
    throw ContractError("tracking instance feature is smaller than the exemplar feature");
  }
}

std::size_t NetworkConfig::embed_dim() const {
  for (auto it = backbone.rbegin(); it != backbone.rend(); ++it) {
    if (it->kind == LayerSpec::Kind::Conv) return it->channels;
  }
  throw ContractError("backbone has no conv layer");
}

std::size_t NetworkConfig::feature_side(std::size_t patch_side) const {
  std::size_t side = patch_side;
  for (const auto& l : backbone) {
    if (side < l.kernel) {
      throw DimensionError("patch side " + std::to_string(patch_side) + " too small for backbone " +
                           format_backbone(backbone));
    }
    side = (side - l.kernel) / l.stride + 1;
  }
  return side;
}

std::size_t NetworkConfig::total_stride() const {
  std::size_t jump = 1;
  for (const auto& l : backbone) jump *= l.stride;
  return jump;
}

double NetworkConfig::feature_origin() const {
  double offset = 0.5;
  double jump = 1.0;
  for (const auto& l : backbone) {
    offset += 0.5 * static_cast<double>(l.kernel - 1) * jump;
    jump *= static_cast<double>(l.stride);
  }
  return offset;
}

std::size_t NetworkConfig::track_instance_size() const {
  if (instance_size_track > 0) return instance_size_track;
  const std::size_t wanted = feature_side(exemplar_size) + 16;
  for (std::size_t s = exemplar_size;; ++s) {
    const std::size_t side = feature_side(s);
    if (side == wanted) return s;
    if (side > wanted) throw ContractError("no patch size yields a tracking feature side of " + std::to_string(wanted));
  }
}

std::map<std::string, Shape> param_shapes(const NetworkConfig& config) {
  std::map<std::string, Shape> shapes;
  std::size_t channels = 3, conv_index = 0;
  for (const auto& l : config.backbone) {
    if (l.kind != LayerSpec::Kind::Conv) continue;
    shapes[conv_name(conv_index, "weight")] = {l.kernel, l.kernel, channels, l.channels};
    shapes[conv_name(conv_index, "bias")] = {l.channels};
    channels = l.channels;
    ++conv_index;
  }
  const std::size_t c = config.embed_dim(), r = c / config.tsa_reduction;
  shapes["corr.bias"] = {1};
  for (Task task : {Task::Sot, Task::Aff}) {
    shapes[std::string(task_prefix(task)) + "w1"] = {r, c};
    shapes[std::string(task_prefix(task)) + "w2"] = {c, r};
  }
  shapes["iden.fc1.weight"] = {config.identity_hidden, c};
  shapes["iden.fc1.bias"] = {config.identity_hidden};
  shapes["iden.fc2.weight"] = {config.num_identities, config.identity_hidden};
  shapes["iden.fc2.bias"] = {config.num_identities};
  return shapes;
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NetworkParams params;
  for (const auto& [name, shape] : param_shapes(config)) {
    Tensor t(shape);
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (!is_bias) {
      // Fan-in is every axis but the last for conv kernels, the column count for matrices.
      const std::size_t fan_in = shape.size() == 4 ? shape[0] * shape[1] * shape[2] : shape[1];
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& v : t.data()) v = normal(rng);
    }
    t.set_requires_grad(true);
    params.emplace(name, std::move(t));
  }
  return params;
}

void check_params(const NetworkConfig& config, const NetworkParams& params) {
  const auto expected = param_shapes(config);
  std::vector<std::string> problems;
  for (const auto& [name, shape] : expected) {
    auto it = params.find(name);
    if (it == params.end()) {
      problems.push_back(name + ": missing (expected " + shape_string(shape) + ")");
    } else if (it->second.shape() != shape) {
      problems.push_back(name + ": shape " + shape_string(it->second.shape()) + ", expected " + shape_string(shape));
    }
  }
  for (const auto& [name, tensor] : params) {
    if (!expected.contains(name)) problems.push_back(name + ": unexpected tensor " + shape_string(tensor.shape()));
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the network configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ContractError(msg);
  }
}

Tensor backbone_forward(const Tensor& patch, const NetworkConfig& config, const NetworkParams& params) {
  if (patch.rank() != 3 || patch.dim(2) != 3 || patch.dim(0) != patch.dim(1)) {
    throw DimensionError("backbone_forward: expected an S x S x 3 patch, got " + shape_string(patch.shape()));
  }
  const std::size_t side = patch.dim(0);
  if (side != config.exemplar_size && side != config.instance_size_train && side != config.track_instance_size()) {
    throw DimensionError("backbone_forward: patch side " + std::to_string(side) +
                         " is not a configured patch size");
  }
  std::size_t last_conv = 0;
  for (std::size_t i = 0; i < config.backbone.size(); ++i) {
    if (config.backbone[i].kind == LayerSpec::Kind::Conv) last_conv = i;
  }
  Tensor x = patch;
  std::size_t conv_index = 0;
  for (std::size_t i = 0; i < config.backbone.size(); ++i) {
    const auto& l = config.backbone[i];
    if (l.kind == LayerSpec::Kind::Pool) {
      x = max_pool2d(x, l.kernel, l.stride);
      continue;
    }
    x = conv2d(x, params.at(conv_name(conv_index, "weight")), params.at(conv_name(conv_index, "bias")), l.stride);
    ++conv_index;
    if (i != last_conv) x = relu(x);
  }
  return x;
}

ResponseMap cross_correlation(const Tensor& f_x, const Tensor& f_z, const Tensor& bias, double stride) {
  if (f_x.rank() != 3 || f_z.rank() != 3 || f_z.dim(0) != f_z.dim(1)) {
    throw DimensionError("cross_correlation: instance " + shape_string(f_x.shape()) + ", exemplar " +
                         shape_string(f_z.shape()));
  }
  if (f_x.dim(2) != f_z.dim(2)) {
    throw DimensionError("cross_correlation: channel mismatch, instance " + shape_string(f_x.shape()) +
                         " vs exemplar " + shape_string(f_z.shape()));
  }
  if (f_z.dim(0) > f_x.dim(0) || f_z.dim(0) > f_x.dim(1)) {
    throw DimensionError("cross_correlation: exemplar " + shape_string(f_z.shape()) + " larger than instance " +
                         shape_string(f_x.shape()));
  }
  if (bias.size() != 1) throw DimensionError("cross_correlation: bias must be a scalar");
  const std::size_t k = f_z.dim(0), c = f_z.dim(2);
  Tensor kernel = reshape(f_z, {k, k, c, 1});
  Tensor v = conv2d(f_x, kernel, reshape(bias, {1}), 1);
  const std::size_t h = v.dim(0), w = v.dim(1);
  return ResponseMap{reshape(v, {h, w}), stride};
}

ResponseMap sot_response(const Tensor& f_x_sot, const Tensor& f_z_sot, const NetworkConfig& config,
                         const NetworkParams& params) {
  return cross_correlation(f_x_sot, scale(f_z_sot, config.response_scale), params.at("corr.bias"),
                           static_cast<double>(config.total_stride()));
}

Tensor tsa_gates(const Tensor& f, Task task, const NetworkParams& params) {
  const std::string prefix = task_prefix(task);
  Tensor s = global_avg_pool(f);
  return sigmoid(matvec(params.at(prefix + "w2"), relu(matvec(params.at(prefix + "w1"), s))));
}

Tensor tsa_attention(const Tensor& f, Task task, const NetworkParams& params) {
  return channel_scale(f, tsa_gates(f, task, params));
}

Tensor embed(const Tensor& f_aligned) { return l2_normalize(global_avg_pool(f_aligned)); }

Tensor identity_logits(const Tensor& w, const NetworkParams& params) {
  Tensor hidden = relu(fully_connected(w, params.at("iden.fc1.weight"), params.at("iden.fc1.bias")));
  return fully_connected(hidden, params.at("iden.fc2.weight"), params.at("iden.fc2.bias"));
}

double affinity(const Tensor& w_a, const Tensor& w_b) {
  if (w_a.size() != w_b.size()) {
    throw DimensionError("affinity: " + shape_string(w_a.shape()) + " vs " + shape_string(w_b.shape()));
  }
  double c = 0.0;
  for (std::size_t i = 0; i < w_a.size(); ++i) c += w_a[i] * w_b[i];
  return c;
}

RoiBox patch_roi(const NetworkConfig& config, double cx, double cy, double w, double h) {
  RoiBox box;
  box.x0 = config.patch_to_feature(cx - 0.5 * w);
  box.x1 = config.patch_to_feature(cx + 0.5 * w);
  box.y0 = config.patch_to_feature(cy - 0.5 * h);
  box.y1 = config.patch_to_feature(cy + 0.5 * h);
  return box;
}

RoiBox centered_roi(const NetworkConfig& config, std::size_t patch_side, double target_w, double target_h) {
  const double centre = 0.5 * static_cast<double>(patch_side);
  return patch_roi(config, centre, centre, target_w, target_h);
}

Tensor roi_embedding(const Tensor& f_aff, const RoiBox& roi, const NetworkConfig& config) {
  return embed(roi_align(f_aff, roi, config.roi_side));
}

}  // namespace uma
