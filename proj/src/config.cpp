#include "uma/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "uma/errors.hpp"

namespace uma {

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", "1", "seed for every random draw in the run", ""},
      // network
      {"network.backbone", "conv:16:3:1,pool:2:2,conv:32:3:1,conv:32:3:1",
       "comma-separated layers: conv:<channels>:<kernel>:<stride> | pool:<window>:<stride>; "
       "ReLU follows every conv except the last",
       "conv:96:11:2,pool:3:2,conv:256:5:1,pool:3:2,conv:384:3:1,conv:384:3:1,conv:256:3:1"},
      {"network.exemplar_size", "22", "exemplar patch side in pixels", "127"},
      {"network.instance_size_train", "38", "training instance patch side in pixels", "239"},
      {"network.instance_size_track", "0",
       "tracking search patch side; 0 derives it so the feature side is exemplar side + 16", "255 (22x22 feature)"},
      {"network.tsa_reduction", "4", "channel reduction of the attention bottleneck", "4 (256 -> 64)"},
      {"network.num_identities", "20", "identity classes of the identification head", "439"},
      {"network.identity_hidden", "512", "width of the first identification layer", "512"},
      {"network.response_scale", "0.001", "fixed factor applied to the raw correlation before the bias", ""},
      {"network.roi_side", "6", "ROI-Align output side", "6"},
      // losses
      {"loss.lambda1", "0.1", "weight of the ranking loss", "0.1"},
      {"loss.lambda2", "0.1", "weight of the identification loss", "0.1"},
      {"loss.margin", "0.5", "triplet margin m", ""},
      {"loss.label_radius", "4", "positive-label radius in patch pixels", ""},
      {"loss.ranking", "npair", "ranking loss: npair | triplet", "npair"},
      // training
      {"train.epochs", "30", "training epochs", ""},
      {"train.steps_per_epoch", "200", "mini-batches per epoch", ""},
      {"train.batch_size", "8", "pairs per mini-batch (distinct identities)", "8"},
      {"train.lr_start", "0.01", "learning rate of the first epoch (geometric decay)", ""},
      {"train.lr_end", "0.0001", "learning rate of the last epoch", ""},
      {"train.momentum", "0.9", "momentum coefficient", ""},
      {"train.max_frame_gap", "50", "max frame distance between exemplar and positive instance", ""},
      {"train.jitter", "8", "max translation of the instance crop centre, patch pixels", ""},
      {"train.frame_limit", "0", "use only frames <= this index for training (0 = all)", ""},
      // tracker
      {"tracker.alpha", "0.6", "affinity threshold for occlusion and association", "0.6"},
      {"tracker.beta", "0.5", "historic mean IOU threshold for occlusion", "0.5"},
      {"tracker.gamma", "0.5", "IOU threshold for refinement and candidate detections", "0.5"},
      {"tracker.terminate_after", "30", "frames an occluded target survives", "30"},
      {"tracker.iou_window", "5", "frames in the historic IOU average", ""},
      {"tracker.search_scale", "4", "search region side as a multiple of target size", ""},
      {"tracker.tracklet_samples", "5", "K, tracklet embeddings sampled for association", ""},
      {"tracker.init_window", "3", "frames after a new detection inspected for confirmation", ""},
      {"tracker.init_hits", "2", "re-detections within the window needed to confirm", ""},
      {"tracker.min_confidence", "0", "detections below this confidence are ignored", ""},
      // evaluation
      {"eval.iou_threshold", "0.5", "IOU needed for a ground-truth / hypothesis match", "0.5"},
  };
  return schema;
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool known_key(const std::string& key) {
  const auto& schema = config_schema();
  return std::any_of(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.name == key; });
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& key : config_schema()) values_[key.name] = key.default_value;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig config;
  config.merge_text(text);
  return config;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return from_text(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void RunConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_key(key)) throw ParseError("unknown config key '" + key + "'", line_no);
    values_[key] = value;
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ParseError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ParseError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParseError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& text = get(key);
  std::size_t used = 0;
  double value = 0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ParseError(key + ": expected a number, got '" + text + "'");
  return value;
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string& text = get(key);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(key + ": expected an integer, got '" + text + "'");
  }
  return value;
}

std::uint64_t RunConfig::seed() const {
  const long long s = get_int("seed");
  if (s < 0) throw ParseError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& key : config_schema()) out << key.name << " = " << values_.at(key.name) << '\n';
  return out.str();
}

std::string config_help() {
  std::ostringstream out;
  out << "Config keys (file `key = value`, or --set key=value):\n";
  for (const auto& key : config_schema()) {
    out << "  " << key.name << " = " << key.default_value << "\n      " << key.description;
    if (!key.reference_value.empty()) out << " [full-scale value: " << key.reference_value << "]";
    out << '\n';
  }
  return out.str();
}

}  // namespace uma
