#include "train/config.hpp"

#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace stnet {

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) usage_error("lr_at: epoch must be >= 0");
  int passed = 0;
  for (int m : cfg.effective_milestones())
    if (m <= epoch) ++passed;
  return cfg.lr * std::pow(cfg.lr_gamma, passed);
}

namespace {

[[noreturn]] void bad_key(const std::string& path) {
  usage_error("unknown config key '" + path + "'");
}

[[noreturn]] void bad_type(const std::string& path, const char* expected) {
  usage_error("config key '" + path + "' must be " + expected);
}

double get_num(const json& v, const std::string& path) {
  if (!v.is_number()) bad_type(path, "a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad_type(path, "an integer");
  return v.get<int>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) bad_type(path, "a boolean");
  return v.get<bool>();
}

std::string get_str(const json& v, const std::string& path) {
  if (!v.is_string()) bad_type(path, "a string");
  return v.get<std::string>();
}

template <size_t N>
std::array<int, N> get_int_array(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != N)
    bad_type(path, ("an array of " + std::to_string(N) + " integers").c_str());
  std::array<int, N> out{};
  for (size_t i = 0; i < N; ++i) out[i] = get_int(v[i], path);
  return out;
}

void apply_section(RunConfig& cfg, const std::string& section, const std::string& key,
                   const json& v) {
  const std::string path = section + "." + key;
  if (section == "data") {
    if (key == "root") cfg.data_root = get_str(v, path);
    else bad_key(path);
  } else if (section == "encoder") {
    if (key == "stage_channels") cfg.encoder.stage_channels = get_int_array<4>(v, path);
    else if (key == "stage_blocks") cfg.encoder.stage_blocks = get_int_array<4>(v, path);
    else if (key == "width_multiplier") cfg.encoder.width_multiplier = get_num(v, path);
    else if (key == "pretrained") cfg.encoder.pretrained = get_bool(v, path);
    else if (key == "pretrained_path") cfg.encoder.pretrained_path = get_str(v, path);
    else bad_key(path);
  } else if (section == "decoder") {
    if (key == "width") cfg.decoder_width = get_int(v, path);
    else if (key == "cam_reduction") cfg.cam_reduction = get_int(v, path);
    else bad_key(path);
  } else if (section == "sff") {
    if (key == "dim") cfg.sff.dim = get_int(v, path);
    else if (key == "key_downsample") cfg.sff.key_downsample = get_int(v, path);
    else if (key == "token_limit") cfg.sff.token_limit = get_int(v, path);
    else bad_key(path);
  } else if (section == "focal") {
    if (key == "alpha") cfg.focal.alpha = get_num(v, path);
    else if (key == "gamma") cfg.focal.gamma = get_num(v, path);
    else bad_key(path);
  } else if (section == "dice") {
    if (key == "smooth") cfg.dice.smooth = get_num(v, path);
    else bad_key(path);
  } else if (section == "train") {
    if (key == "lr") cfg.train.lr = get_num(v, path);
    else if (key == "weight_decay") cfg.train.weight_decay = get_num(v, path);
    else if (key == "batch_size") cfg.train.batch_size = get_int(v, path);
    else if (key == "epochs") cfg.train.epochs = get_int(v, path);
    else if (key == "lr_gamma") cfg.train.lr_gamma = get_num(v, path);
    else if (key == "seed") cfg.train.seed = static_cast<uint64_t>(get_int(v, path));
    else if (key == "variant") cfg.train.variant = variant_from_string(get_str(v, path));
    else if (key == "early_stop_patience") cfg.train.early_stop_patience = get_int(v, path);
    else if (key == "lr_milestones") {
      if (!v.is_array()) bad_type(path, "an array of integers");
      cfg.train.lr_milestones.clear();
      for (const auto& e : v) cfg.train.lr_milestones.push_back(get_int(e, path));
    } else bad_key(path);
  } else {
    bad_key(path);
  }
}

void apply_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) usage_error("config root must be a JSON object");
  static const char* sections[] = {"data", "encoder", "decoder", "sff", "focal", "dice", "train"};
  for (const auto& [section, body] : j.items()) {
    bool known = false;
    for (const char* s : sections) known = known || section == s;
    if (!known || !body.is_object()) bad_key(section);
    for (const auto& [key, v] : body.items()) apply_section(cfg, section, key, v);
  }
}

}  // namespace

void RunConfig::validate() const {
  encoder.validate();
  sff.validate();
  focal.validate();
  dice.validate();
  train.validate();
  model_config().validate();
}

std::string RunConfig::to_json_text() const {
  json j;
  j["data"]["root"] = data_root;
  j["encoder"]["stage_channels"] = encoder.stage_channels;
  j["encoder"]["stage_blocks"] = encoder.stage_blocks;
  j["encoder"]["width_multiplier"] = encoder.width_multiplier;
  j["encoder"]["pretrained"] = encoder.pretrained;
  j["encoder"]["pretrained_path"] = encoder.pretrained_path;
  j["decoder"]["width"] = decoder_width;
  j["decoder"]["cam_reduction"] = cam_reduction;
  j["sff"]["dim"] = sff.dim;
  j["sff"]["key_downsample"] = sff.key_downsample;
  j["sff"]["token_limit"] = sff.token_limit;
  j["focal"]["alpha"] = focal.alpha;
  j["focal"]["gamma"] = focal.gamma;
  j["dice"]["smooth"] = dice.smooth;
  j["train"]["lr"] = train.lr;
  j["train"]["weight_decay"] = train.weight_decay;
  j["train"]["batch_size"] = train.batch_size;
  j["train"]["epochs"] = train.epochs;
  j["train"]["lr_milestones"] = train.lr_milestones;
  j["train"]["lr_gamma"] = train.lr_gamma;
  j["train"]["seed"] = train.seed;
  j["train"]["variant"] = to_string(train.variant);
  j["train"]["early_stop_patience"] = train.early_stop_patience;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    usage_error(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write config file " + path);
  out << to_json_text();
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  auto dot = dotted_key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= dotted_key.size())
    usage_error("config override key must look like section.key, got '" + dotted_key + "'");
  std::string section = dotted_key.substr(0, dot);
  std::string key = dotted_key.substr(dot + 1);
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = value;  // bare strings (e.g. variant names, paths)
  }
  apply_section(*this, section, key, v);
}

}  // namespace stnet
