#include "blindsnf/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "blindsnf/degradation.hpp"
#include "blindsnf/io.hpp"

namespace blindsnf {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ParameterError("config key '" + key + "': bad value '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ParameterError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

Field bool_field(bool TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(std::string TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
}

// Ordered so that to_text() is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"T", number_field(&TrainConfig::T)},
      {"beta_start", number_field(&TrainConfig::beta_start)},
      {"beta_end", number_field(&TrainConfig::beta_end)},
      {"lr_patch", number_field(&TrainConfig::lr_patch)},
      {"scale_r", number_field(&TrainConfig::scale_r)},
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"degradation_mode", string_field(&TrainConfig::degradation_mode)},
      {"downsampler", string_field(&TrainConfig::downsampler)},
      {"steps", number_field(&TrainConfig::steps)},
      {"learning_rate", number_field(&TrainConfig::learning_rate)},
      {"adam_beta1", number_field(&TrainConfig::adam_beta1)},
      {"adam_beta2", number_field(&TrainConfig::adam_beta2)},
      {"adam_eps", number_field(&TrainConfig::adam_eps)},
      {"seed", number_field(&TrainConfig::seed)},
      {"queue_capacity", number_field(&TrainConfig::queue_capacity)},
      {"temperature", number_field(&TrainConfig::temperature)},
      {"normalize_projection", bool_field(&TrainConfig::normalize_projection)},
      {"include_positive", bool_field(&TrainConfig::include_positive)},
      {"proj_dim", number_field(&TrainConfig::proj_dim)},
      {"use_snf_loss", bool_field(&TrainConfig::use_snf_loss)},
      {"use_encoder_loss", bool_field(&TrainConfig::use_encoder_loss)},
      {"use_degrad_loss", bool_field(&TrainConfig::use_degrad_loss)},
      {"base_channels", number_field(&TrainConfig::base_channels)},
      {"unet_depth", number_field(&TrainConfig::unet_depth)},
      {"channel_multipliers", string_field(&TrainConfig::channel_multipliers)},
      {"groupnorm_groups", number_field(&TrainConfig::groupnorm_groups)},
      {"daconv_hidden", number_field(&TrainConfig::daconv_hidden)},
      {"use_degradation_conditioning", bool_field(&TrainConfig::use_degradation_conditioning)},
      {"rrdb_blocks", number_field(&TrainConfig::rrdb_blocks)},
      {"rrdb_channels", number_field(&TrainConfig::rrdb_channels)},
      {"rrdb_growth", number_field(&TrainConfig::rrdb_growth)},
      {"checkpoint_every", number_field(&TrainConfig::checkpoint_every)},
      {"gamma", number_field(&TrainConfig::gamma)},
      {"eta", number_field(&TrainConfig::eta)},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [name, f] : fields())
    if (name == key) return f;
  throw ParameterError("unknown config key '" + key + "'");
}

std::vector<Index> parse_multipliers(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<Index>("channel_multipliers", trim(item)));
  return out;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, trim(value)); }

std::string TrainConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

void TrainConfig::validate() const {
  if (T < 1) throw ParameterError("T must be at least 1");
  if (!(beta_start > 0 && beta_start < 1 && beta_end > 0 && beta_end < 1)) {
    throw ParameterError("beta endpoints must lie in (0, 1)");
  }
  if (lr_patch < 1 || scale_r < 1 || batch_size < 1 || steps < 0) throw ParameterError("sizes must be positive");
  if (!(learning_rate > 0) || !(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) ||
      !(adam_eps > 0)) {
    throw ParameterError("invalid optimizer hyperparameters");
  }
  if (queue_capacity < 1 || !(temperature > 0) || proj_dim < 1) throw ParameterError("invalid contrastive settings");
  if (gamma < 1 || T % gamma != 0) throw ParameterError("gamma must divide T");
  if (!(eta >= 0)) throw ParameterError("eta must be non-negative");
  if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be non-negative");
  parse_spec_mode(degradation_mode);
  parse_downsampler(downsampler);
  model_config().unet.validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.scale = scale_r;
  m.rrdb.num_blocks = rrdb_blocks;
  m.rrdb.channels = rrdb_channels;
  m.rrdb.growth_channels = rrdb_growth;
  m.unet.base_channels = base_channels;
  m.unet.depth = unet_depth;
  m.unet.multipliers = parse_multipliers(channel_multipliers);
  m.unet.groupnorm_groups = groupnorm_groups;
  m.unet.cond_channels = rrdb_channels;
  m.unet.daconv_hidden = daconv_hidden;
  m.unet.use_degradation = use_degradation_conditioning;
  m.proj_dim = proj_dim;
  m.normalize_projection = normalize_projection;
  return m;
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig config;
  std::istringstream lines(text);
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return config;
}

TrainConfig TrainConfig::load(const std::string& path) { return parse(read_text(path)); }

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

}  // namespace blindsnf
