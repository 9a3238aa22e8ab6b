#include "silnet/config_io.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "silnet/dataset_io.hpp"

namespace silnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw usage_error(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

long long to_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw usage_error(key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw usage_error(key + ": expected true/false, got '" + value + "'");
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"lambda_P", [](TrainConfig& c, auto& k, auto& v) { c.lambda_P = to_double(k, v); }},
      {"lambda_dp", [](TrainConfig& c, auto& k, auto& v) { c.lambda_dp = to_double(k, v); }},
      {"lambda_W", [](TrainConfig& c, auto& k, auto& v) { c.lambda_W = to_double(k, v); }},
      {"learning_rate", [](TrainConfig& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"lr_decay", [](TrainConfig& c, auto& k, auto& v) { c.lr_decay = to_double(k, v); }},
      {"adam_weight_decay", [](TrainConfig& c, auto& k, auto& v) { c.adam_weight_decay = to_double(k, v); }},
      {"epochs", [](TrainConfig& c, auto& k, auto& v) { c.epochs = static_cast<int>(to_integer(k, v)); }},
      {"batch_size", [](TrainConfig& c, auto& k, auto& v) { c.batch_size = static_cast<int>(to_integer(k, v)); }},
      {"max_steps", [](TrainConfig& c, auto& k, auto& v) { c.max_steps = static_cast<int>(to_integer(k, v)); }},
      {"view_count", [](TrainConfig& c, auto& k, auto& v) { c.view_count = static_cast<int>(to_integer(k, v)); }},
      {"dp_levels", [](TrainConfig& c, auto&, auto& v) { c.dp_levels = parse_dp_levels(v); }},
      {"include_fake_depth_in_guidance",
       [](TrainConfig& c, auto& k, auto& v) { c.include_fake_depth_in_guidance = to_bool(k, v); }},
      {"gt_depth_supervision", [](TrainConfig& c, auto& k, auto& v) { c.gt_depth_supervision = to_bool(k, v); }},
      {"stop_gradient_on_guidance",
       [](TrainConfig& c, auto& k, auto& v) { c.stop_gradient_on_guidance = to_bool(k, v); }},
      {"width_scale", [](TrainConfig& c, auto& k, auto& v) { c.width_scale = to_double(k, v); }},
      {"seed", [](TrainConfig& c, auto& k, auto& v) { c.seed = to_integer(k, v); }},
  };
  return table;
}

void apply(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw usage_error("unknown config key '" + key + "'");
  it->second(config, key, value);
}

// Iterates "key = value" lines, skipping blanks and comments.
template <typename F>
void for_each_entry(const std::string& text, const std::string& origin, F&& f) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw usage_error(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    f(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

std::string format_config(const TrainConfig& c) {
  using io::format_double;
  std::ostringstream out;
  out << "lambda_P = " << format_double(c.lambda_P) << "\n"
      << "lambda_dp = " << format_double(c.lambda_dp) << "\n"
      << "lambda_W = " << format_double(c.lambda_W) << "\n"
      << "learning_rate = " << format_double(c.learning_rate) << "\n"
      << "lr_decay = " << format_double(c.lr_decay) << "\n"
      << "adam_weight_decay = " << format_double(c.adam_weight_decay) << "\n"
      << "epochs = " << c.epochs << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "max_steps = " << c.max_steps << "\n"
      << "view_count = " << c.view_count << "\n"
      << "dp_levels = " << to_string(c.dp_levels) << "\n"
      << "include_fake_depth_in_guidance = " << (c.include_fake_depth_in_guidance ? "true" : "false") << "\n"
      << "gt_depth_supervision = " << (c.gt_depth_supervision ? "true" : "false") << "\n"
      << "stop_gradient_on_guidance = " << (c.stop_gradient_on_guidance ? "true" : "false") << "\n"
      << "width_scale = " << format_double(c.width_scale) << "\n"
      << "seed = " << c.seed << "\n";
  return out.str();
}

TrainConfig parse_config(const std::string& text, const std::string& origin) {
  TrainConfig config;
  for_each_entry(text, origin, [&](const std::string& k, const std::string& v) { apply(config, k, v); });
  if (auto bad = config.violations(); !bad.empty()) throw usage_error(origin + ": " + bad.front());
  return config;
}

void apply_override(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw usage_error("override '" + assignment + "' is not key=value");
  apply(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<double> numbers(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  std::vector<double> out;
  std::string token;
  while (in >> token) out.push_back(to_double(key, token));
  return out;
}

template <std::size_t N>
void assign_list(std::array<double, N>& dst, const std::string& key, const std::string& value) {
  const auto v = numbers(key, value);
  if (v.size() != N) {
    throw usage_error(key + ": expected " + std::to_string(N) + " values, got " + std::to_string(v.size()));
  }
  std::copy(v.begin(), v.end(), dst.begin());
}

std::string join(const double* values, std::size_t n, double scale = 1.0) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + io::format_double(values[i] * scale);
  return out;
}

}  // namespace

std::string format_hand_params(const HandModelParams& p) {
  std::array<double, kNumArticulations> lo{}, hi{};
  for (int i = 0; i < kNumArticulations; ++i) {
    lo[i] = p.joint_angle_ranges[i].min;
    hi[i] = p.joint_angle_ranges[i].max;
  }
  std::ostringstream out;
  out << "# bones: wrist->MCP (T I M R P), then MCP->PIP->DIP->TIP per finger\n"
      << "bone_lengths = " << join(p.bone_lengths.data(), kNumBones) << "\n"
      << "finger_radii = " << join(p.finger_radii.data(), kNumFingers) << "\n"
      << "palm_radius = " << io::format_double(p.palm_radius) << "\n"
      << "# per finger: abduction, MCP, PIP, DIP flexion (degrees)\n"
      << "angle_min_deg = " << join(lo.data(), kNumArticulations, 1.0 / kDeg) << "\n"
      << "angle_max_deg = " << join(hi.data(), kNumArticulations, 1.0 / kDeg) << "\n"
      << "max_tilt_deg = " << io::format_double(p.max_tilt_rad / kDeg) << "\n"
      << "max_roll_deg = " << io::format_double(p.max_roll_rad / kDeg) << "\n"
      << "distance_min_mm = " << io::format_double(p.distance_mm.min) << "\n"
      << "distance_max_mm = " << io::format_double(p.distance_mm.max) << "\n"
      << "lateral_range_mm = " << io::format_double(p.lateral_range_mm) << "\n";
  return out.str();
}

HandModelParams parse_hand_params(const std::string& text, const std::string& origin) {
  HandModelParams p = HandModelParams::defaults();
  for_each_entry(text, origin, [&](const std::string& k, const std::string& v) {
    if (k == "bone_lengths") {
      assign_list(p.bone_lengths, k, v);
    } else if (k == "finger_radii") {
      assign_list(p.finger_radii, k, v);
    } else if (k == "palm_radius") {
      p.palm_radius = to_double(k, v);
    } else if (k == "angle_min_deg" || k == "angle_max_deg") {
      std::array<double, kNumArticulations> deg{};
      assign_list(deg, k, v);
      for (int i = 0; i < kNumArticulations; ++i) {
        (k == "angle_min_deg" ? p.joint_angle_ranges[i].min : p.joint_angle_ranges[i].max) = deg[i] * kDeg;
      }
    } else if (k == "max_tilt_deg") {
      p.max_tilt_rad = to_double(k, v) * kDeg;
    } else if (k == "max_roll_deg") {
      p.max_roll_rad = to_double(k, v) * kDeg;
    } else if (k == "distance_min_mm") {
      p.distance_mm.min = to_double(k, v);
    } else if (k == "distance_max_mm") {
      p.distance_mm.max = to_double(k, v);
    } else if (k == "lateral_range_mm") {
      p.lateral_range_mm = to_double(k, v);
    } else {
      throw usage_error(origin + ": unknown hand parameter '" + k + "'");
    }
  });
  if (auto bad = p.violations(); !bad.empty()) throw usage_error(origin + ": " + bad.front());
  return p;
}

}  // namespace silnet
