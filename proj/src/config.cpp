#include "dsac/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dsac {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ValueError("expected a number, got '" + v + "'");
  return out;
}

Index to_index(const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ValueError("expected an integer, got '" + v + "'");
  return static_cast<Index>(out);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ValueError("expected an unsigned integer, got '" + v + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValueError("empty list element in '" + v + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ValueError("expected a non-empty list");
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F convert) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(convert(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(Index v) { return std::to_string(v); }

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DSAC_NUM_FIELD(KEY, MEMBER, CONVERT)                                   \
  Field {                                                                      \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = CONVERT(v); },    \
        [](const RunConfig& c) { return fmt(c.MEMBER); }                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"env", [](RunConfig& c, const std::string& v) { c.env.name = v; },
       [](const RunConfig& c) { return c.env.name; }},
      DSAC_NUM_FIELD("env.size", env.grid_size, to_index),
      DSAC_NUM_FIELD("env.render_scale", env.render_scale, to_index),
      DSAC_NUM_FIELD("env.length", env.chain_length, to_index),
      DSAC_NUM_FIELD("env.noise_dims", env.noise_dims, to_index),
      DSAC_NUM_FIELD("wrap.sticky_p", env.sticky_p, to_double),
      DSAC_NUM_FIELD("wrap.repeat", env.repeat, to_index),
      DSAC_NUM_FIELD("wrap.stack", env.stack, to_index),
      DSAC_NUM_FIELD("gamma", sac.gamma, to_double),
      DSAC_NUM_FIELD("tau", sac.tau, to_double),
      DSAC_NUM_FIELD("target_update_interval", sac.target_update_interval, to_index),
      DSAC_NUM_FIELD("gradient_steps", sac.gradient_steps, to_index),
      DSAC_NUM_FIELD("buffer_capacity", sac.buffer_capacity, to_index),
      DSAC_NUM_FIELD("initial_random_steps", sac.initial_random_steps, to_index),
      DSAC_NUM_FIELD("batch_size", sac.batch_size, to_index),
      DSAC_NUM_FIELD("sac_lr", sac.sac_lr, to_double),
      DSAC_NUM_FIELD("decor_lr.policy", sac.decor_lr[0], to_double),
      DSAC_NUM_FIELD("decor_lr.q1", sac.decor_lr[1], to_double),
      DSAC_NUM_FIELD("decor_lr.q2", sac.decor_lr[2], to_double),
      {"decorrelate",
       [](RunConfig& c, const std::string& v) {
         c.sac.decorrelate = {false, false, false};
         if (v == "none") return;
         for (const auto& name : split_list(v)) {
           bool found = false;
           for (NetworkId id : kAllNetworks) {
             if (name == network_name(id)) {
               c.sac.decorrelate[std::size_t(id)] = true;
               found = true;
             }
           }
           if (!found) throw ValueError("unknown network '" + name + "' (policy, q1, q2)");
         }
       },
       [](const RunConfig& c) {
         std::string out;
         for (NetworkId id : kAllNetworks) {
           if (c.sac.decorrelates(id)) out += (out.empty() ? "" : ",") + std::string(network_name(id));
         }
         return out.empty() ? std::string("none") : out;
       }},
      {"entropy_target",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") c.sac.entropy_target.reset();
         else c.sac.entropy_target = to_double(v);
       },
       [](const RunConfig& c) {
         return c.sac.entropy_target ? fmt(*c.sac.entropy_target) : std::string("auto");
       }},
      DSAC_NUM_FIELD("initial_alpha", sac.initial_alpha, to_double),
      DSAC_NUM_FIELD("downsample_b", sac.downsample_b, to_double),
      {"patch_count",
       [](RunConfig& c, const std::string& v) {
         if (v == "per_image") c.sac.patch_count_mode = PatchCountMode::PerImage;
         else if (v == "per_batch") c.sac.patch_count_mode = PatchCountMode::PerBatch;
         else throw ValueError("expected per_image or per_batch, got '" + v + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.sac.patch_count_mode == PatchCountMode::PerImage ? "per_image" : "per_batch");
       }},
      {"net.conv_channels", [](RunConfig& c, const std::string& v) { c.sac.arch.conv_channels = to_list<Index>(v, to_index); },
       [](const RunConfig& c) { return fmt_list(c.sac.arch.conv_channels); }},
      {"net.conv_kernels", [](RunConfig& c, const std::string& v) { c.sac.arch.conv_kernels = to_list<Index>(v, to_index); },
       [](const RunConfig& c) { return fmt_list(c.sac.arch.conv_kernels); }},
      {"net.conv_strides", [](RunConfig& c, const std::string& v) { c.sac.arch.conv_strides = to_list<Index>(v, to_index); },
       [](const RunConfig& c) { return fmt_list(c.sac.arch.conv_strides); }},
      DSAC_NUM_FIELD("net.hidden_units", sac.arch.hidden_units, to_index),
      {"net.vector_hidden", [](RunConfig& c, const std::string& v) { c.sac.arch.vector_hidden = to_list<Index>(v, to_index); },
       [](const RunConfig& c) { return fmt_list(c.sac.arch.vector_hidden); }},
      DSAC_NUM_FIELD("net.leaky_slope", sac.arch.slope, to_double),
      DSAC_NUM_FIELD("total_env_steps", total_env_steps, to_index),
      DSAC_NUM_FIELD("eval_every", eval_every, to_index),
      DSAC_NUM_FIELD("eval_episodes", eval_episodes, to_index),
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir; }},
      {"sweep.sac_lr", [](RunConfig& c, const std::string& v) { c.sweep.sac_lr = to_list<double>(v, to_double); },
       [](const RunConfig& c) { return fmt_list(c.sweep.sac_lr); }},
      {"sweep.decor_lr", [](RunConfig& c, const std::string& v) { c.sweep.decor_lr = to_list<double>(v, to_double); },
       [](const RunConfig& c) { return fmt_list(c.sweep.decor_lr); }},
      {"sweep.batch_size", [](RunConfig& c, const std::string& v) { c.sweep.batch_size = to_list<Index>(v, to_index); },
       [](const RunConfig& c) { return fmt_list(c.sweep.batch_size); }},
  };
  return table;
}

#undef DSAC_NUM_FIELD

}  // namespace

void RunConfig::validate() const {
  if (env.name != "grid_treasure" && env.name != "noisy_chain") {
    throw ConfigError("env", "unknown environment '" + env.name + "'");
  }
  if (env.grid_size < 3) throw ConfigError("env.size", "must be at least 3");
  if (env.render_scale < 1) throw ConfigError("env.render_scale", "must be at least 1");
  if (env.chain_length < 3) throw ConfigError("env.length", "must be at least 3");
  if (env.noise_dims < 0) throw ConfigError("env.noise_dims", "must be non-negative");
  if (!(env.sticky_p >= 0.0 && env.sticky_p <= 1.0)) throw ConfigError("wrap.sticky_p", "must lie in [0, 1]");
  if (env.repeat < 1) throw ConfigError("wrap.repeat", "must be at least 1");
  if (env.stack < 1) throw ConfigError("wrap.stack", "must be at least 1");
  sac.validate();
  for (Index w : sac.arch.conv_channels)
    if (w < 1) throw ConfigError("net.conv_channels", "widths must be positive");
  for (Index w : sac.arch.vector_hidden)
    if (w < 1) throw ConfigError("net.vector_hidden", "widths must be positive");
  if (sac.arch.conv_channels.size() != sac.arch.conv_kernels.size() ||
      sac.arch.conv_channels.size() != sac.arch.conv_strides.size()) {
    throw ConfigError("net.conv_channels", "channels, kernels and strides need equal lengths");
  }
  if (total_env_steps < 0) throw ConfigError("total_env_steps", "must be non-negative");
  if (eval_every < 0) throw ConfigError("eval_every", "must be non-negative");
  if (eval_episodes < 1) throw ConfigError("eval_episodes", "must be at least 1");
  if (sweep.sac_lr.empty() || sweep.decor_lr.empty() || sweep.batch_size.empty()) {
    throw ConfigError("sweep", "grid axes must be non-empty");
  }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "missing key");
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(key, "unknown key (" + source + ":" + std::to_string(line_no) + ")");
    if (!seen.insert(key).second) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const ValueError& e) {
      throw ParseError(source, line_no, key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace dsac
