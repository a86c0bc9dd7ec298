#include "ccreid/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace ccreid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int(const std::string& v, Int lo, Int hi) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  if (out < lo || out > hi) {
    throw std::invalid_argument("value " + v + " outside [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  }
  return out;
}

double parse_real(const std::string& v, double lo, double hi, bool open_lo = false) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("expected a finite number, got '" + v + "'");
  }
  if (out < lo || out > hi || (open_lo && out == lo)) {
    std::ostringstream os;
    os << "value " << v << " outside " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
    throw std::invalid_argument(os.str());
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& v, std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<std::size_t>(trim(item), lo, hi));
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

constexpr auto kMaxSize = std::size_t{1} << 20;

struct Field {
  const char* key;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"model.stage_channels", "output channels per backbone stage; the last is c_F",
       [](RunConfig& c, const std::string& v) {
         auto l = parse_list(v, 1, 4096);
         if (l.empty()) throw std::invalid_argument("at least one stage is required");
         c.backbone.stage_channels = l;
       },
       [](const RunConfig& c) { return format_list(c.backbone.stage_channels); }},
      {"model.downsample_stages", "0-based stages whose first conv has stride 2",
       [](RunConfig& c, const std::string& v) { c.backbone.downsample_stages = parse_list(v, 0, 64); },
       [](const RunConfig& c) { return format_list(c.backbone.downsample_stages); }},
      {"model.shared_from_stage",
       "first 0-based stage shared by both paths (2 = stages 3-4 shared, 4 = nothing shared)",
       [](RunConfig& c, const std::string& v) {
         c.backbone.shared_from_stage = parse_int<std::size_t>(v, 0, 64);
       },
       [](const RunConfig& c) { return std::to_string(c.backbone.shared_from_stage); }},
      {"model.input_h", "input image height",
       [](RunConfig& c, const std::string& v) { c.backbone.input_h = parse_int<std::size_t>(v, 1, 4096); },
       [](const RunConfig& c) { return std::to_string(c.backbone.input_h); }},
      {"model.input_w", "input image width",
       [](RunConfig& c, const std::string& v) { c.backbone.input_w = parse_int<std::size_t>(v, 1, 4096); },
       [](const RunConfig& c) { return std::to_string(c.backbone.input_w); }},
      {"model.layer_norm", "standardize every conv output per image before the relu",
       [](RunConfig& c, const std::string& v) { c.backbone.layer_norm = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.backbone.layer_norm ? "true" : "false"); }},
      {"ccn.h_k", "personalised kernel height",
       [](RunConfig& c, const std::string& v) { c.sampling.h_k = parse_int<std::size_t>(v, 1, 1024); },
       [](const RunConfig& c) { return std::to_string(c.sampling.h_k); }},
      {"ccn.w_k", "personalised kernel width",
       [](RunConfig& c, const std::string& v) { c.sampling.w_k = parse_int<std::size_t>(v, 1, 1024); },
       [](const RunConfig& c) { return std::to_string(c.sampling.w_k); }},
      {"ccn.stride_v", "vertical kernel sampling stride",
       [](RunConfig& c, const std::string& v) { c.sampling.stride_v = parse_int<std::size_t>(v, 1, 1024); },
       [](const RunConfig& c) { return std::to_string(c.sampling.stride_v); }},
      {"ccn.stride_h", "horizontal kernel sampling stride",
       [](RunConfig& c, const std::string& v) { c.sampling.stride_h = parse_int<std::size_t>(v, 1, 1024); },
       [](const RunConfig& c) { return std::to_string(c.sampling.stride_h); }},
      {"ccn.edge_snap", "snap the last kernel row/column to the map edge",
       [](RunConfig& c, const std::string& v) { c.sampling.edge_snap = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.sampling.edge_snap ? "true" : "false"); }},
      {"loss.lambda", "weight of the identification loss (reference setting 0.1)",
       [](RunConfig& c, const std::string& v) { c.lambda = parse_real(v, 0, 1e6); },
       [](const RunConfig& c) { return format_real(c.lambda); }},
      {"loss.clamp", "lower clamp of log arguments in the pair loss",
       [](RunConfig& c, const std::string& v) { c.clamp = parse_real(v, 0, 0.5, true); },
       [](const RunConfig& c) { return format_real(c.clamp); }},
      {"data.seed", "global seed of the synthetic dataset",
       [](RunConfig& c, const std::string& v) {
         c.data_seed = parse_int<std::uint64_t>(v, 0, std::numeric_limits<std::uint64_t>::max());
       },
       [](const RunConfig& c) { return std::to_string(c.data_seed); }},
      {"data.train_ids", "training identities (ids 0 .. train_ids-1)",
       [](RunConfig& c, const std::string& v) { c.train_ids = parse_int<std::uint32_t>(v, 2, 1u << 20); },
       [](const RunConfig& c) { return std::to_string(c.train_ids); }},
      {"data.test_ids", "held-out identities following the training ids",
       [](RunConfig& c, const std::string& v) { c.test_ids = parse_int<std::uint32_t>(v, 1, 1u << 20); },
       [](const RunConfig& c) { return std::to_string(c.test_ids); }},
      {"data.per_modality", "images per identity and modality",
       [](RunConfig& c, const std::string& v) { c.per_modality = parse_int<std::uint32_t>(v, 1, 1u << 16); },
       [](const RunConfig& c) { return std::to_string(c.per_modality); }},
      {"data.pad", "zero padding before the random crop",
       [](RunConfig& c, const std::string& v) { c.pad = parse_int<std::size_t>(v, 0, 1024); },
       [](const RunConfig& c) { return std::to_string(c.pad); }},
      {"data.flip_prob", "horizontal mirror probability",
       [](RunConfig& c, const std::string& v) { c.flip_prob = parse_real(v, 0, 1); },
       [](const RunConfig& c) { return format_real(c.flip_prob); }},
      {"train.epochs", "training epochs (reference setting 60)",
       [](RunConfig& c, const std::string& v) { c.epochs = parse_int<std::size_t>(v, 1, kMaxSize); },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"train.lr", "initial learning rate (reference setting 0.1)",
       [](RunConfig& c, const std::string& v) { c.lr = parse_real(v, 0, 100, true); },
       [](const RunConfig& c) { return format_real(c.lr); }},
      {"train.lr_drop_epoch",
       "last epoch at the initial rate, then x0.1; 0 means epochs/2 (reference: last 30 of 60 at x0.1)",
       [](RunConfig& c, const std::string& v) { c.lr_drop_epoch = parse_int<std::size_t>(v, 0, kMaxSize); },
       [](const RunConfig& c) { return std::to_string(c.lr_drop_epoch); }},
      {"train.momentum", "SGD momentum",
       [](RunConfig& c, const std::string& v) { c.momentum = parse_real(v, 0, 0.999999); },
       [](const RunConfig& c) { return format_real(c.momentum); }},
      {"train.n", "identities per batch, N (reference setting 32)",
       [](RunConfig& c, const std::string& v) { c.n = parse_int<std::size_t>(v, 1, kMaxSize); },
       [](const RunConfig& c) { return std::to_string(c.n); }},
      {"train.r", "negative pairs per positive pair, r (reference setting 3)",
       [](RunConfig& c, const std::string& v) { c.r = parse_int<std::size_t>(v, 0, 1024); },
       [](const RunConfig& c) { return std::to_string(c.r); }},
      {"train.seed", "seed of initialisation, batch sampling and augmentation",
       [](RunConfig& c, const std::string& v) {
         c.train_seed = parse_int<std::uint64_t>(v, 0, std::numeric_limits<std::uint64_t>::max());
       },
       [](const RunConfig& c) { return std::to_string(c.train_seed); }},
      {"train.batches_per_epoch", "0 means ceil(train_ids * per_modality / n)",
       [](RunConfig& c, const std::string& v) { c.batches_per_epoch = parse_int<std::size_t>(v, 0, kMaxSize); },
       [](const RunConfig& c) { return std::to_string(c.batches_per_epoch); }},
      {"train.checkpoint_every", "also checkpoint every k epochs; 0 means only at the end",
       [](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_int<std::size_t>(v, 0, kMaxSize); },
       [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},
      {"eval.mode", "simplified (cosine of pooled features) or full (pair difference scores)",
       [](RunConfig& c, const std::string& v) { c.eval_mode = parse_eval_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.eval_mode)); }},
      {"paths.dataset", "dataset file; empty means generate in memory",
       [](RunConfig& c, const std::string& v) { c.dataset_path = v; },
       [](const RunConfig& c) { return c.dataset_path; }},
      {"paths.checkpoint", "checkpoint file",
       [](RunConfig& c, const std::string& v) { c.checkpoint_path = v; },
       [](const RunConfig& c) { return c.checkpoint_path; }},
      {"paths.report", "evaluation report file; the CMC CSV goes next to it",
       [](RunConfig& c, const std::string& v) { c.report_path = v; },
       [](const RunConfig& c) { return c.report_path; }},
  };
  return table;
}

}  // namespace

std::vector<ConfigKey> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKey> out;
  for (const auto& f : fields()) {
    out.push_back({f.key, std::string(f.help) + " [default: " + f.get(defaults) + "]"});
  }
  return out;
}

void validate_config(const RunConfig& c) {
  auto fail = [](const char* key, const std::string& what) { throw ConfigError(key, 0, key + std::string(": ") + what); };
  Shape fs;
  try {
    fs = c.backbone.feature_shape();
  } catch (const ShapeError& e) {
    fail("model.stage_channels", e.what());
  }
  if (c.backbone.shared_from_stage > c.backbone.stage_count()) {
    fail("model.shared_from_stage", "exceeds the stage count " + std::to_string(c.backbone.stage_count()));
  }
  try {
    c.sampling.validate(fs[1], fs[2]);
  } catch (const ShapeError& e) {
    fail("ccn.h_k", e.what());
  }
  if (c.n > c.train_ids) {
    fail("train.n", std::to_string(c.n) + " identities per batch but only " +
                        std::to_string(c.train_ids) + " training identities");
  }
  if (c.n < 2 && c.r > 0) fail("train.n", "negative pairs need at least 2 identities per batch");
  if (c.lr_drop_epoch > c.epochs) fail("train.lr_drop_epoch", "after the last epoch");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int number = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", number, "line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) {
      throw ConfigError(key, number, "line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    if (auto [prev, fresh] = seen.emplace(key, number); !fresh) {
      throw ConfigError(key, number, "line " + std::to_string(number) + ": key '" + key +
                                         "' already set on line " + std::to_string(prev->second));
    }
    try {
      it->set(c, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, number, "line " + std::to_string(number) + ": " + key + ": " + e.what());
    }
  }
  try {
    validate_config(c);
  } catch (const ConfigError& e) {
    const auto at = seen.find(e.key());
    const int l = at == seen.end() ? 0 : at->second;
    throw ConfigError(e.key(), l, (l ? "line " + std::to_string(l) + ": " : std::string()) + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", 0, "cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

void save_config(const std::string& path, const RunConfig& config) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << format_config(config);
}

}  // namespace ccreid
