#include "inklab/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace inklab {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof()) throw std::invalid_argument("bad numeric value '" + v + "'");
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

const std::vector<std::pair<std::string, Field>>& fields() {
  auto num_field = [](auto member) {
    using T = std::remove_reference_t<decltype(std::declval<RunConfig&>().*member)>;
    return Field{[member](RunConfig& c, const std::string& v) { c.*member = parse_num<T>(v); },
                 [member](const RunConfig& c) {
                   if constexpr (std::is_floating_point_v<T>)
                     return fmt(c.*member);
                   else
                     return std::to_string(c.*member);
                 }};
  };
  auto bool_field = [](auto member) {
    return Field{[member](RunConfig& c, const std::string& v) { c.*member = parse_bool(v); },
                 [member](const RunConfig& c) { return (c.*member) ? "true" : "false"; }};
  };
  auto str_field = [](auto member) {
    return Field{[member](RunConfig& c, const std::string& v) { c.*member = v; },
                 [member](const RunConfig& c) { return c.*member; }};
  };

  static const std::vector<std::pair<std::string, Field>> table = {
      {"learning_rate", num_field(&RunConfig::learning_rate)},
      {"lr_scheduler", str_field(&RunConfig::lr_scheduler)},
      {"lr_warmup_steps", num_field(&RunConfig::lr_warmup_steps)},
      {"gradient_accumulation_steps", num_field(&RunConfig::gradient_accumulation_steps)},
      {"resolution", num_field(&RunConfig::resolution)},
      {"use_ema", bool_field(&RunConfig::use_ema)},
      {"seed", num_field(&RunConfig::seed)},
      {"total_steps", num_field(&RunConfig::total_steps)},
      {"batch_size", num_field(&RunConfig::batch_size)},
      {"checkpoint_every", num_field(&RunConfig::checkpoint_every)},
      {"cycle_length", num_field(&RunConfig::cycle_length)},
      {"num_restarts", num_field(&RunConfig::num_restarts)},
      {"diffusion_T", num_field(&RunConfig::diffusion_T)},
      {"guidance_scale", num_field(&RunConfig::guidance_scale)},
      {"base_channels", num_field(&RunConfig::base_channels)},
      {"channel_mults", str_field(&RunConfig::channel_mults)},
      {"time_dim", num_field(&RunConfig::time_dim)},
      {"text_dim", num_field(&RunConfig::text_dim)},
      {"image_channels", num_field(&RunConfig::image_channels)},
      {"prompt_dropout", num_field(&RunConfig::prompt_dropout)},
      {"lambda_cycle", num_field(&RunConfig::lambda_cycle)},
      {"cyclegan_lr", num_field(&RunConfig::cyclegan_lr)},
      {"cyclegan_gen_base", num_field(&RunConfig::cyclegan_gen_base)},
      {"cyclegan_disc_base", num_field(&RunConfig::cyclegan_disc_base)},
      {"cyclegan_res_blocks", num_field(&RunConfig::cyclegan_res_blocks)},
      {"canny_low", num_field(&RunConfig::canny_low)},
      {"canny_high", num_field(&RunConfig::canny_high)},
      {"eval_repeats", num_field(&RunConfig::eval_repeats)},
      {"eval_samples", num_field(&RunConfig::eval_samples)},
      {"eval_ref", num_field(&RunConfig::eval_ref)},
      {"eval_single_image_mode", bool_field(&RunConfig::eval_single_image_mode)},
      {"manifest", str_field(&RunConfig::manifest)},
      {"run_dir", str_field(&RunConfig::run_dir)},
      {"base_checkpoint", str_field(&RunConfig::base_checkpoint)},
  };
  return table;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    auto strip = [](std::string s) {
      const auto sb = s.find_first_not_of(" \t");
      if (sb == std::string::npos) return std::string();
      const auto se = s.find_last_not_of(" \t");
      return s.substr(sb, se - sb + 1);
    };
    try {
      cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::apply(const std::map<std::string, std::string>& overrides) {
  for (const auto& [k, v] : overrides) set(k, v);
}

void RunConfig::validate() const {
  if (use_ema)
    throw std::invalid_argument("use_ema=true is not supported (no EMA machinery is built)");
  if (lr_scheduler != "cosine_with_restarts")
    throw std::invalid_argument("unsupported lr_scheduler '" + lr_scheduler + "'");
  if (gradient_accumulation_steps < 1)
    throw std::invalid_argument("gradient_accumulation_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (diffusion_T < 1) throw std::invalid_argument("diffusion_T must be >= 1");
  if (!(canny_low >= 0.0 && canny_low <= canny_high && canny_high <= 1.0))
    throw std::invalid_argument("canny thresholds must satisfy 0 <= low <= high <= 1");
  if (prompt_dropout < 0.0 || prompt_dropout > 1.0)
    throw std::invalid_argument("prompt_dropout must be in [0,1]");
  denoiser_config().validate();
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [name, field] : fields()) os << name << '=' << field.get(*this) << '\n';
  return os.str();
}

std::vector<int> RunConfig::mults() const {
  std::vector<int> out;
  std::istringstream is(channel_mults);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(parse_num<int>(tok));
  }
  if (out.empty()) throw std::invalid_argument("channel_mults must name at least one level");
  return out;
}

LrSchedule RunConfig::schedule() const {
  LrSchedule s;
  s.base_lr = learning_rate;
  s.warmup_steps = lr_warmup_steps;
  s.cycle_length = cycle_length > 0 ? cycle_length : std::max<int64_t>(1, total_steps - lr_warmup_steps);
  s.num_restarts = num_restarts;
  return s;
}

diffusion::DenoiserConfig RunConfig::denoiser_config() const {
  diffusion::DenoiserConfig d;
  d.resolution = resolution;
  d.channels = image_channels;
  d.base_channels = base_channels;
  d.channel_mults = mults();
  d.time_dim = time_dim;
  d.text_dim = text_dim;
  return d;
}

cyclegan::CycleGANConfig RunConfig::cyclegan_config() const {
  cyclegan::CycleGANConfig c;
  c.resolution = resolution;
  c.channels = image_channels;
  c.gen_base = cyclegan_gen_base;
  c.disc_base = cyclegan_disc_base;
  c.res_blocks = cyclegan_res_blocks;
  c.lambda_cycle = lambda_cycle;
  c.learning_rate = cyclegan_lr;
  return c;
}

vision::CannyParams RunConfig::canny_params() const {
  vision::CannyParams p;
  p.low_threshold = canny_low;
  p.high_threshold = canny_high;
  return p;
}

}  // namespace inklab
