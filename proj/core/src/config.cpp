#include "effloc/config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "effloc/errors.hpp"

namespace effloc {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_list(const std::array<std::size_t, 3>& a) {
  std::ostringstream os;
  os << a[0] << "," << a[1] << "," << a[2];
  return os.str();
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::array<std::size_t, 3> parse_list3(const std::string& key,
                                       const std::string& v) {
  std::array<std::size_t, 3> out{};
  std::istringstream is(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= 3) throw ConfigError(key + ": expected 3 entries, got more");
    out[i++] = std::stoull(trim(item));
  }
  if (i != 3) throw ConfigError(key + ": expected 3 entries");
  return out;
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

void ModelConfig::validate() const {
  for (std::size_t i = 0; i < 3; ++i) {
    if (widths[i] == 0 || depths[i] == 0 || heads[i] == 0) {
      throw ConfigError("stage " + std::to_string(i + 1) +
                        ": widths, depths and heads must be positive");
    }
    if (widths[i] % heads[i] != 0) {
      throw ConfigError("stage " + std::to_string(i + 1) + ": width " +
                        std::to_string(widths[i]) + " not divisible by " +
                        std::to_string(heads[i]) + " heads");
    }
    const double vd = v_dim_ratio * double(widths[i] / heads[i]);
    if (vd < 1.0 || vd != std::floor(vd)) {
      throw ConfigError("stage " + std::to_string(i + 1) +
                        ": v_dim_ratio does not give an integral value width");
    }
    if (heads[i] > 1 && std::size_t(vd) != widths[i] / heads[i]) {
      throw ConfigError("stage " + std::to_string(i + 1) +
                        ": cascading heads require v_dim equal to the channel "
                        "split (v_dim_ratio = 1)");
    }
    const double fh = ffn_expansion * double(widths[i]);
    if (fh < 1.0 || fh != std::floor(fh)) {
      throw ConfigError("stage " + std::to_string(i + 1) +
                        ": ffn_expansion * width must be a positive integer");
    }
    if (qk_dim[i] == 0) {
      throw ConfigError("stage " + std::to_string(i + 1) +
                        ": qk_dim must be positive");
    }
  }
  if (!is_power_of_two(embed_downsample_factor) ||
      embed_downsample_factor < 2) {
    throw ConfigError("embed_downsample_factor must be a power of two >= 2");
  }
  if (embed_base == 0) throw ConfigError("embed_base must be positive");
  // Two more stride-2 reductions happen between the stages.
  const std::size_t total_factor = embed_downsample_factor * 4;
  if (input_resolution % total_factor != 0) {
    throw ConfigError("input_resolution " + std::to_string(input_resolution) +
                      " not divisible by embed factor " +
                      std::to_string(embed_downsample_factor) +
                      " and the stage strides (needs a multiple of " +
                      std::to_string(total_factor) + ")");
  }
  if (ffn_count == 0) throw ConfigError("ffn_count must be positive");
  if (dw_kernel == 0 || dw_kernel % 2 == 0) {
    throw ConfigError("dw_kernel must be odd");
  }
  if (regressor_hidden == 0) {
    throw ConfigError("regressor_hidden must be positive");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ConfigError("dropout_p must lie in [0,1)");
  }
}

std::size_t ModelConfig::embed_conv_count() const {
  std::size_t n = 0;
  std::size_t f = embed_downsample_factor;
  while (f > 1) {
    f /= 2;
    ++n;
  }
  return n;
}

std::vector<std::size_t> ModelConfig::embed_channels() const {
  const std::size_t n = embed_conv_count();
  std::vector<std::size_t> ch(n);
  std::size_t c = embed_base;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    ch[i] = c;
    c *= 2;
  }
  ch[n - 1] = widths[0];
  return ch;
}

std::size_t ModelConfig::stage_resolution(std::size_t stage) const {
  std::size_t r = input_resolution / embed_downsample_factor;
  for (std::size_t i = 0; i < stage; ++i) r /= 2;
  return r;
}

std::size_t ModelConfig::stage_tokens(std::size_t stage) const {
  const std::size_t r = stage_resolution(stage);
  return r * r;
}

std::size_t ModelConfig::head_split(std::size_t stage) const {
  return widths[stage] / heads[stage];
}

std::size_t ModelConfig::value_dim(std::size_t stage) const {
  return std::size_t(v_dim_ratio * double(head_split(stage)));
}

std::size_t ModelConfig::ffn_hidden(std::size_t stage) const {
  return std::size_t(ffn_expansion * double(widths[stage]));
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "name = " << name << "\n";
  os << "widths = " << fmt_list(widths) << "\n";
  os << "depths = " << fmt_list(depths) << "\n";
  os << "heads = " << fmt_list(heads) << "\n";
  os << "ffn_count = " << ffn_count << "\n";
  os << "ffn_expansion = " << fmt_double(ffn_expansion) << "\n";
  os << "qk_dim = " << fmt_list(qk_dim) << "\n";
  os << "v_dim_ratio = " << fmt_double(v_dim_ratio) << "\n";
  os << "dw_kernel = " << dw_kernel << "\n";
  os << "input_resolution = " << input_resolution << "\n";
  os << "embed_downsample_factor = " << embed_downsample_factor << "\n";
  os << "embed_base = " << embed_base << "\n";
  os << "regressor_hidden = " << regressor_hidden << "\n";
  os << "dropout_p = " << fmt_double(dropout_p) << "\n";
  os << "literal_outer_softmax = " << (literal_outer_softmax ? 1 : 0) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line without '=': " + t);
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "name") {
      cfg.name = val;
    } else if (key == "widths") {
      cfg.widths = parse_list3(key, val);
    } else if (key == "depths") {
      cfg.depths = parse_list3(key, val);
    } else if (key == "heads") {
      cfg.heads = parse_list3(key, val);
    } else if (key == "ffn_count") {
      cfg.ffn_count = std::stoull(val);
    } else if (key == "ffn_expansion") {
      cfg.ffn_expansion = std::stod(val);
    } else if (key == "qk_dim") {
      cfg.qk_dim = parse_list3(key, val);
    } else if (key == "v_dim_ratio") {
      cfg.v_dim_ratio = std::stod(val);
    } else if (key == "dw_kernel") {
      cfg.dw_kernel = std::stoull(val);
    } else if (key == "input_resolution") {
      cfg.input_resolution = std::stoull(val);
    } else if (key == "embed_downsample_factor") {
      cfg.embed_downsample_factor = std::stoull(val);
    } else if (key == "embed_base") {
      cfg.embed_base = std::stoull(val);
    } else if (key == "regressor_hidden") {
      cfg.regressor_hidden = std::stoull(val);
    } else if (key == "dropout_p") {
      cfg.dropout_p = std::stod(val);
    } else if (key == "literal_outer_softmax") {
      cfg.literal_outer_softmax = val != "0";
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> config_names() {
  return {"effloc", "effloc-small", "effloc-xs", "tiny"};
}

ModelConfig config_by_name(const std::string& name) {
  ModelConfig cfg;
  if (name == "effloc") {
    cfg.name = "effloc";
    cfg.widths = {192, 288, 384};
    cfg.depths = {1, 3, 4};
    cfg.heads = {3, 3, 4};
    cfg.ffn_expansion = 1.5;
    cfg.qk_dim = {16, 16, 16};
    cfg.regressor_hidden = 16384;
  } else if (name == "effloc-small") {
    cfg.name = "effloc-small";
    cfg.widths = {128, 256, 384};
    cfg.depths = {1, 2, 3};
    cfg.heads = {4, 4, 4};
    cfg.ffn_expansion = 1.25;
    cfg.qk_dim = {16, 16, 16};
    cfg.regressor_hidden = 16384;
  } else if (name == "effloc-xs") {
    cfg.name = "effloc-xs";
    cfg.widths = {128, 240, 320};
    cfg.depths = {1, 2, 3};
    cfg.heads = {4, 3, 4};
    cfg.ffn_expansion = 0.5;
    cfg.qk_dim = {16, 16, 16};
    cfg.regressor_hidden = 16384;
  } else if (name == "tiny") {
    cfg.name = "tiny";
    cfg.widths = {16, 24, 32};
    cfg.depths = {1, 1, 1};
    cfg.heads = {2, 2, 2};
    cfg.ffn_expansion = 2.0;
    cfg.qk_dim = {8, 8, 8};
    cfg.input_resolution = 64;
    cfg.embed_downsample_factor = 8;
    cfg.regressor_hidden = 64;
  } else {
    std::string names;
    for (const auto& n : config_names()) {
      if (!names.empty()) names += ", ";
      names += n;
    }
    throw ConfigError("unknown config '" + name + "' (valid names: " + names +
                      ")");
  }
  cfg.validate();
  return cfg;
}

}  // namespace effloc
