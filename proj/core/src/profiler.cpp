#include "effloc/profiler.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "effloc/errors.hpp"

namespace effloc {

std::uint64_t conv2d_param_count(std::size_t cin, std::size_t cout,
                                 std::size_t k, bool bias) {
  return std::uint64_t(cout) * cin * k * k + (bias ? cout : 0);
}

std::uint64_t conv2d_macs(std::size_t cin, std::size_t cout, std::size_t k,
                          std::size_t out_h, std::size_t out_w) {
  return std::uint64_t(cout) * cin * k * k * out_h * out_w;
}

std::uint64_t depthwise_macs(std::size_t channels, std::size_t k,
                             std::size_t out_h, std::size_t out_w) {
  // One filter per channel: the Cin factor of the dense count divides out.
  return std::uint64_t(channels) * k * k * out_h * out_w;
}

std::uint64_t linear_param_count(std::size_t in, std::size_t out, bool bias) {
  return std::uint64_t(in) * out + (bias ? out : 0);
}

std::uint64_t linear_macs(std::size_t in, std::size_t out) {
  return std::uint64_t(in) * out;
}

namespace {

constexpr std::uint64_t kBnParams = 2;  // per channel: gamma, beta

ProfileRow dw_row(const std::string& path, const ModelConfig& cfg,
                  std::size_t stage, std::size_t tokens) {
  const std::size_t C = cfg.widths[stage];
  ProfileRow r;
  r.path = path;
  r.params = std::uint64_t(C) * cfg.dw_kernel * cfg.dw_kernel + kBnParams * C;
  r.macs = std::uint64_t(C) * cfg.dw_kernel * cfg.dw_kernel * tokens;
  r.elementwise_flops = 2ull * C * tokens;  // norm pass + residual add
  r.activations = 2ull * C * tokens;        // conv output + residual sum
  return r;
}

ProfileRow ffn_row(const std::string& path, const ModelConfig& cfg,
                   std::size_t stage, std::size_t tokens) {
  const std::size_t C = cfg.widths[stage];
  const std::size_t hf = cfg.ffn_hidden(stage);
  ProfileRow r;
  r.path = path;
  r.params = std::uint64_t(C) * hf + kBnParams * hf +  // expand + norm
             std::uint64_t(hf) * C + kBnParams * C;    // project + norm
  r.macs = (std::uint64_t(C) * hf + std::uint64_t(hf) * C) * tokens;
  // norm + activation on the hidden map, norm + residual on the output.
  r.elementwise_flops = 2ull * hf * tokens + 2ull * C * tokens;
  r.activations = std::uint64_t(hf) * tokens + 2ull * C * tokens;
  return r;
}

ProfileRow attn_row(const std::string& path, const ModelConfig& cfg,
                    std::size_t stage, std::size_t tokens) {
  const std::size_t C = cfg.widths[stage];
  const std::size_t n = cfg.heads[stage];
  const std::size_t split = cfg.head_split(stage);
  const std::size_t qk = cfg.qk_dim[stage];
  const std::size_t v = cfg.value_dim(stage);
  ProfileRow r;
  r.path = path;
  r.params = kBnParams * C;  // layer norm affine
  r.params += std::uint64_t(n) * (2 * split * qk + split * v + v);
  r.params += std::uint64_t(n) * v * C + C;  // output projection
  const std::uint64_t T = tokens;
  const std::uint64_t proj = std::uint64_t(n) * T * split * (2 * qk + v);
  r.score_macs = std::uint64_t(n) * T * T * qk;
  const std::uint64_t weighted = std::uint64_t(n) * T * T * v;
  const std::uint64_t out_proj = T * std::uint64_t(n) * v * C;
  r.macs = proj + r.score_macs + weighted + out_proj;
  // layer norm, per-head softmax, residual add.
  r.elementwise_flops = std::uint64_t(C) * T + std::uint64_t(n) * T * T +
                        std::uint64_t(C) * T;
  r.activations = std::uint64_t(C) * T                       // tokens
                  + std::uint64_t(n) * T * (2 * qk + v)      // q, k, v
                  + std::uint64_t(n) * T * T                 // scores
                  + std::uint64_t(n) * T * v                 // head outputs
                  + 2ull * C * T;                            // concat + out
  return r;
}

}  // namespace

ProfileReport profile(const ModelConfig& config, std::size_t resolution,
                      bool include_regressor) {
  ModelConfig cfg = config;
  cfg.input_resolution = resolution;
  cfg.validate();

  ProfileReport rep;
  rep.config = cfg;
  rep.resolution = resolution;
  rep.include_regressor = include_regressor;

  // Patch embedding stem.
  const auto ch = cfg.embed_channels();
  std::size_t cin = 3;
  std::size_t res = resolution;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    res /= 2;
    ProfileRow r;
    r.path = "embed.c" + std::to_string(i + 1);
    r.params = conv2d_param_count(cin, ch[i], 3, false) + kBnParams * ch[i];
    r.macs = conv2d_macs(cin, ch[i], 3, res, res);
    r.elementwise_flops = 2ull * ch[i] * res * res;  // norm + activation
    r.activations = std::uint64_t(ch[i]) * res * res;
    rep.rows.push_back(r);
    cin = ch[i];
  }

  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t tokens = cfg.stage_tokens(s);
    for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
      const std::string prefix = "stage" + std::to_string(s + 1) + ".block" +
                                 std::to_string(b + 1);
      for (std::size_t n = 0; n < cfg.ffn_count; ++n) {
        const std::string side = prefix + ".pre" + std::to_string(n + 1);
        rep.rows.push_back(dw_row(side + ".dw", cfg, s, tokens));
        rep.rows.push_back(ffn_row(side + ".ffn", cfg, s, tokens));
      }
      rep.rows.push_back(attn_row(prefix + ".attn", cfg, s, tokens));
      for (std::size_t n = 0; n < cfg.ffn_count; ++n) {
        const std::string side = prefix + ".post" + std::to_string(n + 1);
        rep.rows.push_back(dw_row(side + ".dw", cfg, s, tokens));
        rep.rows.push_back(ffn_row(side + ".ffn", cfg, s, tokens));
      }
    }
    if (s < 2) {
      const std::size_t out_res = cfg.stage_resolution(s + 1);
      ProfileRow r;
      r.path = "down" + std::to_string(s + 1);
      r.params = conv2d_param_count(cfg.widths[s], cfg.widths[s + 1], 3, false) +
                 kBnParams * cfg.widths[s + 1];
      r.macs = conv2d_macs(cfg.widths[s], cfg.widths[s + 1], 3, out_res, out_res);
      r.elementwise_flops = std::uint64_t(cfg.widths[s + 1]) * out_res * out_res;
      r.activations = std::uint64_t(cfg.widths[s + 1]) * out_res * out_res;
      rep.rows.push_back(r);
    }
  }

  if (include_regressor) {
    const std::size_t d3 = cfg.widths[2];
    const std::size_t t3 = cfg.stage_tokens(2);
    const std::size_t h = cfg.regressor_hidden;
    ProfileRow pool;
    pool.path = "head.pool";
    pool.elementwise_flops = std::uint64_t(d3) * t3;  // the averaging adds
    pool.activations = d3;
    rep.rows.push_back(pool);

    ProfileRow fc1;
    fc1.path = "head.fc1";
    fc1.params = linear_param_count(d3, h, true);
    fc1.macs = linear_macs(d3, h);
    fc1.elementwise_flops = 3ull * h;  // bias add, activation, dropout scale
    fc1.activations = h;
    rep.rows.push_back(fc1);

    ProfileRow fc2;
    fc2.path = "head.fc2";
    fc2.params = linear_param_count(h, 6, true);
    fc2.macs = linear_macs(h, 6);
    fc2.elementwise_flops = 6;
    fc2.activations = 6;
    rep.rows.push_back(fc2);
  }
  return rep;
}

ProfileRow ProfileReport::total() const {
  ProfileRow t;
  t.path = "total";
  for (const auto& r : rows) {
    t.params += r.params;
    t.macs += r.macs;
    t.score_macs += r.score_macs;
    t.elementwise_flops += r.elementwise_flops;
    t.activations += r.activations;
  }
  return t;
}

ProfileRow ProfileReport::backbone_total() const {
  ProfileRow t;
  t.path = "total_backbone";
  for (const auto& r : rows) {
    if (r.path.rfind("head.", 0) == 0) continue;
    t.params += r.params;
    t.macs += r.macs;
    t.score_macs += r.score_macs;
    t.elementwise_flops += r.elementwise_flops;
    t.activations += r.activations;
  }
  return t;
}

std::string ProfileReport::to_table() const {
  std::size_t name_w = 8;
  for (const auto& r : rows) name_w = std::max(name_w, r.path.size());
  std::ostringstream os;
  os << std::left << std::setw(int(name_w) + 2) << "module" << std::right
     << std::setw(12) << "params" << std::setw(14) << "macs" << std::setw(14)
     << "flops" << std::setw(12) << "ew_flops" << std::setw(12)
     << "activations" << "\n";
  auto line = [&](const ProfileRow& r) {
    os << std::left << std::setw(int(name_w) + 2) << r.path << std::right
       << std::setw(12) << r.params << std::setw(14) << r.macs
       << std::setw(14) << r.flops() << std::setw(12) << r.elementwise_flops
       << std::setw(12) << r.activations << "\n";
  };
  for (const auto& r : rows) line(r);
  line(backbone_total());
  line(total());
  return os.str();
}

std::string ProfileReport::to_csv() const {
  std::ostringstream os;
  os << "module,params,macs,flops,activations\n";
  auto line = [&](const ProfileRow& r) {
    os << r.path << "," << r.params << "," << r.macs << "," << r.flops() << ","
       << r.activations << "\n";
  };
  for (const auto& r : rows) line(r);
  line(total());
  return os.str();
}

ParamCountCheck verify_param_count(
    const ModelConfig& config,
    const std::vector<std::pair<std::string, Tensor>>& params) {
  ProfileReport rep = profile(config, config.input_resolution, true);

  // Longest-prefix assignment of parameter names to module rows.
  std::vector<std::uint64_t> actual(rep.rows.size(), 0);
  std::uint64_t unmatched = 0;
  for (const auto& [name, t] : params) {
    std::size_t best = rep.rows.size();
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      const std::string& p = rep.rows[i].path;
      if (p.size() >= best_len && name.size() > p.size() &&
          name.compare(0, p.size(), p) == 0 && name[p.size()] == '.') {
        best = i;
        best_len = p.size();
      }
    }
    if (best == rep.rows.size()) {
      unmatched += t.numel();
    } else {
      actual[best] += t.numel();
    }
  }

  ParamCountCheck check;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    check.analytic_total += rep.rows[i].params;
    check.actual_total += actual[i];
    if (rep.rows[i].params != actual[i]) {
      check.diffs.push_back({rep.rows[i].path, rep.rows[i].params, actual[i]});
    }
  }
  if (unmatched > 0) {
    check.actual_total += unmatched;
    check.diffs.push_back({"<unmatched>", 0, unmatched});
  }
  check.ok = check.diffs.empty();
  return check;
}

ParamCountCheck verify_param_count(const EffLocModel& model) {
  return verify_param_count(model.config(), model.store().params());
}

}  // namespace effloc
