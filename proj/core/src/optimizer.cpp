#include "effloc/optimizer.hpp"

#include <cmath>

#include "effloc/errors.hpp"

namespace effloc {

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
  if (total_epochs == 0 || epoch >= total_epochs) {
    throw ContractError("cosine_lr: epoch " + std::to_string(epoch) +
                        " outside schedule of " +
                        std::to_string(total_epochs) + " epochs");
  }
  return lr0 * 0.5 *
         (1.0 + std::cos(M_PI * double(epoch) / double(total_epochs)));
}

AdamW::AdamW(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::add_parameter(const std::string& name, Tensor param, bool decay) {
  Slot s;
  s.name = name;
  s.param = param;
  s.decay = decay;
  s.m.assign(param.numel(), 0.0);
  s.v.assign(param.numel(), 0.0);
  slots_.push_back(std::move(s));
}

void AdamW::step(double lr, double weight_decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (auto& s : slots_) {
    auto& p = s.param.values();
    const auto& g = s.param.grad();
    if (s.decay && weight_decay != 0.0) {
      for (auto& pv : p) pv -= lr * weight_decay * pv;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> AdamW::state_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(slots_.size() * 2);
  for (const auto& s : slots_) {
    out.emplace_back("opt/m/" + s.name,
                     Tensor::from_data(s.param.shape(), s.m));
    out.emplace_back("opt/v/" + s.name,
                     Tensor::from_data(s.param.shape(), s.v));
  }
  return out;
}

void AdamW::load_state_tensor(const std::string& name, const Tensor& value) {
  for (auto& s : slots_) {
    if (name == "opt/m/" + s.name) {
      if (value.numel() != s.m.size()) {
        throw FormatError("optimizer state size mismatch for " + name);
      }
      s.m = value.values();
      return;
    }
    if (name == "opt/v/" + s.name) {
      if (value.numel() != s.v.size()) {
        throw FormatError("optimizer state size mismatch for " + name);
      }
      s.v = value.values();
      return;
    }
  }
  throw FormatError("optimizer state for unknown parameter: " + name);
}

}  // namespace effloc
