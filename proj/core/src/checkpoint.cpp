#include "effloc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "effloc/errors.hpp"

namespace effloc {

namespace {

constexpr char kMagic[4] = {'E', 'F', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

// All scalar fields little-endian. The writers/readers below go through
// byte buffers so the format is identical on any host.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& data;
  std::size_t off = 0;
  const std::string path;

  void need(std::size_t n) const {
    if (off + n > data.size()) {
      throw FormatError(path + ": truncated at offset " + std::to_string(off) +
                        " (needed " + std::to_string(n) + " more bytes of " +
                        std::to_string(data.size()) + ")");
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(std::uint8_t(data[off + i])) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(std::uint8_t(data[off + i])) << (8 * i);
    off += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(off, n);
    off += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);

  std::string text = ck.config.to_text();
  text += "epoch = " + std::to_string(ck.epoch) + "\n";
  text += "opt_step = " + std::to_string(ck.opt_step) + "\n";
  put_u64(out, text.size());
  out += text;

  put_u64(out, ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, t.ndim());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_f64(out, v);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string data = buf.str();
  Reader r{data, 0, path.string()};

  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic at offset 0");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported format version " +
                      std::to_string(version) + " at offset 4");
  }

  Checkpoint ck;
  const std::uint64_t text_len = r.u64();
  const std::string text = r.bytes(text_len);
  // `epoch` and `opt_step` ride in the same key-value block as the config.
  std::string config_text;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("epoch =", 0) == 0) {
      ck.epoch = std::stoull(line.substr(7));
    } else if (line.rfind("opt_step =", 0) == 0) {
      ck.opt_step = std::stoull(line.substr(10));
    } else {
      config_text += line + "\n";
    }
  }
  ck.config = ModelConfig::from_text(config_text);

  const std::uint64_t count = r.u64();
  ck.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.u64();
    const std::string name = r.bytes(name_len);
    const std::uint64_t rank = r.u64();
    if (rank > 8) {
      throw FormatError(path.string() + ": implausible tensor rank " +
                        std::to_string(rank) + " at offset " +
                        std::to_string(r.off - 8));
    }
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u64();
      numel *= d;
    }
    std::vector<double> values(numel);
    for (auto& v : values) v = r.f64();
    ck.tensors.emplace_back(name,
                            Tensor::from_data(std::move(shape), std::move(values)));
  }
  return ck;
}

Checkpoint snapshot_state(const EffLocModel& model, const LossState* loss,
                          const AdamW* optimizer, std::size_t epoch) {
  Checkpoint ck;
  ck.config = model.config();
  ck.epoch = epoch;
  ck.opt_step = optimizer ? optimizer->step_count() : 0;
  for (const auto& [name, t] : model.store().params()) {
    ck.tensors.emplace_back(name, t.detach());
  }
  for (const auto& [name, t] : model.store().buffers()) {
    ck.tensors.emplace_back(name, t.detach());
  }
  if (loss) {
    ck.tensors.emplace_back("loss/alpha", loss->alpha.detach());
    ck.tensors.emplace_back("loss/beta", loss->beta.detach());
  }
  if (optimizer) {
    for (auto& [name, t] : optimizer->state_tensors()) {
      ck.tensors.emplace_back(name, t);
    }
  }
  return ck;
}

void restore_state(const Checkpoint& ck, EffLocModel& model, LossState* loss,
                   AdamW* optimizer) {
  auto assign = [](Tensor dst, const Tensor& src, const std::string& name) {
    if (dst.shape() != src.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_str(src.shape()) + ", expected " +
                        shape_str(dst.shape()));
    }
    dst.values() = src.values();
  };
  for (const auto& [name, t] : ck.tensors) {
    if (name.rfind("opt/", 0) == 0) {
      if (optimizer) optimizer->load_state_tensor(name, t);
    } else if (name == "loss/alpha") {
      if (loss) assign(loss->alpha, t, name);
    } else if (name == "loss/beta") {
      if (loss) assign(loss->beta, t, name);
    } else {
      if (!model.store().has(name)) {
        throw FormatError("checkpoint tensor '" + name +
                          "' has no destination in the model");
      }
      assign(model.store().get(name), t, name);
    }
  }
  if (optimizer) optimizer->set_step_count(ck.opt_step);
}

}  // namespace effloc
