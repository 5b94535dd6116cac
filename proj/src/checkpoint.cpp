#include "zsl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "zsl/errors.hpp"

namespace zsl {

namespace {

constexpr char kMagic[8] = {'Z', 'S', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint64_t kVersion = 1;
constexpr std::uint64_t kHasTrainingState = 1;

class Writer {
 public:
  explicit Writer(std::vector<unsigned char>& out) : out_(out) {}
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

 private:
  std::vector<unsigned char>& out_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& in, std::string origin) : in_(in), origin_(std::move(origin)) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic() {
    need(sizeof(kMagic));
    if (std::memcmp(in_.data(), kMagic, sizeof(kMagic)) != 0) throw ValidationError(origin_ + ": not a checkpoint file");
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (in_.size() - pos_ < n) throw ValidationError(origin_ + ": truncated checkpoint");
  }
  const std::vector<unsigned char>& in_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ViTModel& model, const TrainingState* state) {
  std::vector<unsigned char> buf;
  Writer w(buf);
  w.bytes(kMagic, sizeof(kMagic));
  w.u64(kVersion);
  const auto& c = model.config();
  for (std::size_t v : {c.height, c.width, c.channels, c.patch, c.dim, c.depth, c.heads, c.mlp_ratio, c.num_attributes}) {
    w.u64(v);
  }
  const auto& params = model.parameters();
  w.u64(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    auto v = p.tensor.values();
    w.u64(v.size());
    for (double x : v) w.f64(x);
  }
  w.u64(state ? kHasTrainingState : 0);
  if (state) {
    const auto& a = state->adam;
    if (a.m.size() != params.size() || a.v.size() != params.size()) {
      throw ContractError("optimizer state does not match the model's parameters");
    }
    w.u64(a.step_count);
    w.f64(a.lr);
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (double x : a.m[i]) w.f64(x);
      for (double x : a.v[i]) w.f64(x);
    }
    w.u64(state->batch_rng.seed());
    w.u64(state->batch_rng.key());
    w.u64(state->batch_rng.counter());
    w.u64(state->epochs_done);
    w.u64(state->steps_done);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(buf, path.string());
  r.magic();
  if (const auto v = r.u64(); v != kVersion) {
    throw ValidationError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  ViTConfig c;
  for (std::size_t* f : {&c.height, &c.width, &c.channels, &c.patch, &c.dim, &c.depth, &c.heads, &c.mlp_ratio,
                         &c.num_attributes}) {
    *f = r.u64();
  }
  ViTModel model = ViTModel::zeros(c);
  auto& params = model.parameters();
  if (const auto n = r.u64(); n != params.size()) {
    throw ValidationError(path.string() + ": " + std::to_string(n) + " parameters, config implies " +
                          std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw ValidationError(path.string() + ": expected parameter '" + p.name + "', found '" + name + "'");
    auto v = p.tensor.values();
    if (r.u64() != v.size()) throw ValidationError(path.string() + ": size mismatch for '" + name + "'");
    for (double& x : v) x = r.f64();
  }
  std::optional<TrainingState> state;
  if (r.u64() & kHasTrainingState) {
    TrainingState s;
    s.adam.step_count = r.u64();
    s.adam.lr = r.f64();
    s.adam.beta1 = r.f64();
    s.adam.beta2 = r.f64();
    s.adam.eps = r.f64();
    for (const auto& p : params) {
      std::vector<double> m(p.tensor.numel()), v(p.tensor.numel());
      for (double& x : m) x = r.f64();
      for (double& x : v) x = r.f64();
      s.adam.m.push_back(std::move(m));
      s.adam.v.push_back(std::move(v));
    }
    const auto seed = r.u64();
    const auto key = r.u64();
    const auto counter = r.u64();
    s.batch_rng = Rng::restore(seed, key, counter);
    s.epochs_done = r.u64();
    s.steps_done = r.u64();
    state = std::move(s);
  }
  if (!r.done()) throw ValidationError(path.string() + ": trailing bytes after checkpoint payload");
  return Checkpoint{std::move(model), std::move(state)};
}

}  // namespace zsl
