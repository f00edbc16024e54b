#include "diffrl/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

namespace diffrl::nn {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)

size_t layer_param_count(int in, int out) { return size_t(out) * size_t(in) + size_t(out); }

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes) : sizes(std::move(layer_sizes)) {
  size_t n = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l)
    n += layer_param_count(sizes[l], sizes[l + 1]);
  params.assign(n, 0.0);
}

void Mlp::init(RngStream& rng, double out_gain) {
  size_t off = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    double gain = (l + 2 == sizes.size()) ? out_gain : 1.0;
    double limit = gain * std::sqrt(6.0 / double(in + out));
    for (int i = 0; i < out * in; ++i) params[off + size_t(i)] = rng.uniform(-limit, limit);
    off += size_t(out) * size_t(in);
    for (int i = 0; i < out; ++i) params[off + size_t(i)] = 0.0;
    off += size_t(out);
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  if (int(x.size()) != in_dim()) throw ad::ArityError("mlp input dimension mismatch");
  std::vector<double> h(x.begin(), x.end());
  size_t off = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    std::vector<double> y(size_t(out), 0.0);
    for (int o = 0; o < out; ++o) {
      double s = 0.0;
      const double* w = &params[off + size_t(o) * size_t(in)];
      for (int i = 0; i < in; ++i) s += h[size_t(i)] * w[i];
      s += params[off + size_t(out) * size_t(in) + size_t(o)];
      bool last = (l + 2 == sizes.size());
      y[size_t(o)] = last ? s : (s > 0.0 ? s : std::expm1(s));
    }
    off += layer_param_count(in, out);
    h = std::move(y);
  }
  return h;
}

std::vector<Var> Mlp::forward(std::span<const Var> p,
                              std::span<const Var> x) const {
  if (int(x.size()) != in_dim()) throw ad::ArityError("mlp input dimension mismatch");
  std::vector<Var> h(x.begin(), x.end());
  size_t off = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    std::vector<Var> y{};
    y.resize(size_t(out));
    for (int o = 0; o < out; ++o) {
      Var s = ad::dot(std::span<const Var>(h.data(), size_t(in)),
                      p.subspan(off + size_t(o) * size_t(in), size_t(in)));
      s = s + p[off + size_t(out) * size_t(in) + size_t(o)];
      bool last = (l + 2 == sizes.size());
      y[size_t(o)] = last ? s : ad::elu(s);
    }
    off += layer_param_count(in, out);
    h = std::move(y);
  }
  return h;
}

Policy::Policy(std::vector<int> trunk_sizes, double log_std_init)
    : trunk(std::move(trunk_sizes)) {
  log_std.assign(size_t(trunk.out_dim()), log_std_init);
}

std::vector<double> Policy::flat_params() const {
  std::vector<double> p = trunk.params;
  p.insert(p.end(), log_std.begin(), log_std.end());
  return p;
}

void Policy::set_flat_params(std::span<const double> p) {
  std::copy(p.begin(), p.begin() + trunk.param_count(), trunk.params.begin());
  std::copy(p.begin() + trunk.param_count(), p.end(), log_std.begin());
  clamp_log_std();
}

void Policy::init(RngStream& rng) { trunk.init(rng, 0.01); }

void Policy::clamp_log_std() {
  for (double& v : log_std) {
    if (v < log_std_min) v = log_std_min;
    if (v > log_std_max) v = log_std_max;
  }
}

PolicySampleT policy_sample(const Policy& shape, std::span<const Var> p,
                            std::span<const Var> state,
                            std::span<const double> noise) {
  int m = shape.action_dim();
  auto p_trunk = p.subspan(0, size_t(shape.trunk.param_count()));
  std::vector<Var> mu = shape.trunk.forward(p_trunk, state);

  PolicySampleT out;
  out.action.reserve(size_t(m));
  out.pre_squash.reserve(size_t(m));
  Var logp(0.0);
  for (int i = 0; i < m; ++i) {
    Var ls = ad::clamp(p[size_t(shape.trunk.param_count() + i)],
                       shape.log_std_min, shape.log_std_max);
    Var sigma = ad::exp(ls);
    Var u = mu[size_t(i)] + sigma * Var(noise[size_t(i)]);
    Var a = ad::tanh(u);
    out.pre_squash.push_back(u);
    out.action.push_back(a);

    // score path: density of the realized pre-squash sample, held fixed
    Var u_fixed = ad::stop_gradient(u);
    Var z = (u_fixed - mu[size_t(i)]) / sigma;
    Var gauss = Var(-kHalfLog2Pi) - ls - Var(0.5) * ad::square(z);
    // log(1 - tanh^2(u)) = 2*(log 2 - u - softplus(-2u)), stable at |u| > 5
    Var corr = Var(2.0) * (Var(M_LN2) - u_fixed - ad::softplus(Var(-2.0) * u_fixed));
    logp += gauss - corr;
  }
  out.log_prob = logp;
  return out;
}

std::vector<double> policy_mean_action(const Policy& pol,
                                       std::span<const double> state) {
  std::vector<double> mu = pol.trunk.forward(state);
  for (double& v : mu) v = std::tanh(v);
  return mu;
}

Critic::Critic(std::vector<int> head_sizes, int n_heads) {
  for (int i = 0; i < n_heads; ++i) heads.emplace_back(head_sizes);
}

int Critic::param_count() const {
  int n = 0;
  for (const Mlp& h : heads) n += h.param_count();
  return n;
}

std::vector<double> Critic::flat_params() const {
  std::vector<double> p;
  for (const Mlp& h : heads) p.insert(p.end(), h.params.begin(), h.params.end());
  return p;
}

void Critic::set_flat_params(std::span<const double> p) {
  size_t off = 0;
  for (Mlp& h : heads) {
    std::copy(p.begin() + long(off), p.begin() + long(off) + h.param_count(),
              h.params.begin());
    off += size_t(h.param_count());
  }
}

void Critic::init(RngStream& rng) {
  for (Mlp& h : heads) h.init(rng, 1.0);
}

double Critic::value_min(std::span<const double> state) const {
  double v = heads[0].forward(state)[0];
  for (size_t i = 1; i < heads.size(); ++i)
    v = std::min(v, heads[i].forward(state)[0]);
  return v;
}

Var Critic::value_min(std::span<const Var> p, std::span<const Var> state) const {
  size_t off = 0;
  Var v;
  for (size_t i = 0; i < heads.size(); ++i) {
    Var hi = heads[i].forward(p.subspan(off, size_t(heads[i].param_count())),
                              state)[0];
    v = (i == 0) ? hi : ad::min(v, hi);
    off += size_t(heads[i].param_count());
  }
  return v;
}

AdamState::AdamState(size_t n, double learning_rate)
    : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

void AdamState::step_update(std::span<double> params,
                            std::span<const double> grads) {
  if (params.size() != m.size() || grads.size() != m.size())
    throw ad::ArityError("adam shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw ad::NumericalOverflow(-1);
  ++step;
  double bc1 = 1.0 - std::pow(beta1, double(step));
  double bc2 = 1.0 - std::pow(beta2, double(step));
  for (size_t i = 0; i < m.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double global_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void clip_grad_norm(std::span<double> grads, double max_norm) {
  double g = global_norm(grads);
  // tolerance keeps clipping idempotent despite rounding in the rescale
  if (g > max_norm * (1.0 + 1e-12)) {
    double scale = max_norm / g;
    for (double& x : grads) x *= scale;
  }
}

namespace {

constexpr char kMagic[8] = {'D', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

template <class T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointEntry>& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 8);
  write_pod<uint32_t>(f, 1);  // version
  write_pod<uint32_t>(f, uint32_t(entries.size()));
  for (const auto& e : entries) {
    write_pod<uint32_t>(f, uint32_t(e.name.size()));
    f.write(e.name.data(), long(e.name.size()));
    write_pod<uint32_t>(f, uint32_t(e.shape.size()));
    for (int d : e.shape) write_pod<int64_t>(f, d);
  }
  for (const auto& e : entries)
    f.write(reinterpret_cast<const char*>(e.data.data()),
            long(e.data.size() * sizeof(double)));
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  uint32_t version = read_pod<uint32_t>(f);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  uint32_t count = read_pod<uint32_t>(f);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    uint32_t name_len = read_pod<uint32_t>(f);
    e.name.resize(name_len);
    f.read(e.name.data(), long(name_len));
    uint32_t ndim = read_pod<uint32_t>(f);
    e.shape.resize(ndim);
    size_t n = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      e.shape[d] = int(read_pod<int64_t>(f));
      n *= size_t(e.shape[d]);
    }
    e.data.resize(n);
  }
  for (auto& e : entries)
    f.read(reinterpret_cast<char*>(e.data.data()),
           long(e.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return entries;
}

}  // namespace diffrl::nn
