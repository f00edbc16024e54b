#include "diffrl/autodiff.hpp"

#include <cassert>
#include <cmath>

namespace diffrl::ad {

namespace {

double elu_fwd(double x) { return x > 0.0 ? x : std::expm1(x); }
double softplus_fwd(double x) {
  // log(1 + e^x) without overflow
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace

int Tape::push(Node n) {
  int id = int(nodes_.size());
  nodes_.push_back(n);
  double v = eval(n);
  values_.push_back(v);
  if (!std::isfinite(v)) throw NumericalOverflow(id);
  return id;
}

double Tape::eval(const Node& n) const {
  auto val = [&](int i) { return values_[size_t(i)]; };
  switch (n.op) {
    case Op::Input:
      return n.c;
    case Op::Affine:
      return n.k * val(n.a) + n.c;
    case Op::Add:
      return val(n.a) + val(n.b);
    case Op::Sub:
      return val(n.a) - val(n.b);
    case Op::Mul:
      return val(n.a) * val(n.b);
    case Op::Div:
      return val(n.a) / val(n.b);
    case Op::RecipC:
      return n.k / val(n.a);
    case Op::DivC:
      return val(n.a) / n.k;
    case Op::Exp:
      return std::exp(val(n.a));
    case Op::Log:
      return std::log(val(n.a));
    case Op::Sqrt:
      return std::sqrt(val(n.a));
    case Op::Sin:
      return std::sin(val(n.a));
    case Op::Cos:
      return std::cos(val(n.a));
    case Op::Tanh:
      return std::tanh(val(n.a));
    case Op::Elu:
      return elu_fwd(val(n.a));
    case Op::Softplus:
      return softplus_fwd(val(n.a));
    case Op::Max:
      return val(n.a) >= val(n.b) ? val(n.a) : val(n.b);
    case Op::Min:
      return val(n.a) <= val(n.b) ? val(n.a) : val(n.b);
    case Op::Clamp: {
      double x = val(n.a);
      return x < n.k ? n.k : (x > n.c ? n.c : x);
    }
    case Op::Dot: {
      double s = 0.0;
      for (int i = 0; i < n.args_count; ++i) {
        const ArgRef& x = args_[size_t(n.args_begin + 2 * i)];
        const ArgRef& w = args_[size_t(n.args_begin + 2 * i + 1)];
        s += argval(x) * argval(w);
      }
      return s;
    }
  }
  return 0.0;
}

int Tape::input(double v) {
  Node n;
  n.op = Op::Input;
  n.c = v;
  return push(n);
}

void Tape::set_input(int id, double v) {
  assert(nodes_[size_t(id)].op == Op::Input);
  nodes_[size_t(id)].c = v;
  values_[size_t(id)] = v;
}

int Tape::unary(Op op, int a) {
  Node n;
  n.op = op;
  n.a = a;
  return push(n);
}

int Tape::affine(int a, double k, double c) {
  Node n;
  n.op = Op::Affine;
  n.a = a;
  n.k = k;
  n.c = c;
  return push(n);
}

int Tape::recip_c(double c, int a) {
  Node n;
  n.op = Op::RecipC;
  n.a = a;
  n.k = c;
  return push(n);
}

int Tape::div_c(int a, double k) {
  Node n;
  n.op = Op::DivC;
  n.a = a;
  n.k = k;
  return push(n);
}

int Tape::binary(Op op, int a, int b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  return push(n);
}

int Tape::clamp(int a, double lo, double hi) {
  Node n;
  n.op = Op::Clamp;
  n.a = a;
  n.k = lo;
  n.c = hi;
  return push(n);
}

int Tape::dot(std::span<const ArgRef> xs, std::span<const ArgRef> ws) {
  if (xs.size() != ws.size()) throw ArityError("dot operand length mismatch");
  Node n;
  n.op = Op::Dot;
  n.args_begin = int(args_.size());
  n.args_count = int(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    args_.push_back(xs[i]);
    args_.push_back(ws[i]);
  }
  return push(n);
}

void Tape::replay() {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    double v = eval(nodes_[i]);
    values_[i] = v;
    if (!std::isfinite(v)) throw NumericalOverflow(int(i));
  }
}

std::vector<double> Tape::backward(std::span<const int> outputs,
                                   std::span<const double> seed) const {
  if (outputs.size() != seed.size())
    throw ArityError("seed length does not match output arity");
  std::vector<double> adj(nodes_.size(), 0.0);
  for (size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i] >= 0) adj[size_t(outputs[i])] += seed[i];
  }
  auto val = [&](int i) { return values_[size_t(i)]; };
  for (int i = int(nodes_.size()) - 1; i >= 0; --i) {
    double g = adj[size_t(i)];
    if (g == 0.0) continue;
    const Node& n = nodes_[size_t(i)];
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Affine:
        adj[size_t(n.a)] += g * n.k;
        break;
      case Op::Add:
        adj[size_t(n.a)] += g;
        adj[size_t(n.b)] += g;
        break;
      case Op::Sub:
        adj[size_t(n.a)] += g;
        adj[size_t(n.b)] -= g;
        break;
      case Op::Mul:
        adj[size_t(n.a)] += g * val(n.b);
        adj[size_t(n.b)] += g * val(n.a);
        break;
      case Op::Div: {
        double ib = 1.0 / val(n.b);
        adj[size_t(n.a)] += g * ib;
        adj[size_t(n.b)] -= g * val(n.a) * ib * ib;
        break;
      }
      case Op::RecipC:
        adj[size_t(n.a)] -= g * n.k / (val(n.a) * val(n.a));
        break;
      case Op::DivC:
        adj[size_t(n.a)] += g / n.k;
        break;
      case Op::Exp:
        adj[size_t(n.a)] += g * val(i);
        break;
      case Op::Log:
        adj[size_t(n.a)] += g / val(n.a);
        break;
      case Op::Sqrt:
        adj[size_t(n.a)] += g * 0.5 / val(i);
        break;
      case Op::Sin:
        adj[size_t(n.a)] += g * std::cos(val(n.a));
        break;
      case Op::Cos:
        adj[size_t(n.a)] -= g * std::sin(val(n.a));
        break;
      case Op::Tanh: {
        double t = val(i);
        adj[size_t(n.a)] += g * (1.0 - t * t);
        break;
      }
      case Op::Elu: {
        double x = val(n.a);
        // right-hand branch at the breakpoint: slope 1 at x = 0
        adj[size_t(n.a)] += g * (x >= 0.0 ? 1.0 : val(i) + 1.0);
        break;
      }
      case Op::Softplus:
        adj[size_t(n.a)] += g / (1.0 + std::exp(-val(n.a)));
        break;
      case Op::Max: {
        // ties resolve to operand a
        if (val(n.a) >= val(n.b))
          adj[size_t(n.a)] += g;
        else
          adj[size_t(n.b)] += g;
        break;
      }
      case Op::Min: {
        if (val(n.a) <= val(n.b))
          adj[size_t(n.a)] += g;
        else
          adj[size_t(n.b)] += g;
        break;
      }
      case Op::Clamp: {
        // derivative is the right-hand branch's at each breakpoint
        double x = val(n.a);
        if (x >= n.k && x < n.c) adj[size_t(n.a)] += g;
        break;
      }
      case Op::Dot: {
        for (int p = 0; p < n.args_count; ++p) {
          const ArgRef& x = args_[size_t(n.args_begin + 2 * p)];
          const ArgRef& w = args_[size_t(n.args_begin + 2 * p + 1)];
          if (x.id >= 0) adj[size_t(x.id)] += g * argval(w);
          if (w.id >= 0) adj[size_t(w.id)] += g * argval(x);
        }
        break;
      }
    }
  }
  return adj;
}

std::vector<double> Tape::backward(int output) const {
  int outs[1] = {output};
  double seed[1] = {1.0};
  return backward(outs, seed);
}

Var make_var(Tape& t, double v) { return Var(v, t.input(v), &t); }

std::vector<Var> make_vars(Tape& t, std::span<const double> vals) {
  std::vector<Var> out;
  out.reserve(vals.size());
  for (double v : vals) out.push_back(make_var(t, v));
  return out;
}

std::vector<Var> make_consts(std::span<const double> vals) {
  std::vector<Var> out;
  out.reserve(vals.size());
  for (double v : vals) out.emplace_back(v);
  return out;
}

std::vector<double> values_of(std::span<const Var> vars) {
  std::vector<double> out;
  out.reserve(vars.size());
  for (const Var& v : vars) out.push_back(v.v);
  return out;
}

namespace {

Tape* tape_of(const Var& a, const Var& b) {
  if (a.tape && b.tape) {
    assert(a.tape == b.tape && "operands recorded on different tapes");
    return a.tape;
  }
  return a.tape ? a.tape : b.tape;
}

Var lift_binary(Tape::Op op, const Var& a, const Var& b,
                double (*fold)(double, double)) {
  Tape* t = tape_of(a, b);
  if (!t) return Var(fold(a.v, b.v));
  if (a.is_const() && b.is_const()) return Var(fold(a.v, b.v));
  // constant operands become single-use inputs only for ops with no
  // affine shortcut (max/min/div-by-var)
  int ia = a.is_const() ? t->input(a.v) : a.id;
  int ib = b.is_const() ? t->input(b.v) : b.id;
  int id = t->binary(op, ia, ib);
  return Var(t->value(id), id, t);
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  if (a.is_const() && !b.is_const()) {
    int id = b.tape->affine(b.id, 1.0, a.v);
    return Var(b.tape->value(id), id, b.tape);
  }
  if (b.is_const() && !a.is_const()) {
    int id = a.tape->affine(a.id, 1.0, b.v);
    return Var(a.tape->value(id), id, a.tape);
  }
  if (a.is_const() && b.is_const()) return Var(a.v + b.v);
  int id = tape_of(a, b)->binary(Tape::Op::Add, a.id, b.id);
  return Var(a.tape->value(id), id, a.tape);
}

Var operator-(const Var& a, const Var& b) {
  if (b.is_const() && !a.is_const()) {
    int id = a.tape->affine(a.id, 1.0, -b.v);
    return Var(a.tape->value(id), id, a.tape);
  }
  if (a.is_const() && !b.is_const()) {
    int id = b.tape->affine(b.id, -1.0, a.v);
    return Var(b.tape->value(id), id, b.tape);
  }
  if (a.is_const() && b.is_const()) return Var(a.v - b.v);
  int id = tape_of(a, b)->binary(Tape::Op::Sub, a.id, b.id);
  return Var(a.tape->value(id), id, a.tape);
}

Var operator*(const Var& a, const Var& b) {
  if (a.is_const() && !b.is_const()) {
    int id = b.tape->affine(b.id, a.v, 0.0);
    return Var(b.tape->value(id), id, b.tape);
  }
  if (b.is_const() && !a.is_const()) {
    int id = a.tape->affine(a.id, b.v, 0.0);
    return Var(a.tape->value(id), id, a.tape);
  }
  if (a.is_const() && b.is_const()) return Var(a.v * b.v);
  int id = tape_of(a, b)->binary(Tape::Op::Mul, a.id, b.id);
  return Var(a.tape->value(id), id, a.tape);
}

Var operator/(const Var& a, const Var& b) {
  if (b.is_const() && !a.is_const()) {
    int id = a.tape->div_c(a.id, b.v);
    return Var(a.tape->value(id), id, a.tape);
  }
  if (a.is_const() && !b.is_const()) {
    int id = b.tape->recip_c(a.v, b.id);
    return Var(b.tape->value(id), id, b.tape);
  }
  if (a.is_const() && b.is_const()) return Var(a.v / b.v);
  int id = tape_of(a, b)->binary(Tape::Op::Div, a.id, b.id);
  return Var(a.tape->value(id), id, a.tape);
}

Var operator-(const Var& a) {
  if (a.is_const()) return Var(-a.v);
  int id = a.tape->affine(a.id, -1.0, 0.0);
  return Var(a.tape->value(id), id, a.tape);
}

Var& operator+=(Var& a, const Var& b) { return a = a + b; }
Var& operator-=(Var& a, const Var& b) { return a = a - b; }
Var& operator*=(Var& a, const Var& b) { return a = a * b; }

namespace {

Var lift_unary(Tape::Op op, const Var& a, double (*fold)(double)) {
  if (a.is_const()) return Var(fold(a.v));
  int id = a.tape->unary(op, a.id);
  return Var(a.tape->value(id), id, a.tape);
}

}  // namespace

Var exp(const Var& a) {
  return lift_unary(Tape::Op::Exp, a, +[](double x) { return std::exp(x); });
}
Var log(const Var& a) {
  return lift_unary(Tape::Op::Log, a, +[](double x) { return std::log(x); });
}
Var sqrt(const Var& a) {
  return lift_unary(Tape::Op::Sqrt, a, +[](double x) { return std::sqrt(x); });
}
Var sin(const Var& a) {
  return lift_unary(Tape::Op::Sin, a, +[](double x) { return std::sin(x); });
}
Var cos(const Var& a) {
  return lift_unary(Tape::Op::Cos, a, +[](double x) { return std::cos(x); });
}
Var tanh(const Var& a) {
  return lift_unary(Tape::Op::Tanh, a, +[](double x) { return std::tanh(x); });
}
Var elu(const Var& a) { return lift_unary(Tape::Op::Elu, a, &elu_fwd); }
Var softplus(const Var& a) {
  return lift_unary(Tape::Op::Softplus, a, &softplus_fwd);
}

Var max(const Var& a, const Var& b) {
  return lift_binary(Tape::Op::Max, a, b,
                     +[](double x, double y) { return x >= y ? x : y; });
}
Var min(const Var& a, const Var& b) {
  return lift_binary(Tape::Op::Min, a, b,
                     +[](double x, double y) { return x <= y ? x : y; });
}

Var clamp(const Var& a, double lo, double hi) {
  if (a.is_const()) return Var(a.v < lo ? lo : (a.v > hi ? hi : a.v));
  int id = a.tape->clamp(a.id, lo, hi);
  return Var(a.tape->value(id), id, a.tape);
}

Var square(const Var& a) { return a * a; }

Var dot(std::span<const Var> xs, std::span<const Var> ws) {
  if (xs.size() != ws.size()) throw ArityError("dot operand length mismatch");
  Tape* t = nullptr;
  for (const Var& v : xs)
    if (v.tape) t = v.tape;
  for (const Var& v : ws)
    if (v.tape) t = v.tape;
  if (!t) {
    double s = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) s += xs[i].v * ws[i].v;
    return Var(s);
  }
  std::vector<Tape::ArgRef> ax(xs.size()), aw(ws.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    ax[i] = xs[i].is_const() ? Tape::ArgRef{-1, xs[i].v}
                             : Tape::ArgRef{xs[i].id, 0.0};
    aw[i] = ws[i].is_const() ? Tape::ArgRef{-1, ws[i].v}
                             : Tape::ArgRef{ws[i].id, 0.0};
  }
  int id = t->dot(ax, aw);
  return Var(t->value(id), id, t);
}

Var stop_gradient(const Var& v) { return Var(v.v); }

std::vector<double> gradient_at(const std::vector<double>& adjoints,
                                std::span<const int> ids) {
  std::vector<double> g;
  g.reserve(ids.size());
  for (int id : ids) g.push_back(id >= 0 ? adjoints[size_t(id)] : 0.0);
  return g;
}

Recording record(const Program& program, std::span<const double> inputs) {
  Recording rec;
  std::vector<Var> in;
  in.reserve(inputs.size());
  for (double v : inputs) {
    int id = rec.tape.input(v);
    rec.input_ids.push_back(id);
    in.emplace_back(v, id, &rec.tape);
  }
  std::vector<Var> out = program(rec.tape, in);
  for (const Var& o : out) {
    rec.output_ids.push_back(o.is_const() ? -1 : o.id);
    rec.outputs.push_back(o.v);
  }
  return rec;
}

std::vector<double> backward(const Recording& rec,
                             std::span<const double> seed) {
  if (seed.size() != rec.output_ids.size())
    throw ArityError("seed length does not match output arity");
  std::vector<double> adj = rec.tape.backward(rec.output_ids, seed);
  return gradient_at(adj, rec.input_ids);
}

std::vector<double> finite_diff_grad(const RealFn& fn,
                                     std::span<const double> point,
                                     double eps) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + eps;
    double fp = fn(x);
    x[i] = orig - eps;
    double fm = fn(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

std::vector<std::vector<double>> jacobian(const Program& program,
                                          std::span<const double> point) {
  Recording rec = record(program, point);
  size_t rows = rec.output_ids.size();
  std::vector<std::vector<double>> jac(rows);
  std::vector<double> seed(rows, 0.0);
  for (size_t r = 0; r < rows; ++r) {
    seed[r] = 1.0;
    jac[r] = backward(rec, seed);
    seed[r] = 0.0;
  }
  return jac;
}

double matrix_norm(const std::vector<std::vector<double>>& m, JacNorm kind) {
  if (m.empty() || m[0].empty()) return 0.0;
  if (kind == JacNorm::Frobenius) {
    double s = 0.0;
    for (const auto& row : m)
      for (double v : row) s += v * v;
    return std::sqrt(s);
  }
  // operator-2 norm via power iteration on J^T J
  size_t cols = m[0].size();
  std::vector<double> x(cols, 1.0 / std::sqrt(double(cols)));
  double lam = 0.0;
  for (int it = 0; it < 100; ++it) {
    std::vector<double> jx(m.size(), 0.0);
    for (size_t r = 0; r < m.size(); ++r)
      for (size_t c = 0; c < cols; ++c) jx[r] += m[r][c] * x[c];
    std::vector<double> y(cols, 0.0);
    for (size_t r = 0; r < m.size(); ++r)
      for (size_t c = 0; c < cols; ++c) y[c] += m[r][c] * jx[r];
    double ny = 0.0;
    for (double v : y) ny += v * v;
    ny = std::sqrt(ny);
    if (ny == 0.0) return 0.0;
    double lam_new = ny;
    for (size_t c = 0; c < cols; ++c) x[c] = y[c] / ny;
    if (std::abs(lam_new - lam) < 1e-12 * std::max(1.0, lam_new)) {
      lam = lam_new;
      break;
    }
    lam = lam_new;
  }
  return std::sqrt(lam);
}

double jacobian_norm(const Program& sub, std::span<const double> point,
                     JacNorm kind, std::span<const double> row_scale) {
  std::vector<std::vector<double>> jac = jacobian(sub, point);
  if (!row_scale.empty()) {
    for (size_t r = 0; r < jac.size() && r < row_scale.size(); ++r)
      for (double& v : jac[r]) v *= row_scale[r];
  }
  return matrix_norm(jac, kind);
}

}  // namespace diffrl::ad
