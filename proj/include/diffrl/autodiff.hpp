#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffrl::ad {

struct NumericalOverflow : std::runtime_error {
  explicit NumericalOverflow(int node_index)
      : std::runtime_error("non-finite value at tape node " +
                           std::to_string(node_index)),
        node(node_index) {}
  int node;
};

struct ArityError : std::runtime_error {
  explicit ArityError(const std::string& what) : std::runtime_error(what) {}
};

// Append-only Wengert list. Nodes are recorded in topological order; a
// backward pass visits each node exactly once, in reverse.
class Tape {
 public:
  enum class Op : uint8_t {
    Input,
    Affine,    // k*a + c
    Add,
    Sub,
    Mul,
    Div,
    RecipC,    // c / a
    DivC,      // a / k
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Elu,
    Softplus,
    Max,       // max(a, b); ties take a
    Min,       // min(a, b); ties take a
    Clamp,     // clamp(a, k, c)
    Dot,       // sum over arg pairs (x_i, w_i)
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double k = 0.0;  // Affine slope / clamp lo / RecipC numerator
    double c = 0.0;  // Affine offset / clamp hi
    int args_begin = 0;
    int args_count = 0;  // number of (x, w) pairs for Dot
  };

  // An operand of a fused node: a tape node or an inlined constant.
  struct ArgRef {
    int id = -1;
    double c = 0.0;
  };

  int input(double v);
  int unary(Op op, int a);
  int affine(int a, double k, double c);
  int recip_c(double c, int a);
  int div_c(int a, double k);
  int binary(Op op, int a, int b);
  int clamp(int a, double lo, double hi);
  int dot(std::span<const ArgRef> xs, std::span<const ArgRef> ws);

  double value(int id) const { return values_[size_t(id)]; }
  size_t size() const { return nodes_.size(); }

  // Recomputes every node value from the recorded structure.
  void replay();

  // Vector-Jacobian product: seeds the given output nodes and returns the
  // adjoint of every node. Unused inputs get exactly 0.
  std::vector<double> backward(std::span<const int> outputs,
                               std::span<const double> seed) const;

  // Adjoint of a single scalar output with seed 1.
  std::vector<double> backward(int output) const;

  void set_input(int id, double v);

 private:
  int push(Node n);
  double eval(const Node& n) const;
  double argval(const ArgRef& r) const { return r.id >= 0 ? values_[size_t(r.id)] : r.c; }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<ArgRef> args_;
};

// Scalar on a tape; id < 0 marks a constant, which contributes zero gradient.
struct Var {
  double v = 0.0;
  int id = -1;
  Tape* tape = nullptr;

  Var() = default;
  Var(double c) : v(c) {}  // NOLINT: implicit constant lift is the point
  Var(double value, int node_id, Tape* t) : v(value), id(node_id), tape(t) {}

  bool is_const() const { return id < 0; }
};

Var make_var(Tape& t, double v);
std::vector<Var> make_vars(Tape& t, std::span<const double> vals);
std::vector<Var> make_consts(std::span<const double> vals);
std::vector<double> values_of(std::span<const Var> vars);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var& operator+=(Var& a, const Var& b);
Var& operator-=(Var& a, const Var& b);
Var& operator*=(Var& a, const Var& b);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var elu(const Var& a);
Var softplus(const Var& a);
Var max(const Var& a, const Var& b);
Var min(const Var& a, const Var& b);
Var clamp(const Var& a, double lo, double hi);
Var square(const Var& a);
Var dot(std::span<const Var> xs, std::span<const Var> ws);

// Forward value unchanged; the backward contribution through this edge is 0.
Var stop_gradient(const Var& v);

// Gradients of `ids` read out of a full adjoint vector.
std::vector<double> gradient_at(const std::vector<double>& adjoints,
                                std::span<const int> ids);

using Program =
    std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

struct Recording {
  Tape tape;
  std::vector<int> input_ids;
  std::vector<int> output_ids;
  std::vector<double> outputs;
};

Recording record(const Program& program, std::span<const double> inputs);

// seed^T * J of the recorded program, w.r.t. its inputs.
std::vector<double> backward(const Recording& rec, std::span<const double> seed);

using RealFn = std::function<double(std::span<const double>)>;
using VectorFn = std::function<std::vector<double>(std::span<const double>)>;

// Central differences, the module's independent test oracle.
std::vector<double> finite_diff_grad(const RealFn& fn,
                                     std::span<const double> point, double eps);

enum class JacNorm { Frobenius, Operator2 };

// Dense Jacobian of a recorded vector function, one backward pass per row.
std::vector<std::vector<double>> jacobian(const Program& program,
                                          std::span<const double> point);

double matrix_norm(const std::vector<std::vector<double>>& m, JacNorm kind);

// Frobenius (or operator-2) norm of the Jacobian of `sub` at `point`,
// optionally with per-row scaling. Returns 0 for an all-zero Jacobian.
double jacobian_norm(const Program& sub, std::span<const double> point,
                     JacNorm kind = JacNorm::Frobenius,
                     std::span<const double> row_scale = {});

}  // namespace diffrl::ad
