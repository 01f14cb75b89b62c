// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aewc {

/// Raised when a computation produces NaN/Inf or an embedding collapses to zero.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);

  std::size_t size() const noexcept { return values.size(); }
  double item() const;
  std::span<const double> view() const noexcept { return values; }
};

std::size_t shape_product(std::span<const std::size_t> shape);

/// Flat parameter store with a named, contiguous segment layout.
class ParamVector {
 public:
  struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;
    std::size_t size() const { return shape_product(shape); }
  };

  ParamVector() = default;

  /// Appends a zero-initialized segment; names must be unique.
  std::span<double> add_segment(const std::string& name, std::vector<std::size_t> shape);

  bool has_segment(std::string_view name) const;
  const Segment& segment(std::string_view name) const;
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Checks that segments tile the value range and every value is finite.
  void validate() const;

  /// Same segment layout (names, offsets, shapes).
  bool same_layout(const ParamVector& other) const;

  bool operator==(const ParamVector& other) const;

 private:
  std::vector<Segment> segments_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<double> values_;
};

struct GradVector {
  std::vector<double> values;
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  double item() const;
  bool valid() const noexcept { return tape != nullptr && id >= 0; }
};

/// Identifies a parameter vector bound to a tape.
struct Source {
  int id = -1;
};

/// Reverse-mode tape over a small set of tensor operations.
///
/// Every forward op checks its output for non-finite values and throws
/// NumericError naming the op. Parameter sources are bound by const
/// reference and must outlive the tape. `backward` may be called repeatedly
/// (e.g. once per random projection when estimating a Fisher diagonal);
/// each call resets all gradients first.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Source bind(const ParamVector& params);

  Var constant(Tensor t);
  /// Copy of one parameter segment; memoized per (source, segment).
  Var param(Source src, std::string_view segment);
  /// Rows of an embedding table, shape [n, dim].
  Var embedding(Source src, std::string_view table, std::span<const std::size_t> ids);
  /// Mean over rows of a [n, dim] matrix.
  Var mean_pool(Var x);
  /// [m, n] matrix times [n] vector.
  Var matmul(Var w, Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product (shapes must match).
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var tanh(Var a);
  /// Scalar cosine similarity; zero-norm inputs throw "degenerate embedding".
  Var cosine(Var a, Var b);
  Var mse(Var a, Var b);
  Var dot(Var a, Var b);
  /// 0.5 * sum_i weights_i * (theta_i - anchor_i)^2 over a whole bound source.
  Var quadratic_penalty(Source src, std::span<const double> anchor, std::span<const double> weights);

  void backward(Var out);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() output with respect to a bound source.
  const std::vector<double>& grad(Source src) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Constant, Param, Embedding, MeanPool, MatMul, Add, Sub, Mul, Scale, Tanh,
    Cosine, Mse, Dot, Quadratic
  };

  struct Node {
    Op op = Op::Constant;
    int a = -1;
    int b = -1;
    double c = 0.0;
    int src = -1;
    std::size_t offset = 0;
    std::vector<std::size_t> ids;
    std::span<const double> anchor;
    std::span<const double> weights;
    Tensor value;
  };

  struct Binding {
    const ParamVector* params = nullptr;
    std::vector<double> grad;
    std::map<std::string, int, std::less<>> leaves;
  };

  Var push(Node node, const char* op_name);
  const Node& node(Var v) const;
  static const char* op_name(Op op);

  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  std::vector<std::vector<double>> adjoints_;
};

/// Builds a scalar loss on the tape from a bound parameter source.
using LossFn = std::function<Var(Tape&, Source)>;

struct ValueAndGrad {
  double value = 0.0;
  GradVector grad;
};

double evaluate(const LossFn& loss, const ParamVector& theta);
ValueAndGrad value_and_grad(const LossFn& loss, const ParamVector& theta);

/// Central differences, one coordinate at a time.
GradVector finite_diff_grad(const LossFn& loss, const ParamVector& theta, double h);

double cosine(std::span<const double> u, std::span<const double> v);
double mse(std::span<const double> u, std::span<const double> v);
double dot(std::span<const double> u, std::span<const double> v);

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

}  // namespace aewc
