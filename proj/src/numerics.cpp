// SPDX-License-Identifier: Apache-2.0
#include "aewc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace aewc {

namespace {

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
  }
  if (shape_product(shape) != values.size()) {
    throw std::invalid_argument("tensor shape does not match value count");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

double Tensor::item() const {
  if (values.size() != 1) throw std::logic_error("item() on a non-scalar tensor");
  return values[0];
}

// ---------------------------------------------------------------------------
// ParamVector

std::span<double> ParamVector::add_segment(const std::string& name, std::vector<std::size_t> shape) {
  if (index_.count(name)) throw std::invalid_argument("duplicate segment: " + name);
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("segment dimensions must be positive: " + name);
  }
  Segment seg{name, values_.size(), std::move(shape)};
  const auto n = seg.size();
  index_.emplace(name, segments_.size());
  segments_.push_back(std::move(seg));
  values_.resize(values_.size() + n, 0.0);
  return std::span<double>(values_).subspan(segments_.back().offset, n);
}

bool ParamVector::has_segment(std::string_view name) const { return index_.find(name) != index_.end(); }

const ParamVector::Segment& ParamVector::segment(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter segment: " + std::string(name));
  return segments_[it->second];
}

std::span<double> ParamVector::view(std::string_view name) {
  const auto& seg = segment(name);
  return std::span<double>(values_).subspan(seg.offset, seg.size());
}

std::span<const double> ParamVector::view(std::string_view name) const {
  const auto& seg = segment(name);
  return std::span<const double>(values_).subspan(seg.offset, seg.size());
}

void ParamVector::validate() const {
  std::size_t cursor = 0;
  for (const auto& seg : segments_) {
    if (seg.offset != cursor) throw std::logic_error("parameter segments do not tile: " + seg.name);
    cursor += seg.size();
  }
  if (cursor != values_.size()) throw std::logic_error("parameter segments do not cover the vector");
  if (!all_finite(values_)) throw NumericError("non-finite parameter value");
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& a = segments_[i];
    const auto& b = other.segments_[i];
    if (a.name != b.name || a.offset != b.offset || a.shape != b.shape) return false;
  }
  return values_.size() == other.values_.size();
}

bool ParamVector::operator==(const ParamVector& other) const {
  if (!same_layout(other)) return false;
  // bitwise comparison: distinguishes -0.0 from 0.0
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (std::memcmp(&values_[i], &other.values_[i], sizeof(double)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(*this); }
double Var::item() const { return value().item(); }

Source Tape::bind(const ParamVector& params) {
  Binding b;
  b.params = &params;
  bindings_.push_back(std::move(b));
  return Source{static_cast<int>(bindings_.size()) - 1};
}

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::Embedding: return "embedding";
    case Op::MeanPool: return "mean_pool";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Tanh: return "tanh";
    case Op::Cosine: return "cosine";
    case Op::Mse: return "mse";
    case Op::Dot: return "dot";
    case Op::Quadratic: return "quadratic_penalty";
  }
  return "unknown";
}

Var Tape::push(Node n, const char* name) {
  if (!all_finite(n.value.values)) {
    throw NumericError(std::string("non-finite value produced by ") + name);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::logic_error("variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const std::vector<double>& Tape::grad(Source src) const {
  return bindings_.at(static_cast<std::size_t>(src.id)).grad;
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(t);
  return push(std::move(n), "constant");
}

Var Tape::param(Source src, std::string_view segment) {
  auto& binding = bindings_.at(static_cast<std::size_t>(src.id));
  if (auto it = binding.leaves.find(segment); it != binding.leaves.end()) {
    return Var{this, it->second};
  }
  const auto& seg = binding.params->segment(segment);
  auto view = binding.params->view(segment);
  Node n;
  n.op = Op::Param;
  n.src = src.id;
  n.offset = seg.offset;
  n.value = Tensor(seg.shape, std::vector<double>(view.begin(), view.end()));
  Var v = push(std::move(n), "param");
  binding.leaves.emplace(std::string(segment), v.id);
  return v;
}

Var Tape::embedding(Source src, std::string_view table, std::span<const std::size_t> ids) {
  const auto& binding = bindings_.at(static_cast<std::size_t>(src.id));
  const auto& seg = binding.params->segment(table);
  if (seg.shape.size() != 2) throw std::invalid_argument("embedding table must be 2-D");
  if (ids.empty()) throw std::invalid_argument("embedding lookup needs at least one id");
  const auto rows = seg.shape[0];
  const auto dim = seg.shape[1];
  auto view = binding.params->view(table);
  std::vector<double> out;
  out.reserve(ids.size() * dim);
  for (auto id : ids) {
    if (id >= rows) {
      throw std::out_of_range("token id " + std::to_string(id) + " out of range for vocab of " +
                              std::to_string(rows));
    }
    auto row = view.subspan(id * dim, dim);
    out.insert(out.end(), row.begin(), row.end());
  }
  Node n;
  n.op = Op::Embedding;
  n.src = src.id;
  n.offset = seg.offset;
  n.c = static_cast<double>(dim);
  n.ids.assign(ids.begin(), ids.end());
  n.value = Tensor({ids.size(), dim}, std::move(out));
  return push(std::move(n), "embedding");
}

Var Tape::mean_pool(Var x) {
  const auto& xv = value(x);
  if (xv.shape.size() != 2) throw std::invalid_argument("mean_pool expects a [n, dim] matrix");
  const auto rows = xv.shape[0];
  const auto dim = xv.shape[1];
  std::vector<double> out(dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dim; ++j) out[j] += xv.values[r * dim + j];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  for (auto& o : out) o *= inv;
  Node n;
  n.op = Op::MeanPool;
  n.a = x.id;
  n.value = Tensor::vector(std::move(out));
  return push(std::move(n), "mean_pool");
}

Var Tape::matmul(Var w, Var x) {
  const auto& wv = value(w);
  const auto& xv = value(x);
  if (wv.shape.size() != 2) throw std::invalid_argument("matmul expects a 2-D matrix");
  const auto m = wv.shape[0];
  const auto k = wv.shape[1];
  require_same_size(k, xv.size(), "matmul");
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = wv.values.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * xv.values[j];
    out[i] = acc;
  }
  Node n;
  n.op = Op::MatMul;
  n.a = w.id;
  n.b = x.id;
  n.value = Tensor::vector(std::move(out));
  return push(std::move(n), "matmul");
}

Var Tape::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_same_size(av.size(), bv.size(), "add");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av.values[i] + bv.values[i];
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(av.shape, std::move(out));
  return push(std::move(n), "add");
}

Var Tape::sub(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_same_size(av.size(), bv.size(), "sub");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av.values[i] - bv.values[i];
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(av.shape, std::move(out));
  return push(std::move(n), "sub");
}

Var Tape::mul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_same_size(av.size(), bv.size(), "mul");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av.values[i] * bv.values[i];
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(av.shape, std::move(out));
  return push(std::move(n), "mul");
}

Var Tape::scale(Var a, double c) {
  const auto& av = value(a);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av.values[i];
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.c = c;
  n.value = Tensor(av.shape, std::move(out));
  return push(std::move(n), "scale");
}

Var Tape::tanh(Var a) {
  const auto& av = value(a);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av.values[i]);
  Node n;
  n.op = Op::Tanh;
  n.a = a.id;
  n.value = Tensor(av.shape, std::move(out));
  return push(std::move(n), "tanh");
}

Var Tape::cosine(Var a, Var b) {
  const double c = aewc::cosine(value(a).values, value(b).values);
  Node n;
  n.op = Op::Cosine;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::scalar(c);
  return push(std::move(n), "cosine");
}

Var Tape::mse(Var a, Var b) {
  const double m = aewc::mse(value(a).values, value(b).values);
  Node n;
  n.op = Op::Mse;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::scalar(m);
  return push(std::move(n), "mse");
}

Var Tape::dot(Var a, Var b) {
  const double d = aewc::dot(value(a).values, value(b).values);
  Node n;
  n.op = Op::Dot;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::scalar(d);
  return push(std::move(n), "dot");
}

Var Tape::quadratic_penalty(Source src, std::span<const double> anchor, std::span<const double> weights) {
  const auto& theta = bindings_.at(static_cast<std::size_t>(src.id)).params->values();
  require_same_size(theta.size(), anchor.size(), "quadratic_penalty");
  require_same_size(theta.size(), weights.size(), "quadratic_penalty");
  double acc = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - anchor[i];
    acc += weights[i] * d * d;
  }
  Node n;
  n.op = Op::Quadratic;
  n.src = src.id;
  n.anchor = anchor;
  n.weights = weights;
  n.value = Tensor::scalar(0.5 * acc);
  return push(std::move(n), "quadratic_penalty");
}

void Tape::backward(Var out) {
  const auto& root = node(out);
  if (root.value.size() != 1) throw std::logic_error("backward() needs a scalar output");

  for (auto& b : bindings_) b.grad.assign(b.params->size(), 0.0);
  adjoints_.assign(nodes_.size(), {});
  adjoints_[static_cast<std::size_t>(out.id)] = {1.0};

  auto accumulate = [this](int id, std::size_t i, double g) {
    auto& adj = adjoints_[static_cast<std::size_t>(id)];
    if (adj.empty()) adj.assign(nodes_[static_cast<std::size_t>(id)].value.size(), 0.0);
    adj[i] += g;
  };

  for (int id = out.id; id >= 0; --id) {
    auto& adj = adjoints_[static_cast<std::size_t>(id)];
    if (adj.empty()) continue;
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Param: {
        auto& g = bindings_[static_cast<std::size_t>(n.src)].grad;
        for (std::size_t i = 0; i < adj.size(); ++i) g[n.offset + i] += adj[i];
        break;
      }
      case Op::Embedding: {
        auto& g = bindings_[static_cast<std::size_t>(n.src)].grad;
        const auto dim = static_cast<std::size_t>(n.c);
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          const auto base = n.offset + n.ids[r] * dim;
          for (std::size_t j = 0; j < dim; ++j) g[base + j] += adj[r * dim + j];
        }
        break;
      }
      case Op::MeanPool: {
        const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto rows = xv.shape[0];
        const auto dim = xv.shape[1];
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < dim; ++j) accumulate(n.a, r * dim + j, adj[j] * inv);
        }
        break;
      }
      case Op::MatMul: {
        const auto& wv = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto& xv = nodes_[static_cast<std::size_t>(n.b)].value;
        const auto m = wv.shape[0];
        const auto k = wv.shape[1];
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = adj[i];
          if (gi == 0.0) continue;
          for (std::size_t j = 0; j < k; ++j) {
            accumulate(n.a, i * k + j, gi * xv.values[j]);
            accumulate(n.b, j, gi * wv.values[i * k + j]);
          }
        }
        break;
      }
      case Op::Add:
        for (std::size_t i = 0; i < adj.size(); ++i) {
          accumulate(n.a, i, adj[i]);
          accumulate(n.b, i, adj[i]);
        }
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < adj.size(); ++i) {
          accumulate(n.a, i, adj[i]);
          accumulate(n.b, i, -adj[i]);
        }
        break;
      case Op::Mul: {
        const auto& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto& bv = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t i = 0; i < adj.size(); ++i) {
          accumulate(n.a, i, adj[i] * bv.values[i]);
          accumulate(n.b, i, adj[i] * av.values[i]);
        }
        break;
      }
      case Op::Scale:
        for (std::size_t i = 0; i < adj.size(); ++i) accumulate(n.a, i, n.c * adj[i]);
        break;
      case Op::Tanh:
        for (std::size_t i = 0; i < adj.size(); ++i) {
          const double t = n.value.values[i];
          accumulate(n.a, i, adj[i] * (1.0 - t * t));
        }
        break;
      case Op::Cosine: {
        // d cos / du = v / (|u||v|) - cos * u / |u|^2; exactly zero when u == v bitwise.
        const auto& u = nodes_[static_cast<std::size_t>(n.a)].value.values;
        const auto& v = nodes_[static_cast<std::size_t>(n.b)].value.values;
        const double uu = aewc::dot(u, u);
        const double vv = aewc::dot(v, v);
        const double denom = std::sqrt(uu * vv);
        const double c = n.value.values[0];
        const double g = adj[0];
        for (std::size_t i = 0; i < u.size(); ++i) {
          accumulate(n.a, i, g * (v[i] / denom - c * u[i] / uu));
          accumulate(n.b, i, g * (u[i] / denom - c * v[i] / vv));
        }
        break;
      }
      case Op::Mse: {
        const auto& u = nodes_[static_cast<std::size_t>(n.a)].value.values;
        const auto& v = nodes_[static_cast<std::size_t>(n.b)].value.values;
        const double k = 2.0 * adj[0] / static_cast<double>(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
          const double d = u[i] - v[i];
          accumulate(n.a, i, k * d);
          accumulate(n.b, i, -k * d);
        }
        break;
      }
      case Op::Dot: {
        const auto& u = nodes_[static_cast<std::size_t>(n.a)].value.values;
        const auto& v = nodes_[static_cast<std::size_t>(n.b)].value.values;
        for (std::size_t i = 0; i < u.size(); ++i) {
          accumulate(n.a, i, adj[0] * v[i]);
          accumulate(n.b, i, adj[0] * u[i]);
        }
        break;
      }
      case Op::Quadratic: {
        auto& binding = bindings_[static_cast<std::size_t>(n.src)];
        const auto& theta = binding.params->values();
        for (std::size_t i = 0; i < theta.size(); ++i) {
          binding.grad[i] += adj[0] * n.weights[i] * (theta[i] - n.anchor[i]);
        }
        break;
      }
    }
  }
  for (const auto& b : bindings_) {
    if (!all_finite(b.grad)) throw NumericError("non-finite gradient");
  }
}

// ---------------------------------------------------------------------------

double evaluate(const LossFn& loss, const ParamVector& theta) {
  Tape tape;
  auto src = tape.bind(theta);
  return loss(tape, src).item();
}

ValueAndGrad value_and_grad(const LossFn& loss, const ParamVector& theta) {
  Tape tape;
  auto src = tape.bind(theta);
  Var out = loss(tape, src);
  tape.backward(out);
  return {out.item(), GradVector{tape.grad(src)}};
}

GradVector finite_diff_grad(const LossFn& loss, const ParamVector& theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  ParamVector probe = theta;
  GradVector g;
  g.values.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + h;
    const double plus = evaluate(loss, probe);
    probe.values()[i] = orig - h;
    const double minus = evaluate(loss, probe);
    probe.values()[i] = orig;
    g.values[i] = (plus - minus) / (2.0 * h);
  }
  return g;
}

double dot(std::span<const double> u, std::span<const double> v) {
  require_same_size(u.size(), v.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  require_same_size(u.size(), v.size(), "cosine");
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  if (uu == 0.0 || vv == 0.0) throw NumericError("degenerate embedding");
  // sqrt(uu * vv) rather than sqrt(uu) * sqrt(vv): identical inputs give exactly 1.
  const double c = dot(u, v) / std::sqrt(uu * vv);
  return std::clamp(c, -1.0, 1.0);
}

double mse(std::span<const double> u, std::span<const double> v) {
  require_same_size(u.size(), v.size(), "mse");
  if (u.empty()) throw std::invalid_argument("mse of empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(u.size());
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  require_same_size(a.size(), b.size(), "max_relative_error");
  double diff = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

}  // namespace aewc
