#include "attnhtr/autodiff.hpp"

#include <cmath>
#include <limits>

#include "attnhtr/error.hpp"

namespace attnhtr::ad {

// ---- ParameterStore -------------------------------------------------------

Parameter& ParameterStore::create(const std::string& name, Matrix init, bool trainable) {
  require(!contains(name), ErrorCode::InvalidConfig, "duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->trainable = trainable;
  p->zero_grad();
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::InvalidConfig, "unknown parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::InvalidConfig, "unknown parameter '" + name + "'");
  return *params_[it->second];
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) != 0; }

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (auto& p : params_) {
    if (p->name.rfind(prefix, 0) == 0 && p->name.find("running_") == std::string::npos) {
      p->trainable = trainable;
    }
  }
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---- Tape -----------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  if (grad_enabled_ && p.trainable) {
    n.requires_grad = true;
    n.param = &p;
  }
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.valid() && nodes_[v.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.valid() && nodes_[v.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& loss) {
  require(loss.tape() == this, ErrorCode::DimensionMismatch, "loss belongs to another tape");
  require(loss.rows() == 1 && loss.cols() == 1, ErrorCode::DimensionMismatch,
          "backward() needs a scalar loss");
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(n.grad);
    }
  }
}

Matrix Tape::gradient(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---- helpers ----------------------------------------------------------------

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.tape() == b.tape(), ErrorCode::DimensionMismatch, std::string(op) + ": mixed tapes");
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::DimensionMismatch,
          std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()));
}

}  // namespace

// ---- elementwise / structural ----------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape* t = a.tape();
  return t->record(a.value() + b.value(), {a, b}, [t, a, b](const Matrix& g) {
    t->accumulate(a, g);
    t->accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape* t = a.tape();
  return t->record(a.value() - b.value(), {a, b}, [t, a, b](const Matrix& g) {
    t->accumulate(a, g);
    t->accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tape* t = a.tape();
  return t->record(a.value().cwiseProduct(b.value()), {a, b}, [t, a, b](const Matrix& g) {
    if (t->requires_grad(a)) t->accumulate(a, g.cwiseProduct(b.value()));
    if (t->requires_grad(b)) t->accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  Tape* t = a.tape();
  return t->record(a.value() * s, {a}, [t, a, s](const Matrix& g) { t->accumulate(a, g * s); });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::DimensionMismatch,
          "add_row: bias width mismatch");
  Tape* t = a.tape();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t->record(std::move(out), {a, row}, [t, a, row](const Matrix& g) {
    t->accumulate(a, g);
    if (t->requires_grad(row)) t->accumulate(row, g.colwise().sum());
  });
}

Var add_const(const Var& a, const Matrix& c) {
  require(c.rows() == a.rows() && c.cols() == a.cols(), ErrorCode::DimensionMismatch,
          "add_const: shape mismatch");
  Tape* t = a.tape();
  return t->record(a.value() + c, {a}, [t, a](const Matrix& g) { t->accumulate(a, g); });
}

Var mul_const(const Var& a, const Matrix& c) {
  require(c.rows() == a.rows() && c.cols() == a.cols(), ErrorCode::DimensionMismatch,
          "mul_const: shape mismatch");
  Tape* t = a.tape();
  return t->record(a.value().cwiseProduct(c), {a},
                   [t, a, c](const Matrix& g) { t->accumulate(a, g.cwiseProduct(c)); });
}

Var scale_rows(const Var& a, const Eigen::VectorXd& factors) {
  require(factors.size() == a.rows(), ErrorCode::DimensionMismatch, "scale_rows: length mismatch");
  Tape* t = a.tape();
  Matrix out = factors.asDiagonal() * a.value();
  return t->record(std::move(out), {a}, [t, a, factors](const Matrix& g) {
    t->accumulate(a, factors.asDiagonal() * g);
  });
}

Var tanh(const Var& a) {
  Tape* t = a.tape();
  Matrix y = a.value().array().tanh().matrix();
  return t->record(y, {a}, [t, a, y](const Matrix& g) {
    t->accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sigmoid(const Var& a) {
  Tape* t = a.tape();
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t->record(y, {a}, [t, a, y](const Matrix& g) {
    t->accumulate(a, g.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var relu(const Var& a) {
  Tape* t = a.tape();
  return t->record(a.value().cwiseMax(0.0), {a}, [t, a](const Matrix& g) {
    t->accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), ErrorCode::DimensionMismatch, "matmul: inner dimension mismatch");
  Tape* t = a.tape();
  return t->record(a.value() * b.value(), {a, b}, [t, a, b](const Matrix& g) {
    if (t->requires_grad(a)) t->accumulate(a, g * b.value().transpose());
    if (t->requires_grad(b)) t->accumulate(b, a.value().transpose() * g);
  });
}

Var linear(const Var& x, const Var& weight) {
  require(x.cols() == weight.cols(), ErrorCode::DimensionMismatch,
          "linear: input width " + std::to_string(x.cols()) + " vs weight " +
              std::to_string(weight.cols()));
  Tape* t = x.tape();
  return t->record(x.value() * weight.value().transpose(), {x, weight},
                   [t, x, weight](const Matrix& g) {
                     if (t->requires_grad(x)) t->accumulate(x, g * weight.value());
                     if (t->requires_grad(weight)) t->accumulate(weight, g.transpose() * x.value());
                   });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::DimensionMismatch, "concat_cols: no inputs");
  Tape* t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, ErrorCode::DimensionMismatch, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t->record(std::move(out), parts, [t, parts](const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      if (t->requires_grad(p)) t->accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorCode::DimensionMismatch,
          "slice_cols: out of range");
  Tape* t = a.tape();
  return t->record(a.value().middleCols(start, count), {a},
                   [t, a, start, count](const Matrix& g) {
                     Matrix full = Matrix::Zero(a.rows(), a.cols());
                     full.middleCols(start, count) = g;
                     t->accumulate(a, full);
                   });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == a.value().size(), ErrorCode::DimensionMismatch, "reshape: size mismatch");
  Tape* t = a.tape();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return t->record(std::move(out), {a}, [t, a](const Matrix& g) {
    t->accumulate(a, Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols()));
  });
}

Var sum(const Var& a) {
  Tape* t = a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t->record(std::move(out), {a}, [t, a](const Matrix& g) {
    t->accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    // Vectorized exp of -inf yields a denormal, not 0; masked slots must be exact zeros.
    const auto shifted = logits.row(r).array() - m;
    const Eigen::ArrayXXd e = (shifted == -std::numeric_limits<double>::infinity()).select(0.0, shifted.exp());
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

Var softmax_rows(const Var& a) {
  Tape* t = a.tape();
  Matrix y = softmax(a.value());
  return t->record(y, {a}, [t, a, y](const Matrix& g) {
    Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix ga = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    t->accumulate(a, ga);
  });
}

Var repeat_rows(const Var& a, Eigen::Index n) {
  Tape* t = a.tape();
  const Eigen::Index b = a.rows();
  Matrix out(b * n, a.cols());
  for (Eigen::Index r = 0; r < b; ++r) out.middleRows(r * n, n) = a.value().row(r).replicate(n, 1);
  return t->record(std::move(out), {a}, [t, a, n](const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) ga.row(r) = g.middleRows(r * n, n).colwise().sum();
    t->accumulate(a, ga);
  });
}

Var select_position(const Var& a, Eigen::Index n, Eigen::Index index) {
  require(n > 0 && a.rows() % n == 0 && index >= 0 && index < n, ErrorCode::DimensionMismatch,
          "select_position: bad layout");
  Tape* t = a.tape();
  const Eigen::Index b = a.rows() / n;
  Matrix out(b, a.cols());
  for (Eigen::Index r = 0; r < b; ++r) out.row(r) = a.value().row(r * n + index);
  return t->record(std::move(out), {a}, [t, a, n, index, b](const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < b; ++r) ga.row(r * n + index) = g.row(r);
    t->accumulate(a, ga);
  });
}

Var stack_positions(const std::vector<Var>& positions) {
  require(!positions.empty(), ErrorCode::DimensionMismatch, "stack_positions: no inputs");
  Tape* t = positions.front().tape();
  const auto n = static_cast<Eigen::Index>(positions.size());
  const Eigen::Index b = positions.front().rows();
  const Eigen::Index d = positions.front().cols();
  Matrix out(b * n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(positions[i].rows() == b && positions[i].cols() == d, ErrorCode::DimensionMismatch,
            "stack_positions: shape mismatch");
    for (Eigen::Index r = 0; r < b; ++r) out.row(r * n + i) = positions[i].value().row(r);
  }
  return t->record(std::move(out), positions, [t, positions, n, b](const Matrix& g) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!t->requires_grad(positions[i])) continue;
      Matrix gi(b, g.cols());
      for (Eigen::Index r = 0; r < b; ++r) gi.row(r) = g.row(r * n + i);
      t->accumulate(positions[i], gi);
    }
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  Tape* t = table.tape();
  std::vector<int> idx(indices.begin(), indices.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && idx[r] < table.rows(), ErrorCode::IndexOutOfRange,
            "gather_rows: index " + std::to_string(idx[r]) + " outside [0, " +
                std::to_string(table.rows()) + ")");
    out.row(static_cast<Eigen::Index>(r)) = table.value().row(idx[r]);
  }
  return t->record(std::move(out), {table}, [t, table, idx](const Matrix& g) {
    Matrix gt = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) gt.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    t->accumulate(table, gt);
  });
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  const double inv = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? inv : 0.0;
  return mul_const(a, mask);
}

// ---- sequence ops -------------------------------------------------------------

Var weighted_sum(const Var& weights, const Var& values) {
  const Eigen::Index b = weights.rows();
  const Eigen::Index n = weights.cols();
  require(values.rows() == b * n, ErrorCode::DimensionMismatch,
          "weighted_sum: values must have B*N rows");
  Tape* t = weights.tape();
  const Eigen::Index d = values.cols();
  Matrix out(b, d);
  for (Eigen::Index r = 0; r < b; ++r) {
    out.row(r) = weights.value().row(r) * values.value().middleRows(r * n, n);
  }
  return t->record(std::move(out), {weights, values}, [t, weights, values, b, n, d](const Matrix& g) {
    if (t->requires_grad(weights)) {
      Matrix gw(b, n);
      for (Eigen::Index r = 0; r < b; ++r) {
        gw.row(r) = (values.value().middleRows(r * n, n) * g.row(r).transpose()).transpose();
      }
      t->accumulate(weights, gw);
    }
    if (t->requires_grad(values)) {
      Matrix gv(b * n, d);
      for (Eigen::Index r = 0; r < b; ++r) {
        gv.middleRows(r * n, n) = weights.value().row(r).transpose() * g.row(r);
      }
      t->accumulate(values, gv);
    }
  });
}

Var location_conv(const Var& weights, const Var& kernel) {
  const Eigen::Index k = kernel.rows();
  require(k % 2 == 1, ErrorCode::DimensionMismatch, "location_conv: kernel length must be odd");
  Tape* t = weights.tape();
  const Eigen::Index b = weights.rows();
  const Eigen::Index n = weights.cols();
  const Eigen::Index r = kernel.cols();
  const Eigen::Index pad = (k - 1) / 2;
  const Matrix& w = weights.value();
  const Matrix& f = kernel.value();
  Matrix out = Matrix::Zero(b * n, r);
  for (Eigen::Index s = 0; s < b; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index m = 0; m < k; ++m) {
        const Eigen::Index src = i + m - pad;
        if (src < 0 || src >= n) continue;
        out.row(s * n + i) += w(s, src) * f.row(m);
      }
    }
  }
  return t->record(std::move(out), {weights, kernel}, [t, weights, kernel, b, n, k, r, pad](const Matrix& g) {
    const Matrix& w = weights.value();
    const Matrix& f = kernel.value();
    const bool need_w = t->requires_grad(weights);
    const bool need_f = t->requires_grad(kernel);
    Matrix gw = Matrix::Zero(b, n);
    Matrix gf = Matrix::Zero(k, r);
    for (Eigen::Index s = 0; s < b; ++s) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto grow = g.row(s * n + i);
        for (Eigen::Index m = 0; m < k; ++m) {
          const Eigen::Index src = i + m - pad;
          if (src < 0 || src >= n) continue;
          if (need_w) gw(s, src) += f.row(m).dot(grow);
          if (need_f) gf.row(m) += w(s, src) * grow;
        }
      }
    }
    if (need_w) t->accumulate(weights, gw);
    if (need_f) t->accumulate(kernel, gf);
  });
}

// ---- image ops ------------------------------------------------------------------

namespace {

using MapView = Eigen::Map<Matrix>;
using ConstMapView = Eigen::Map<const Matrix>;

Matrix im2col(const double* image, const MapShape& in, int kernel) {
  const int pad = kernel / 2;
  const int hw = in.height * in.width;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(in.channels) * kernel * kernel, hw);
  for (int c = 0; c < in.channels; ++c) {
    const double* plane = image + static_cast<std::ptrdiff_t>(c) * hw;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int y = 0; y < in.height; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= in.height) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(in.width, in.width + pad - kx);
          const double* src = plane + sy * in.width + (kx - pad);
          double* dst = row + y * in.width;
          for (int x = x0; x < x1; ++x) dst[x] = src[x];
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& cols, const MapShape& in, int kernel, double* image) {
  const int pad = kernel / 2;
  const int hw = in.height * in.width;
  for (int c = 0; c < in.channels; ++c) {
    double* plane = image + static_cast<std::ptrdiff_t>(c) * hw;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int y = 0; y < in.height; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= in.height) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(in.width, in.width + pad - kx);
          double* dst = plane + sy * in.width + (kx - pad);
          const double* src = row + y * in.width;
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const MapShape& in, const Var& weight, const Var& bias, int kernel) {
  require(kernel % 2 == 1, ErrorCode::DimensionMismatch, "conv2d: kernel must be odd");
  require(x.cols() == in.size(), ErrorCode::DimensionMismatch, "conv2d: input shape mismatch");
  require(weight.cols() == static_cast<Eigen::Index>(in.channels) * kernel * kernel,
          ErrorCode::DimensionMismatch, "conv2d: weight shape mismatch");
  const Eigen::Index cout = weight.rows();
  require(bias.rows() == 1 && bias.cols() == cout, ErrorCode::DimensionMismatch,
          "conv2d: bias shape mismatch");
  Tape* t = x.tape();
  const Eigen::Index batch = x.rows();
  const int hw = in.height * in.width;
  auto cols = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch));
  Matrix out(batch, cout * hw);
  for (Eigen::Index b = 0; b < batch; ++b) {
    (*cols)[b] = im2col(x.value().row(b).data(), in, kernel);
    MapView ob(out.row(b).data(), cout, hw);
    ob.noalias() = weight.value() * (*cols)[b];
    ob.colwise() += bias.value().row(0).transpose();
  }
  return t->record(std::move(out), {x, weight, bias}, [t, x, weight, bias, in, kernel, cols, cout, hw](const Matrix& g) {
    const bool need_x = t->requires_grad(x);
    const bool need_w = t->requires_grad(weight);
    const bool need_b = t->requires_grad(bias);
    Matrix gw = Matrix::Zero(weight.rows(), weight.cols());
    Matrix gb = Matrix::Zero(1, cout);
    Matrix gx;
    if (need_x) gx = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      ConstMapView gob(g.row(b).data(), cout, hw);
      if (need_w) gw.noalias() += gob * (*cols)[b].transpose();
      if (need_b) gb += gob.rowwise().sum().transpose();
      if (need_x) {
        Matrix gcols = weight.value().transpose() * gob;
        col2im_add(gcols, in, kernel, gx.row(b).data());
      }
    }
    if (need_w) t->accumulate(weight, gw);
    if (need_b) t->accumulate(bias, gb);
    if (need_x) t->accumulate(x, gx);
  });
}

Var max_pool2d(const Var& x, const MapShape& in, int pool_h, int pool_w) {
  require(x.cols() == in.size(), ErrorCode::DimensionMismatch, "max_pool2d: input shape mismatch");
  const int oh = in.height / pool_h;
  const int ow = in.width / pool_w;
  require(oh >= 1 && ow >= 1, ErrorCode::ImageTooNarrow, "max_pool2d: input smaller than window");
  Tape* t = x.tape();
  const Eigen::Index batch = x.rows();
  const Eigen::Index out_cols = static_cast<Eigen::Index>(in.channels) * oh * ow;
  Matrix out(batch, out_cols);
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(batch * out_cols));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double* src = x.value().row(b).data();
    for (int c = 0; c < in.channels; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo) {
          int best = -1;
          double best_v = -std::numeric_limits<double>::infinity();
          for (int py = 0; py < pool_h; ++py) {
            for (int px = 0; px < pool_w; ++px) {
              const int idx = (c * in.height + y * pool_h + py) * in.width + xo * pool_w + px;
              if (best < 0 || src[idx] > best_v) {
                best = idx;
                best_v = src[idx];
              }
            }
          }
          const Eigen::Index o = (static_cast<Eigen::Index>(c) * oh + y) * ow + xo;
          out(b, o) = best_v;
          (*argmax)[static_cast<std::size_t>(b * out_cols + o)] = best;
        }
      }
    }
  }
  return t->record(std::move(out), {x}, [t, x, argmax, out_cols](const Matrix& g) {
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      for (Eigen::Index o = 0; o < out_cols; ++o) {
        gx(b, (*argmax)[static_cast<std::size_t>(b * out_cols + o)]) += g(b, o);
      }
    }
    t->accumulate(x, gx);
  });
}

Var columns(const Var& x, const MapShape& in) {
  require(x.cols() == in.size(), ErrorCode::DimensionMismatch, "columns: input shape mismatch");
  Tape* t = x.tape();
  const Eigen::Index batch = x.rows();
  const int w = in.width;
  const int ch = in.channels * in.height;
  Matrix out(batch * w, ch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    ConstMapView img(x.value().row(b).data(), ch, w);  // (c*H + h) x w
    out.middleRows(b * w, w) = img.transpose();
  }
  return t->record(std::move(out), {x}, [t, x, w, ch](const Matrix& g) {
    Matrix gx(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      MapView img(gx.row(b).data(), ch, w);
      img = g.middleRows(b * w, w).transpose();
    }
    t->accumulate(x, gx);
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, int channels, int spatial,
               Parameter& running_mean, Parameter& running_var, bool training, double momentum,
               double eps, std::span<const std::uint8_t> active) {
  require(x.cols() == static_cast<Eigen::Index>(channels) * spatial, ErrorCode::DimensionMismatch,
          "batch_norm: width mismatch");
  require(gamma.cols() == channels && beta.cols() == channels, ErrorCode::DimensionMismatch,
          "batch_norm: affine parameter width mismatch");
  require(active.empty() || static_cast<Eigen::Index>(active.size()) == x.rows(), ErrorCode::DimensionMismatch,
          "batch_norm: one active flag per row required");
  Tape* t = x.tape();
  const Eigen::Index batch = x.rows();
  // Row weights: 1 for rows that contribute to the statistics.
  Eigen::VectorXd w = Eigen::VectorXd::Ones(batch);
  if (!active.empty()) {
    for (Eigen::Index b = 0; b < batch; ++b) w(b) = active[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
  }
  const double count = w.sum() * spatial;
  require(!training || count > 0.0, ErrorCode::DimensionMismatch, "batch_norm: no active rows");
  Eigen::VectorXd mean(channels);
  Eigen::VectorXd var(channels);
  const Matrix& xv = x.value();
  if (training) {
    for (int c = 0; c < channels; ++c) {
      auto block = xv.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial);
      const double m = (w.transpose() * block).sum() / count;
      const double v = (w.transpose() * (block.array() - m).square().matrix()).sum() / count;
      mean(c) = m;
      var(c) = v;
      running_mean.value(0, c) = (1.0 - momentum) * running_mean.value(0, c) + momentum * m;
      const double unbiased = count > 1.0 ? v * count / (count - 1.0) : v;
      running_var.value(0, c) = (1.0 - momentum) * running_var.value(0, c) + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      mean(c) = running_mean.value(0, c);
      var(c) = running_var.value(0, c);
    }
  }
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat(batch, x.cols());
  Matrix out(batch, x.cols());
  for (int c = 0; c < channels; ++c) {
    const Eigen::Index off = static_cast<Eigen::Index>(c) * spatial;
    xhat.middleCols(off, spatial) = ((xv.middleCols(off, spatial).array() - mean(c)) * inv_std(c)).matrix();
    out.middleCols(off, spatial) =
        (xhat.middleCols(off, spatial).array() * gamma.value()(0, c) + beta.value()(0, c)).matrix();
  }
  return t->record(std::move(out), {x, gamma, beta},
                   [t, x, gamma, beta, channels, spatial, training, count, inv_std, xhat, w](const Matrix& g) {
                     Matrix gg(1, channels);
                     Matrix gbeta(1, channels);
                     Matrix gx(x.rows(), x.cols());
                     for (int c = 0; c < channels; ++c) {
                       const Eigen::Index off = static_cast<Eigen::Index>(c) * spatial;
                       auto gc = g.middleCols(off, spatial);
                       auto xh = xhat.middleCols(off, spatial);
                       gbeta(0, c) = gc.sum();
                       gg(0, c) = gc.cwiseProduct(xh).sum();
                       const double gm = gamma.value()(0, c);
                       gx.middleCols(off, spatial) = (gc.array() * gm * inv_std(c)).matrix();
                       if (training) {
                         // The statistics depend on the active rows only.
                         const double sum_g = gbeta(0, c) * gm;
                         const double sum_gx = gg(0, c) * gm;
                         gx.middleCols(off, spatial) -=
                             (w.asDiagonal() * ((sum_g + xh.array() * sum_gx) * (inv_std(c) / count)).matrix());
                       }
                     }
                     if (t->requires_grad(x)) t->accumulate(x, gx);
                     if (t->requires_grad(gamma)) t->accumulate(gamma, gg);
                     if (t->requires_grad(beta)) t->accumulate(beta, gbeta);
                   });
}

// ---- losses -------------------------------------------------------------------

Var smoothed_cross_entropy(const Var& logits, std::span<const int> targets, double eps) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), ErrorCode::DimensionMismatch,
          "cross entropy: one target per row required");
  Tape* t = logits.tape();
  const Eigen::Index vocab = logits.cols();
  Matrix probs = softmax(logits.value());
  Matrix q = Matrix::Zero(logits.rows(), vocab);
  const double off = vocab > 1 ? eps / static_cast<double>(vocab - 1) : 0.0;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0) continue;
    require(target < vocab, ErrorCode::IndexOutOfRange, "cross entropy: target out of range");
    q.row(r).setConstant(off);
    q(r, target) = 1.0 - eps;
    const double m = logits.value().row(r).maxCoeff();
    const double lse = m + std::log((logits.value().row(r).array() - m).exp().sum());
    for (Eigen::Index j = 0; j < vocab; ++j) {
      if (q(r, j) != 0.0) loss -= q(r, j) * (logits.value()(r, j) - lse);
    }
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<int> tg(targets.begin(), targets.end());
  return t->record(std::move(out), {logits}, [t, logits, probs, q, tg](const Matrix& g) {
    Matrix gl = probs - q;
    for (std::size_t r = 0; r < tg.size(); ++r) {
      if (tg[r] < 0) gl.row(static_cast<Eigen::Index>(r)).setZero();
    }
    t->accumulate(logits, gl * g(0, 0));
  });
}

}  // namespace attnhtr::ad
