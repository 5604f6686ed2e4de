// Define-by-run computation graph with reverse-mode differentiation.
//
// Recording an operation validates shapes and evaluates it immediately; a
// failed record leaves the graph untouched. forward() replays the graph with
// fresh leaf bindings. backward() walks the tape in reverse and returns a
// GradStore of cotangents keyed by (node, slot).
//
// Each operator declares which forward values its pullback will read (inputs,
// outputs, both, or neither). forward() can run under a memory plan that lets
// a node's output steal the buffer of a dying input — dying meaning: not a
// leaf, last read here, and not retained for the backward pass. Planned and
// unplanned execution run the same kernels on the same values, so results are
// bit-identical.
#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dlinalg/adjoints.hpp"
#include "dlinalg/blas.hpp"
#include "dlinalg/cholesky.hpp"
#include "dlinalg/eigen_sym.hpp"
#include "dlinalg/lq.hpp"
#include "dlinalg/matrix.hpp"
#include "dlinalg/svd.hpp"
#include "dlinalg/transforms.hpp"

namespace dla {

struct NodeId {
  index_t node = -1;
  int slot = 0;
};

inline bool operator==(NodeId a, NodeId b) {
  return a.node == b.node && a.slot == b.slot;
}
inline bool operator!=(NodeId a, NodeId b) { return !(a == b); }

struct GelqfNodes {
  NodeId q, l;
};
struct SyevdNodes {
  NodeId u, lambda;
};
struct GesvdNodes {
  NodeId u, lambda, v;
};

enum class Op {
  Leaf,
  Constant,
  Gemm2,
  Syrk,
  Trmm,
  Trsm,
  Potrf,
  Potri,
  Gelqf,
  Syevd,
  Gesvd,
  Add,
  Sub,
  Mul,
  Square,
  Sqrt,
  Log,
  Exp,
  Abs,
  Neg,
  ScaleConst,
  AddConst,
  MulScalar,
  DivScalar,
  Sum,
  SumRows,
  TileCols,
  TileRows,
  ExtractDiag,
  MakeDiag,
  TrilMask,
  TriuMask,
  ConcatCols,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "const";
    case Op::Gemm2: return "gemm2";
    case Op::Syrk: return "syrk";
    case Op::Trmm: return "trmm";
    case Op::Trsm: return "trsm";
    case Op::Potrf: return "potrf";
    case Op::Potri: return "potri";
    case Op::Gelqf: return "gelqf";
    case Op::Syevd: return "syevd";
    case Op::Gesvd: return "gesvd";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Abs: return "abs";
    case Op::Neg: return "neg";
    case Op::ScaleConst: return "scale_const";
    case Op::AddConst: return "add_const";
    case Op::MulScalar: return "mul_scalar";
    case Op::DivScalar: return "div_scalar";
    case Op::Sum: return "sum";
    case Op::SumRows: return "sum_rows";
    case Op::TileCols: return "tile_cols";
    case Op::TileRows: return "tile_rows";
    case Op::ExtractDiag: return "extract_diag";
    case Op::MakeDiag: return "make_diag";
    case Op::TrilMask: return "tril_mask";
    case Op::TriuMask: return "triu_mask";
    case Op::ConcatCols: return "concat_cols";
  }
  return "?";
}

// What the pullback of each operator re-reads from the forward pass.
enum class DependencyMode { None, UseIn, UseOut, UseInOut };

inline DependencyMode dependency_mode(Op op) {
  switch (op) {
    case Op::Gemm2:
    case Op::Syrk:
    case Op::Trmm:
    case Op::Mul:
    case Op::Square:
    case Op::Log:
    case Op::Abs:
      return DependencyMode::UseIn;
    case Op::Potrf:
    case Op::Gelqf:
    case Op::Syevd:
    case Op::Gesvd:
    case Op::Sqrt:
    case Op::Exp:
      return DependencyMode::UseOut;
    case Op::Trsm:
    case Op::Potri:
    case Op::MulScalar:
    case Op::DivScalar:
      return DependencyMode::UseInOut;
    default:
      return DependencyMode::None;
  }
}

// Finer grain: does the pullback read input k / output slot s?
inline bool backward_reads_input(Op op, int k) {
  switch (op) {
    case Op::Gemm2: return true;
    case Op::Syrk: return true;
    case Op::Trmm: return true;          // both T and the dense operand
    case Op::Trsm: return k == 0;        // T only; the rhs is never re-read
    case Op::Potri: return k == 0;
    case Op::Mul: return true;
    case Op::Square: return true;
    case Op::Log: return true;
    case Op::Abs: return true;
    case Op::MulScalar: return true;     // x for sbar, s for xbar
    case Op::DivScalar: return k == 1;   // s only (sbar uses the output)
    default: return false;
  }
}

inline bool backward_reads_output(Op op, int s) {
  switch (op) {
    case Op::Potrf: return true;
    case Op::Trsm: return true;
    case Op::Potri: return true;
    case Op::Gelqf: return true;
    case Op::Syevd: return true;
    case Op::Gesvd: return true;
    case Op::Sqrt: return true;
    case Op::Exp: return true;
    case Op::DivScalar: return s == 0;
    default: return false;
  }
}

template <typename T>
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(std::vector<std::vector<Matrix<T>>> g) : g_(std::move(g)) {}

  bool has(NodeId id) const {
    return id.node >= 0 && id.node < static_cast<index_t>(g_.size()) &&
           id.slot >= 0 &&
           id.slot < static_cast<int>(g_[id.node].size()) &&
           g_[id.node][id.slot].size() > 0;
  }
  const Matrix<T>& at(NodeId id) const {
    if (!has(id)) {
      throw Error("GradStore: no gradient recorded for node " +
                  std::to_string(id.node) + " slot " + std::to_string(id.slot));
    }
    return g_[id.node][id.slot];
  }

 private:
  std::vector<std::vector<Matrix<T>>> g_;
};

template <typename T>
class Graph {
 public:
  using Bindings = std::vector<std::pair<NodeId, Matrix<T>>>;

  explicit Graph(ToleranceConfig<T> cfg = ToleranceConfig<T>::defaults())
      : cfg_(cfg) {
    cfg_.validate();
  }

  void set_use_memory_plan(bool on) { use_plan_ = on; }
  void set_assume_backward(bool on) { assume_backward_ = on; }
  bool use_memory_plan() const { return use_plan_; }
  index_t num_nodes() const { return static_cast<index_t>(nodes_.size()); }
  Op node_op(index_t i) const { return nodes_.at(i).op; }
  const ToleranceConfig<T>& config() const { return cfg_; }

  // ---- construction -------------------------------------------------------

  NodeId leaf(Matrix<T> value, std::string name) {
    Node n;
    n.op = Op::Leaf;
    n.name = std::move(name);
    n.out.push_back(std::move(value));
    return finish(std::move(n));
  }

  NodeId constant(Matrix<T> value, std::string name = "c") {
    Node n;
    n.op = Op::Constant;
    n.name = std::move(name);
    n.out.push_back(std::move(value));
    return finish(std::move(n));
  }

  NodeId gemm2(NodeId a, NodeId b, bool ta = false, bool tb = false,
               T alpha = T(1)) {
    Node n = start(Op::Gemm2, {a, b});
    n.ta = ta;
    n.tb = tb;
    n.alpha = alpha;
    const auto& va = val(a);
    const auto& vb = val(b);
    const index_t m = ta ? va.cols() : va.rows();
    const index_t ka = ta ? va.rows() : va.cols();
    const index_t kb = tb ? vb.cols() : vb.rows();
    const index_t p = tb ? vb.rows() : vb.cols();
    require(ka == kb, n, "inner dimensions do not match");
    (void)m;
    (void)p;
    return record(std::move(n));
  }

  NodeId syrk(NodeId a, bool ta = false, T alpha = T(1)) {
    Node n = start(Op::Syrk, {a});
    n.ta = ta;
    n.alpha = alpha;
    return record(std::move(n));
  }

  NodeId trmm(NodeId t, NodeId a, bool rightside, bool transpose, bool lower,
              T alpha = T(1)) {
    Node n = start(Op::Trmm, {t, a});
    n.rightside = rightside;
    n.transpose = transpose;
    n.lower = lower;
    n.alpha = alpha;
    require(val(t).rows() == val(t).cols(), n, "triangular factor not square");
    require((rightside ? val(a).cols() : val(a).rows()) == val(t).rows(), n,
            "operand does not match triangular factor");
    return record(std::move(n));
  }

  NodeId trsm(NodeId t, NodeId a, bool rightside, bool transpose, bool lower,
              T alpha = T(1)) {
    Node n = start(Op::Trsm, {t, a});
    n.rightside = rightside;
    n.transpose = transpose;
    n.lower = lower;
    n.alpha = alpha;
    require(val(t).rows() == val(t).cols(), n, "triangular factor not square");
    require((rightside ? val(a).cols() : val(a).rows()) == val(t).rows(), n,
            "operand does not match triangular factor");
    return record(std::move(n));
  }

  NodeId potrf(NodeId a, bool lower = true) {
    Node n = start(Op::Potrf, {a});
    n.lower = lower;
    require(val(a).rows() == val(a).cols(), n, "matrix not square");
    return record(std::move(n));
  }

  NodeId potri(NodeId l, bool lower = true) {
    Node n = start(Op::Potri, {l});
    n.lower = lower;
    require(val(l).rows() == val(l).cols(), n, "factor not square");
    return record(std::move(n));
  }

  GelqfNodes gelqf(NodeId a) {
    Node n = start(Op::Gelqf, {a});
    require(val(a).rows() <= val(a).cols(), n, "needs rows <= cols");
    NodeId q = record(std::move(n));
    return {q, NodeId{q.node, 1}};
  }

  SyevdNodes syevd(NodeId a) {
    Node n = start(Op::Syevd, {a});
    require(val(a).rows() == val(a).cols(), n, "matrix not square");
    NodeId u = record(std::move(n));
    return {u, NodeId{u.node, 1}};
  }

  GesvdNodes gesvd(NodeId a) {
    Node n = start(Op::Gesvd, {a});
    require(val(a).rows() <= val(a).cols(), n, "needs rows <= cols");
    NodeId u = record(std::move(n));
    return {u, NodeId{u.node, 1}, NodeId{u.node, 2}};
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }

  NodeId square(NodeId x) { return unary(Op::Square, x); }
  NodeId sqrt(NodeId x) { return unary(Op::Sqrt, x); }
  NodeId log(NodeId x) { return unary(Op::Log, x); }
  NodeId exp(NodeId x) { return unary(Op::Exp, x); }
  NodeId abs(NodeId x) { return unary(Op::Abs, x); }
  NodeId neg(NodeId x) { return unary(Op::Neg, x); }
  NodeId tril_mask(NodeId x) { return unary(Op::TrilMask, x); }
  NodeId triu_mask(NodeId x) { return unary(Op::TriuMask, x); }

  NodeId scale_const(NodeId x, T c) {
    Node n = start(Op::ScaleConst, {x});
    n.cval = c;
    return record(std::move(n));
  }
  NodeId add_const(NodeId x, T c) {
    Node n = start(Op::AddConst, {x});
    n.cval = c;
    return record(std::move(n));
  }

  NodeId mul_scalar(NodeId x, NodeId s) {
    Node n = start(Op::MulScalar, {x, s});
    require(val(s).rows() == 1 && val(s).cols() == 1, n, "scale is not 1x1");
    return record(std::move(n));
  }
  NodeId div_scalar(NodeId x, NodeId s) {
    Node n = start(Op::DivScalar, {x, s});
    require(val(s).rows() == 1 && val(s).cols() == 1, n, "scale is not 1x1");
    return record(std::move(n));
  }

  NodeId sum(NodeId x) { return unary(Op::Sum, x); }
  NodeId sum_rows(NodeId x) { return unary(Op::SumRows, x); }

  NodeId tile_cols(NodeId x, index_t count) {
    Node n = start(Op::TileCols, {x});
    n.count = count;
    require(val(x).cols() == 1, n, "expects a column vector");
    require(count >= 1, n, "tile count must be positive");
    return record(std::move(n));
  }
  NodeId tile_rows(NodeId x, index_t count) {
    Node n = start(Op::TileRows, {x});
    n.count = count;
    require(val(x).cols() == 1, n, "expects a column vector");
    require(count >= 1, n, "tile count must be positive");
    return record(std::move(n));
  }

  NodeId extract_diag(NodeId x) {
    Node n = start(Op::ExtractDiag, {x});
    require(val(x).rows() == val(x).cols(), n, "matrix not square");
    return record(std::move(n));
  }
  NodeId make_diag(NodeId x) {
    Node n = start(Op::MakeDiag, {x});
    require(val(x).cols() == 1, n, "expects a column vector");
    return record(std::move(n));
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    Node n = start(Op::ConcatCols, {a, b});
    require(val(a).rows() == val(b).rows(), n, "row counts differ");
    return record(std::move(n));
  }

  // ---- access --------------------------------------------------------------

  const Matrix<T>& value(NodeId id) const {
    const Node& n = at(id.node);
    if (id.slot < 0 || id.slot >= static_cast<int>(n.out.size())) {
      throw Error("Graph::value: node " + std::to_string(id.node) +
                  " has no slot " + std::to_string(id.slot));
    }
    const Matrix<T>& m = n.out[id.slot];
    if (m.data() == nullptr && n.out_shapes[id.slot].first > 0 &&
        n.out_shapes[id.slot].second > 0) {
      throw Error("Graph::value: node " + std::to_string(id.node) +
                  " slot " + std::to_string(id.slot) +
                  " was released by the memory plan; rerun forward() without "
                  "the plan to inspect it");
    }
    return m;
  }

  std::pair<index_t, index_t> shape(NodeId id) const {
    const Node& n = at(id.node);
    if (id.slot < 0 || id.slot >= static_cast<int>(n.out_shapes.size())) {
      throw Error("Graph::shape: bad slot");
    }
    return n.out_shapes[id.slot];
  }

  // ---- execution -----------------------------------------------------------

  void forward(const Bindings& bindings = {}) {
    for (const auto& [id, m] : bindings) {
      Node& n = at(id.node);
      if (n.op != Op::Leaf) {
        throw Error("Graph::forward: node " + std::to_string(id.node) +
                    " is not a leaf and cannot be bound");
      }
      if (m.rows() != n.out_shapes[0].first ||
          m.cols() != n.out_shapes[0].second) {
        throw ShapeError("Graph::forward: binding for leaf '" + n.name +
                         "' has shape " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected " +
                         std::to_string(n.out_shapes[0].first) + "x" +
                         std::to_string(n.out_shapes[0].second));
      }
      n.out[0] = m;
    }
    std::vector<std::vector<PlanEntry>> plan;
    if (use_plan_) plan = build_plan();
    for (index_t i = 0; i < num_nodes(); ++i) {
      Node& n = nodes_[i];
      if (n.op == Op::Leaf || n.op == Op::Constant) continue;
      n.out = compute_node(n, use_plan_ ? &plan[i] : nullptr);
    }
  }

  GradStore<T> backward(NodeId loss) {
    if (shape(loss) != std::make_pair(index_t(1), index_t(1))) {
      throw ShapeError("Graph::backward: loss must be a 1x1 node");
    }
    std::vector<std::vector<Matrix<T>>> g(loss.node + 1);
    for (index_t i = 0; i <= loss.node; ++i) g[i].resize(nodes_[i].out_shapes.size());
    g[loss.node][loss.slot] = Matrix<T>(1, 1);
    g[loss.node][loss.slot](0, 0) = T(1);

    for (index_t i = loss.node; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.op == Op::Leaf || n.op == Op::Constant) continue;
      bool any = false;
      for (const auto& m : g[i]) any = any || m.size() > 0;
      if (!any) continue;
      for (std::size_t s = 0; s < g[i].size(); ++s) {
        if (g[i][s].size() == 0) {
          g[i][s] = Matrix<T>(n.out_shapes[s].first, n.out_shapes[s].second);
        }
      }
      pull_node(i, g);
    }
    return GradStore<T>(std::move(g));
  }

  // Number of buffer hand-offs the current plan would perform.
  index_t planned_reuse_count() const {
    auto plan = build_plan();
    index_t c = 0;
    for (const auto& p : plan) c += static_cast<index_t>(p.size());
    return c;
  }

  std::string dump() const {
    std::ostringstream os;
    os << "graph(" << num_nodes() << " nodes)\n";
    for (index_t i = 0; i < num_nodes(); ++i) {
      const Node& n = nodes_[i];
      os << "#" << i << " " << op_name(n.op);
      if (n.op == Op::Leaf || n.op == Op::Constant) {
        os << " \"" << n.name << "\"";
      } else {
        os << "(";
        for (std::size_t k = 0; k < n.in.size(); ++k) {
          if (k) os << ", ";
          os << "#" << n.in[k].node;
          if (n.in[k].slot != 0) os << "." << n.in[k].slot;
        }
        appendflags(os, n);
        os << ")";
      }
      for (const auto& sh : n.out_shapes) {
        os << " [" << sh.first << "x" << sh.second << "]";
      }
      os << "\n";
    }
    return os.str();
  }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::string name;
    std::vector<NodeId> in;
    bool ta = false, tb = false, rightside = false, transpose = false,
         lower = true;
    T alpha = T(1);
    T cval = T(0);
    index_t count = 0;
    std::vector<Matrix<T>> out;
    std::vector<std::pair<index_t, index_t>> out_shapes;
  };

  struct PlanEntry {
    int dst_slot;
    index_t src_node;
    int src_slot;
  };

  Node& at(index_t i) {
    if (i < 0 || i >= num_nodes()) {
      throw Error("Graph: node index " + std::to_string(i) + " out of range");
    }
    return nodes_[i];
  }
  const Node& at(index_t i) const {
    return const_cast<Graph*>(this)->at(i);
  }

  const Matrix<T>& val(NodeId id) const { return value(id); }

  Node start(Op op, std::initializer_list<NodeId> in) {
    Node n;
    n.op = op;
    for (NodeId id : in) {
      (void)value(id);  // validates node and slot
      n.in.push_back(id);
    }
    return n;
  }

  void require(bool ok, const Node& n, const std::string& msg) const {
    if (!ok) throw ShapeError(std::string(op_name(n.op)) + ": " + msg);
  }

  NodeId unary(Op op, NodeId x) {
    Node n = start(op, {x});
    if (op == Op::TrilMask || op == Op::TriuMask) {
      require(val(x).rows() == val(x).cols(), n, "matrix not square");
    }
    return record(std::move(n));
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    Node n = start(op, {a, b});
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), n,
            "operand shapes differ");
    return record(std::move(n));
  }

  // Evaluate eagerly, then commit. Exceptions leave the graph unchanged.
  NodeId record(Node&& n) {
    n.out = compute_node(n, nullptr);
    return finish(std::move(n));
  }

  NodeId finish(Node&& n) {
    n.out_shapes.clear();
    for (const auto& m : n.out) n.out_shapes.emplace_back(m.rows(), m.cols());
    nodes_.push_back(std::move(n));
    return {num_nodes() - 1, 0};
  }

  // Base buffer for in-place execution: a moved-in claim or a copy of input k.
  Matrix<T> base_of(const Node& n, std::size_t k,
                    const std::vector<PlanEntry>* claims, int dst_slot) {
    if (claims) {
      for (const auto& c : *claims) {
        if (c.dst_slot == dst_slot) {
          return std::move(nodes_[c.src_node].out[c.src_slot]);
        }
      }
    }
    return Matrix<T>(val(n.in[k]).view());
  }

  std::vector<Matrix<T>> compute_node(const Node& n,
                                      const std::vector<PlanEntry>* claims) {
    std::vector<Matrix<T>> out;
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        throw Error("Graph: leaves are not computed");

      case Op::Gemm2: {
        const auto& a = val(n.in[0]);
        const auto& b = val(n.in[1]);
        Matrix<T> c(n.ta ? a.cols() : a.rows(), n.tb ? b.rows() : b.cols());
        gemm2_into(c.view(), a.view(), b.view(), n.ta, n.tb, n.alpha);
        out.push_back(std::move(c));
        break;
      }
      case Op::Syrk: {
        const auto& a = val(n.in[0]);
        Matrix<T> b(n.ta ? a.cols() : a.rows(), n.ta ? a.cols() : a.rows());
        syrk_into(b.view(), a.view(), n.ta, n.alpha);
        out.push_back(std::move(b));
        break;
      }
      case Op::Trmm: {
        Matrix<T> x = base_of(n, 1, claims, 0);
        trmm_inplace(val(n.in[0]).view(), x.view(), n.rightside, n.transpose,
                     n.lower, n.alpha);
        out.push_back(std::move(x));
        break;
      }
      case Op::Trsm: {
        Matrix<T> x = base_of(n, 1, claims, 0);
        trsm_inplace(val(n.in[0]).view(), x.view(), n.rightside, n.transpose,
                     n.lower, n.alpha);
        out.push_back(std::move(x));
        break;
      }
      case Op::Potrf: {
        Matrix<T> x = base_of(n, 0, claims, 0);
        potrf_inplace(x.view(), n.lower);
        out.push_back(std::move(x));
        break;
      }
      case Op::Potri: {
        Matrix<T> x = base_of(n, 0, claims, 0);
        potri_inplace(x.view(), n.lower);
        out.push_back(std::move(x));
        break;
      }
      case Op::Gelqf: {
        Matrix<T> q = base_of(n, 0, claims, 0);
        Matrix<T> l(q.rows(), q.rows());
        gelqf_inplace(q.view(), l.view());
        out.push_back(std::move(q));
        out.push_back(std::move(l));
        break;
      }
      case Op::Syevd: {
        Matrix<T> u = base_of(n, 0, claims, 0);
        Matrix<T> lambda(u.rows(), 1);
        syevd_inplace(u.view(), lambda.data());
        out.push_back(std::move(u));
        out.push_back(std::move(lambda));
        break;
      }
      case Op::Gesvd: {
        Matrix<T> v = base_of(n, 0, claims, 2);
        Matrix<T> u(v.rows(), v.rows());
        Matrix<T> lambda(v.rows(), 1);
        gesvd_inplace(v.view(), u.view(), lambda.data());
        out.push_back(std::move(u));
        out.push_back(std::move(lambda));
        out.push_back(std::move(v));
        break;
      }

      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        Matrix<T> x = base_of(n, 0, claims, 0);
        const T* b = val(n.in[1]).data();
        T* d = x.data();
        const index_t sz = x.size();
        if (n.op == Op::Add) {
          for (index_t i = 0; i < sz; ++i) d[i] += b[i];
        } else if (n.op == Op::Sub) {
          for (index_t i = 0; i < sz; ++i) d[i] -= b[i];
        } else {
          for (index_t i = 0; i < sz; ++i) d[i] *= b[i];
        }
        out.push_back(std::move(x));
        break;
      }
      case Op::Square:
      case Op::Sqrt:
      case Op::Log:
      case Op::Exp:
      case Op::Abs:
      case Op::Neg:
      case Op::ScaleConst:
      case Op::AddConst: {
        Matrix<T> x = base_of(n, 0, claims, 0);
        T* d = x.data();
        const index_t sz = x.size();
        switch (n.op) {
          case Op::Square: for (index_t i = 0; i < sz; ++i) d[i] *= d[i]; break;
          case Op::Sqrt: for (index_t i = 0; i < sz; ++i) d[i] = std::sqrt(d[i]); break;
          case Op::Log: for (index_t i = 0; i < sz; ++i) d[i] = std::log(d[i]); break;
          case Op::Exp: for (index_t i = 0; i < sz; ++i) d[i] = std::exp(d[i]); break;
          case Op::Abs: for (index_t i = 0; i < sz; ++i) d[i] = std::abs(d[i]); break;
          case Op::Neg: for (index_t i = 0; i < sz; ++i) d[i] = -d[i]; break;
          case Op::ScaleConst: for (index_t i = 0; i < sz; ++i) d[i] *= n.cval; break;
          default: for (index_t i = 0; i < sz; ++i) d[i] += n.cval; break;
        }
        out.push_back(std::move(x));
        break;
      }
      case Op::MulScalar:
      case Op::DivScalar: {
        const T s = val(n.in[1])(0, 0);
        Matrix<T> x = base_of(n, 0, claims, 0);
        T* d = x.data();
        const index_t sz = x.size();
        if (n.op == Op::MulScalar) {
          for (index_t i = 0; i < sz; ++i) d[i] *= s;
        } else {
          for (index_t i = 0; i < sz; ++i) d[i] /= s;
        }
        out.push_back(std::move(x));
        break;
      }
      case Op::TrilMask:
      case Op::TriuMask: {
        Matrix<T> x = base_of(n, 0, claims, 0);
        if (n.op == Op::TrilMask) tril_inplace(x.view());
        else triu_inplace(x.view());
        out.push_back(std::move(x));
        break;
      }

      case Op::Sum: {
        const auto& a = val(n.in[0]);
        Matrix<T> r(1, 1);
        T acc = T(0);
        for (index_t i = 0; i < a.size(); ++i) acc += a.data()[i];
        r(0, 0) = acc;
        out.push_back(std::move(r));
        break;
      }
      case Op::SumRows: {
        const auto& a = val(n.in[0]);
        Matrix<T> r(a.rows(), 1);
        for (index_t i = 0; i < a.rows(); ++i) {
          T acc = T(0);
          const T* row = a.data() + i * a.cols();
          for (index_t j = 0; j < a.cols(); ++j) acc += row[j];
          r(i, 0) = acc;
        }
        out.push_back(std::move(r));
        break;
      }
      case Op::TileCols: {
        const auto& a = val(n.in[0]);
        Matrix<T> r(a.rows(), n.count);
        for (index_t i = 0; i < a.rows(); ++i) {
          const T v = a(i, 0);
          T* row = r.data() + i * n.count;
          for (index_t j = 0; j < n.count; ++j) row[j] = v;
        }
        out.push_back(std::move(r));
        break;
      }
      case Op::TileRows: {
        const auto& a = val(n.in[0]);
        Matrix<T> r(n.count, a.rows());
        for (index_t i = 0; i < n.count; ++i) {
          T* row = r.data() + i * a.rows();
          for (index_t j = 0; j < a.rows(); ++j) row[j] = a(j, 0);
        }
        out.push_back(std::move(r));
        break;
      }
      case Op::ExtractDiag: {
        const auto& a = val(n.in[0]);
        Matrix<T> r(a.rows(), 1);
        for (index_t i = 0; i < a.rows(); ++i) r(i, 0) = a(i, i);
        out.push_back(std::move(r));
        break;
      }
      case Op::MakeDiag: {
        const auto& a = val(n.in[0]);
        Matrix<T> r(a.rows(), a.rows());
        for (index_t i = 0; i < a.rows(); ++i) r(i, i) = a(i, 0);
        out.push_back(std::move(r));
        break;
      }
      case Op::ConcatCols: {
        const auto& a = val(n.in[0]);
        const auto& b = val(n.in[1]);
        Matrix<T> r(a.rows(), a.cols() + b.cols());
        for (index_t i = 0; i < a.rows(); ++i) {
          T* row = r.data() + i * r.cols();
          std::copy(a.data() + i * a.cols(), a.data() + (i + 1) * a.cols(), row);
          std::copy(b.data() + i * b.cols(), b.data() + (i + 1) * b.cols(),
                    row + a.cols());
        }
        out.push_back(std::move(r));
        break;
      }
    }
    return out;
  }

  // ---- backward ------------------------------------------------------------

  void acc(std::vector<std::vector<Matrix<T>>>& g, NodeId dst, Matrix<T>&& m) {
    Matrix<T>& slot = g[dst.node][dst.slot];
    if (slot.size() == 0) {
      slot = std::move(m);
      return;
    }
    T* d = slot.data();
    const T* s = m.data();
    for (index_t i = 0; i < slot.size(); ++i) d[i] += s[i];
  }

  void pull_node(index_t i, std::vector<std::vector<Matrix<T>>>& g) {
    Node& n = nodes_[i];
    const std::vector<Matrix<T>>& og = g[i];
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        return;

      case Op::Gemm2: {
        const auto& a = val(n.in[0]);
        const auto& b = val(n.in[1]);
        Matrix<T> abar(a.rows(), a.cols());
        Matrix<T> bbar(b.rows(), b.cols());
        gemm2_backward_into<T>(abar.view(), bbar.view(), og[0].view(),
                               a.view(), b.view(), n.ta, n.tb, n.alpha);
        acc(g, n.in[0], std::move(abar));
        acc(g, n.in[1], std::move(bbar));
        return;
      }
      case Op::Syrk: {
        const auto& a = val(n.in[0]);
        Matrix<T> abar(a.rows(), a.cols());
        syrk_backward_into<T>(abar.view(), og[0].view(), a.view(), n.ta,
                              n.alpha);
        acc(g, n.in[0], std::move(abar));
        return;
      }
      case Op::Trmm: {
        const auto& t = val(n.in[0]);
        const auto& a = val(n.in[1]);
        Matrix<T> abar(a.rows(), a.cols());
        Matrix<T> tbar(t.rows(), t.cols());
        trmm_backward_into<T>(abar.view(), tbar.view(), og[0].view(), t.view(),
                              a.view(), n.rightside, n.transpose, n.lower,
                              n.alpha);
        acc(g, n.in[0], std::move(tbar));
        acc(g, n.in[1], std::move(abar));
        return;
      }
      case Op::Trsm: {
        const auto& t = val(n.in[0]);
        const auto& b = val(NodeId{i, 0});
        Matrix<T> abar(b.rows(), b.cols());
        Matrix<T> tbar(t.rows(), t.cols());
        trsm_backward_into<T>(abar.view(), tbar.view(), og[0].view(), t.view(),
                              b.view(), n.rightside, n.transpose, n.lower,
                              n.alpha);
        acc(g, n.in[0], std::move(tbar));
        acc(g, n.in[1], std::move(abar));
        return;
      }
      case Op::Potrf: {
        const auto& l = val(NodeId{i, 0});
        Matrix<T> abar(l.rows(), l.cols());
        potrf_backward_into<T>(abar.view(), og[0].view(), l.view(), n.lower);
        acc(g, n.in[0], std::move(abar));
        return;
      }
      case Op::Potri: {
        const auto& l = val(n.in[0]);
        const auto& b = val(NodeId{i, 0});
        Matrix<T> lbar(l.rows(), l.cols());
        potri_backward_into<T>(lbar.view(), og[0].view(), l.view(), b.view(),
                               n.lower);
        acc(g, n.in[0], std::move(lbar));
        return;
      }
      case Op::Gelqf: {
        const auto& q = val(NodeId{i, 0});
        const auto& l = val(NodeId{i, 1});
        Matrix<T> abar(q.rows(), q.cols());
        gelqf_backward_into<T>(abar.view(), og[0].view(), og[1].view(),
                               q.view(), l.view());
        acc(g, n.in[0], std::move(abar));
        return;
      }
      case Op::Syevd: {
        const auto& u = val(NodeId{i, 0});
        const auto& lambda = val(NodeId{i, 1});
        Matrix<T> abar(u.rows(), u.cols());
        syevd_backward_into<T>(abar.view(), og[0].view(), og[1].data(),
                               u.view(), lambda.data(), cfg_);
        acc(g, n.in[0], std::move(abar));
        return;
      }
      case Op::Gesvd: {
        const auto& u = val(NodeId{i, 0});
        const auto& lambda = val(NodeId{i, 1});
        const auto& v = val(NodeId{i, 2});
        Matrix<T> abar(v.rows(), v.cols());
        gesvd_backward_into<T>(abar.view(), og[0].view(), og[1].data(),
                               og[2].view(), u.view(), lambda.data(), v.view(),
                               cfg_);
        acc(g, n.in[0], std::move(abar));
        return;
      }

      case Op::Add: {
        acc(g, n.in[0], Matrix<T>(og[0]));
        acc(g, n.in[1], Matrix<T>(og[0]));
        return;
      }
      case Op::Sub: {
        acc(g, n.in[0], Matrix<T>(og[0]));
        Matrix<T> m(og[0]);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] = -m.data()[k];
        acc(g, n.in[1], std::move(m));
        return;
      }
      case Op::Mul: {
        Matrix<T> ga(og[0]);
        const auto& b = val(n.in[1]);
        for (index_t k = 0; k < ga.size(); ++k) ga.data()[k] *= b.data()[k];
        acc(g, n.in[0], std::move(ga));
        Matrix<T> gb(og[0]);
        const auto& a = val(n.in[0]);
        for (index_t k = 0; k < gb.size(); ++k) gb.data()[k] *= a.data()[k];
        acc(g, n.in[1], std::move(gb));
        return;
      }
      case Op::Square: {
        Matrix<T> m(og[0]);
        const auto& x = val(n.in[0]);
        for (index_t k = 0; k < m.size(); ++k)
          m.data()[k] *= T(2) * x.data()[k];
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::Sqrt: {
        Matrix<T> m(og[0]);
        const auto& y = val(NodeId{i, 0});
        for (index_t k = 0; k < m.size(); ++k)
          m.data()[k] /= T(2) * y.data()[k];
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::Log: {
        Matrix<T> m(og[0]);
        const auto& x = val(n.in[0]);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] /= x.data()[k];
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::Exp: {
        Matrix<T> m(og[0]);
        const auto& y = val(NodeId{i, 0});
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] *= y.data()[k];
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::Abs: {
        Matrix<T> m(og[0]);
        const auto& x = val(n.in[0]);
        for (index_t k = 0; k < m.size(); ++k) {
          const T v = x.data()[k];
          m.data()[k] *= v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
        }
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::Neg: {
        Matrix<T> m(og[0]);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] = -m.data()[k];
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::ScaleConst: {
        Matrix<T> m(og[0]);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] *= n.cval;
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::AddConst: {
        acc(g, n.in[0], Matrix<T>(og[0]));
        return;
      }
      case Op::MulScalar: {
        const T s = val(n.in[1])(0, 0);
        Matrix<T> m(og[0]);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] *= s;
        acc(g, n.in[0], std::move(m));
        const auto& x = val(n.in[0]);
        Matrix<T> gs(1, 1);
        T accv = T(0);
        for (index_t k = 0; k < x.size(); ++k)
          accv += og[0].data()[k] * x.data()[k];
        gs(0, 0) = accv;
        acc(g, n.in[1], std::move(gs));
        return;
      }
      case Op::DivScalar: {
        const T s = val(n.in[1])(0, 0);
        Matrix<T> m(og[0]);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] /= s;
        acc(g, n.in[0], std::move(m));
        const auto& y = val(NodeId{i, 0});
        Matrix<T> gs(1, 1);
        T accv = T(0);
        for (index_t k = 0; k < y.size(); ++k)
          accv += og[0].data()[k] * y.data()[k];
        gs(0, 0) = -accv / s;
        acc(g, n.in[1], std::move(gs));
        return;
      }

      case Op::Sum: {
        const auto sh = shape(n.in[0]);
        Matrix<T> m(sh.first, sh.second);
        const T gv = og[0](0, 0);
        for (index_t k = 0; k < m.size(); ++k) m.data()[k] = gv;
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::SumRows: {
        const auto sh = shape(n.in[0]);
        Matrix<T> m(sh.first, sh.second);
        for (index_t r = 0; r < m.rows(); ++r) {
          const T gv = og[0](r, 0);
          T* row = m.data() + r * m.cols();
          for (index_t c = 0; c < m.cols(); ++c) row[c] = gv;
        }
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::TileCols: {
        const auto& go = og[0];
        Matrix<T> m(go.rows(), 1);
        for (index_t r = 0; r < go.rows(); ++r) {
          T accv = T(0);
          const T* row = go.data() + r * go.cols();
          for (index_t c = 0; c < go.cols(); ++c) accv += row[c];
          m(r, 0) = accv;
        }
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::TileRows: {
        const auto& go = og[0];
        Matrix<T> m(go.cols(), 1);
        for (index_t c = 0; c < go.cols(); ++c) {
          T accv = T(0);
          for (index_t r = 0; r < go.rows(); ++r) accv += go(r, c);
          m(c, 0) = accv;
        }
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::ExtractDiag: {
        const auto sh = shape(n.in[0]);
        Matrix<T> m(sh.first, sh.second);
        for (index_t r = 0; r < sh.first; ++r) m(r, r) = og[0](r, 0);
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::MakeDiag: {
        const auto& go = og[0];
        Matrix<T> m(go.rows(), 1);
        for (index_t r = 0; r < go.rows(); ++r) m(r, 0) = go(r, r);
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::TrilMask: {
        Matrix<T> m(og[0]);
        tril_inplace(m.view());
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::TriuMask: {
        Matrix<T> m(og[0]);
        triu_inplace(m.view());
        acc(g, n.in[0], std::move(m));
        return;
      }
      case Op::ConcatCols: {
        const auto& go = og[0];
        const auto sha = shape(n.in[0]);
        const auto shb = shape(n.in[1]);
        Matrix<T> ma(sha.first, sha.second);
        Matrix<T> mb(shb.first, shb.second);
        for (index_t r = 0; r < go.rows(); ++r) {
          const T* row = go.data() + r * go.cols();
          std::copy(row, row + sha.second, ma.data() + r * sha.second);
          std::copy(row + sha.second, row + go.cols(),
                    mb.data() + r * shb.second);
        }
        acc(g, n.in[0], std::move(ma));
        acc(g, n.in[1], std::move(mb));
        return;
      }
    }
  }

  // ---- memory plan ---------------------------------------------------------

  std::vector<std::vector<PlanEntry>> build_plan() const {
    const index_t nn = num_nodes();
    // Per (node, slot): last forward reader and backward retention.
    std::vector<std::vector<index_t>> last_reader(nn);
    std::vector<std::vector<bool>> retained(nn);
    for (index_t i = 0; i < nn; ++i) {
      const std::size_t slots = nodes_[i].out_shapes.size();
      last_reader[i].assign(slots, -1);
      retained[i].assign(slots, false);
      if (assume_backward_) {
        for (std::size_t s = 0; s < slots; ++s) {
          retained[i][s] = backward_reads_output(nodes_[i].op, static_cast<int>(s));
        }
      }
    }
    for (index_t j = 0; j < nn; ++j) {
      const Node& n = nodes_[j];
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const NodeId id = n.in[k];
        last_reader[id.node][id.slot] = j;
        if (assume_backward_ &&
            backward_reads_input(n.op, static_cast<int>(k))) {
          retained[id.node][id.slot] = true;
        }
      }
    }

    std::vector<std::vector<bool>> donated(nn);
    for (index_t i = 0; i < nn; ++i)
      donated[i].assign(nodes_[i].out_shapes.size(), false);

    std::vector<std::vector<PlanEntry>> plan(nn);
    for (index_t j = 0; j < nn; ++j) {
      const Node& n = nodes_[j];
      int dst_slot = -1;
      std::size_t src_input = 0;
      switch (n.op) {
        case Op::Trmm:
        case Op::Trsm:
          dst_slot = 0; src_input = 1; break;
        case Op::Potrf:
        case Op::Potri:
        case Op::Gelqf:
        case Op::Syevd:
          dst_slot = 0; src_input = 0; break;
        case Op::Gesvd:
          dst_slot = 2; src_input = 0; break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Square:
        case Op::Sqrt:
        case Op::Log:
        case Op::Exp:
        case Op::Abs:
        case Op::Neg:
        case Op::ScaleConst:
        case Op::AddConst:
        case Op::MulScalar:
        case Op::DivScalar:
        case Op::TrilMask:
        case Op::TriuMask:
          dst_slot = 0; src_input = 0; break;
        default:
          break;
      }
      if (dst_slot < 0) continue;
      const NodeId src = n.in[src_input];
      const Node& p = nodes_[src.node];
      if (p.op == Op::Leaf || p.op == Op::Constant) continue;
      if (retained[src.node][src.slot] || donated[src.node][src.slot]) continue;
      if (last_reader[src.node][src.slot] != j) continue;
      int uses = 0;
      for (const NodeId& id : n.in) {
        if (id == src) ++uses;
      }
      if (uses != 1) continue;
      if (p.out_shapes[src.slot] != n.out_shapes[dst_slot]) continue;
      donated[src.node][src.slot] = true;
      plan[j].push_back(PlanEntry{dst_slot, src.node, src.slot});
    }
    return plan;
  }

  static void appendflags(std::ostringstream& os, const Node& n) {
    switch (n.op) {
      case Op::Gemm2:
        os << ", ta=" << n.ta << ", tb=" << n.tb << ", alpha=" << n.alpha;
        break;
      case Op::Syrk:
        os << ", ta=" << n.ta << ", alpha=" << n.alpha;
        break;
      case Op::Trmm:
      case Op::Trsm:
        os << ", rightside=" << n.rightside << ", transpose=" << n.transpose
           << ", lower=" << n.lower << ", alpha=" << n.alpha;
        break;
      case Op::Potrf:
      case Op::Potri:
        os << ", lower=" << n.lower;
        break;
      case Op::ScaleConst:
      case Op::AddConst:
        os << ", c=" << n.cval;
        break;
      case Op::TileCols:
      case Op::TileRows:
        os << ", count=" << n.count;
        break;
      default:
        break;
    }
  }

  std::vector<Node> nodes_;
  ToleranceConfig<T> cfg_;
  bool use_plan_ = false;
  bool assume_backward_ = true;
};

}  // namespace dla
