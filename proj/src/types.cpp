#include "lcqp/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lcqp/errors.hpp"
#include "lcqp/rng.hpp"

namespace lcqp {

void SparseMatrix::sort_entries() {
  std::sort(entries.begin(), entries.end(),
            [](const SparseEntry& a, const SparseEntry& b) {
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });
}

std::vector<double> SparseMatrix::multiply(const std::vector<double>& x) const {
  std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
  for (const SparseEntry& e : entries) y[e.row] += e.value * x[e.col];
  return y;
}

std::vector<double> SparseMatrix::multiply_transpose(
    const std::vector<double>& x) const {
  std::vector<double> y(static_cast<std::size_t>(cols), 0.0);
  for (const SparseEntry& e : entries) y[e.col] += e.value * x[e.row];
  return y;
}

double SparseMatrix::quad_form(const std::vector<double>& x) const {
  double acc = 0.0;
  for (const SparseEntry& e : entries) acc += x[e.row] * e.value * x[e.col];
  return acc;
}

double SparseMatrix::max_abs() const {
  double hi = 0.0;
  for (const SparseEntry& e : entries) hi = std::max(hi, std::abs(e.value));
  return hi;
}

double objective_value(const LcqpInstance& inst, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != inst.n)
    throw ValidationError("objective_value: point length does not match n");
  double lin = 0.0;
  for (int i = 0; i < inst.n; ++i) lin += inst.c[i] * x[i];
  return 0.5 * inst.q.quad_form(x) + lin;
}

KktResiduals kkt_residuals(const LcqpInstance& inst, const std::vector<double>& x,
                           const std::vector<double>& lambda,
                           const std::vector<double>& s) {
  KktResiduals out;
  const std::vector<double> ax = inst.a.multiply(x);
  for (int i = 0; i < inst.m; ++i)
    out.primal = std::max(out.primal, std::abs(ax[i] - inst.b[i]));

  const std::vector<double> qx = inst.q.multiply(x);
  const std::vector<double> atl = inst.a.multiply_transpose(lambda);
  for (int j = 0; j < inst.n; ++j) {
    const double r = qx[j] + inst.c[j] - atl[j] - s[j];
    out.dual = std::max(out.dual, std::abs(r));
    out.comp = std::max(out.comp, std::abs(x[j] * s[j]));
  }
  return out;
}

namespace {

void check_matrix(const SparseMatrix& mat, const char* name, int rows, int cols,
                  bool want_symmetric) {
  if (mat.rows != rows || mat.cols != cols) {
    std::ostringstream msg;
    msg << name << ": expected " << rows << "x" << cols << ", got " << mat.rows
        << "x" << mat.cols;
    throw ValidationError(msg.str());
  }
  for (const SparseEntry& e : mat.entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      std::ostringstream msg;
      msg << name << ": entry (" << e.row << ", " << e.col << ") out of range";
      throw ValidationError(msg.str());
    }
    if (!std::isfinite(e.value)) {
      std::ostringstream msg;
      msg << name << ": non-finite value at (" << e.row << ", " << e.col << ")";
      throw ValidationError(msg.str());
    }
  }
  // Duplicate detection on a sorted copy; the matrix itself is not modified.
  std::vector<SparseEntry> sorted = mat.entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const SparseEntry& a, const SparseEntry& b) {
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k].row == sorted[k - 1].row && sorted[k].col == sorted[k - 1].col) {
      std::ostringstream msg;
      msg << name << ": duplicate entry at (" << sorted[k].row << ", "
          << sorted[k].col << ")";
      throw ValidationError(msg.str());
    }
  }
  if (want_symmetric) {
    if (!mat.symmetric) throw ValidationError(std::string(name) + ": symmetric flag not set");
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      const SparseEntry& e = sorted[k];
      if (e.row == e.col) continue;
      const auto it = std::lower_bound(
          sorted.begin(), sorted.end(), std::make_pair(e.col, e.row),
          [](const SparseEntry& a, const std::pair<int, int>& key) {
            if (a.row != key.first) return a.row < key.first;
            return a.col < key.second;
          });
      if (it == sorted.end() || it->row != e.col || it->col != e.row ||
          it->value != e.value) {
        std::ostringstream msg;
        msg << name << ": mirror of (" << e.row << ", " << e.col
            << ") missing or unequal";
        throw ValidationError(msg.str());
      }
    }
  }
}

}  // namespace

void validate(const LcqpInstance& inst) {
  if (inst.n <= 0) throw ValidationError("n must be positive");
  if (inst.m < 0) throw ValidationError("m must be nonnegative");
  if (inst.m > inst.n) throw ValidationError("m must not exceed n");
  if (static_cast<int>(inst.b.size()) != inst.m)
    throw ValidationError("b has wrong length");
  if (static_cast<int>(inst.c.size()) != inst.n)
    throw ValidationError("c has wrong length");
  for (double v : inst.b)
    if (!std::isfinite(v)) throw ValidationError("b has a non-finite entry");
  for (double v : inst.c)
    if (!std::isfinite(v)) throw ValidationError("c has a non-finite entry");
  check_matrix(inst.q, "q", inst.n, inst.n, /*want_symmetric=*/true);
  check_matrix(inst.a, "a", inst.m, inst.n, /*want_symmetric=*/false);
  if (!inst.x_star.empty() && static_cast<int>(inst.x_star.size()) != inst.n)
    throw ValidationError("x_star has wrong length");
  for (const auto& xt : inst.trajectory)
    if (static_cast<int>(xt.size()) != inst.n)
      throw ValidationError("trajectory entry has wrong length");

  // Probabilistic positive-semidefiniteness probe.  A handful of random
  // directions catches sign errors in generators without dragging an
  // eigensolver into the core types.
  const double scale = std::max(1.0, inst.q.max_abs());
  Rng rng(0x5eed0f00dULL + static_cast<std::uint64_t>(inst.n));
  std::vector<double> probe(static_cast<std::size_t>(inst.n));
  for (int trial = 0; trial < 16; ++trial) {
    double norm2 = 0.0;
    for (int j = 0; j < inst.n; ++j) {
      probe[j] = rng.normal();
      norm2 += probe[j] * probe[j];
    }
    const double qf = inst.q.quad_form(probe);
    if (qf < -1e-10 * scale * norm2) {
      std::ostringstream msg;
      msg << "q fails the positive-semidefiniteness probe (x'Qx = " << qf << ")";
      throw ValidationError(msg.str());
    }
  }
}

LcqpInstance to_equality_form(const SparseMatrix& q, const SparseMatrix& a,
                              const std::vector<double>& b,
                              const std::vector<double>& c,
                              const std::vector<RowSense>& senses) {
  const int n0 = a.cols;
  const int m = a.rows;
  if (static_cast<int>(senses.size()) != m)
    throw ValidationError("to_equality_form: senses has wrong length");
  if (static_cast<int>(b.size()) != m || static_cast<int>(c.size()) != n0)
    throw ValidationError("to_equality_form: b or c has wrong length");

  int slacks = 0;
  for (RowSense s : senses)
    if (s != RowSense::eq) ++slacks;

  LcqpInstance out;
  out.n = n0 + slacks;
  out.m = m;
  out.b = b;
  out.c = c;
  out.c.resize(static_cast<std::size_t>(out.n), 0.0);

  out.q = q;
  out.q.rows = out.q.cols = out.n;
  out.q.symmetric = true;

  out.a = a;
  out.a.cols = out.n;
  int next = n0;
  for (int i = 0; i < m; ++i) {
    if (senses[i] == RowSense::eq) continue;
    out.a.add(i, next, senses[i] == RowSense::le ? 1.0 : -1.0);
    ++next;
  }
  out.a.sort_entries();
  out.q.sort_entries();
  return out;
}

}  // namespace lcqp
