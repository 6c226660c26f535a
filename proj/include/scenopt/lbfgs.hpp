#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <deque>

#include "scenopt/errors.hpp"
#include "scenopt/problem_data.hpp"

namespace scenopt {

/// Limited-memory BFGS buffer over dual vectors. Pairs are (step, change)
/// where the change is a gradient difference for MINFBE and a residual
/// difference for NAMA; the curvature gate and the initial scaling are the
/// same for both.
///
/// Invariants:
///   - at most `memory` pairs, oldest evicted first
///   - every stored pair satisfies <s, q> > eps_curv ||s||^2 scale_ref
///     with the scale_ref passed at push time (strict inequality)
///   - gamma0 is <s, q> / <q, q> of the newest stored pair, 1 when empty
class LbfgsBuffer {
 public:
  LbfgsBuffer(int memory, double eps_curv)
      : memory_(memory), eps_curv_(eps_curv) {
    if (memory < 1) throw InvalidParams("LbfgsBuffer: memory must be >= 1");
    if (!(eps_curv > 0.0))
      throw InvalidParams("LbfgsBuffer: eps_curv must be > 0");
  }

  /// Offers a pair. Returns false (buffer untouched) when the curvature
  /// test fails, including the degenerate s = 0 case.
  bool push(const DualVector& step, const DualVector& change,
            double scale_ref) {
    const double curvature = step.dot(change);
    if (!(curvature > eps_curv_ * step.squaredNorm() * scale_ref))
      return false;
    const double change_sq = change.squaredNorm();
    if (!(change_sq > 0.0)) return false;
    if (static_cast<int>(pairs_.size()) == memory_) pairs_.pop_front();
    pairs_.push_back(Pair{step, change, curvature});
    gamma0_ = curvature / change_sq;
    return true;
  }

  /// Two-loop recursion: returns -B g for the inverse-Hessian estimate B
  /// built from the stored pairs on top of gamma0 * I.
  DualVector apply_direction(const DualVector& grad) const {
    DualVector work = grad;
    const int count = static_cast<int>(pairs_.size());
    std::vector<double> alpha(count);
    for (int i = count - 1; i >= 0; --i) {
      alpha[i] = pairs_[i].step.dot(work) / pairs_[i].curvature;
      work -= alpha[i] * pairs_[i].change;
    }
    work *= gamma0_;
    for (int i = 0; i < count; ++i) {
      const double beta = pairs_[i].change.dot(work) / pairs_[i].curvature;
      work += (alpha[i] - beta) * pairs_[i].step;
    }
    return -work;
  }

  void clear() {
    pairs_.clear();
    gamma0_ = 1.0;
  }

  int size() const { return static_cast<int>(pairs_.size()); }
  int memory() const { return memory_; }
  double gamma0() const { return gamma0_; }

 private:
  struct Pair {
    DualVector step;
    DualVector change;
    double curvature;  ///< <step, change>, positive by the push gate
  };

  int memory_;
  double eps_curv_;
  double gamma0_ = 1.0;
  std::deque<Pair> pairs_;
};

}  // namespace scenopt
