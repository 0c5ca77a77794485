#pragma once

#include <cstddef>
#include <vector>

namespace gmdyn {

/// Time-indexed observables shared by the finite-d trainer and the DMFT
/// solver. All columns have the same length.
struct MetricsSeries {
  std::vector<double> times;
  std::vector<double> m;           // w·v*/d
  std::vector<double> q;           // ‖w‖²/d = C(t,t)
  std::vector<double> train_loss;  // α ⟨Λ(y, h)⟩
  std::vector<double> train_acc;
  std::vector<double> gen_error;

  std::size_t size() const { return times.size(); }

  void resize(std::size_t n) {
    times.resize(n);
    m.resize(n);
    q.resize(n);
    train_loss.resize(n);
    train_acc.resize(n);
    gen_error.resize(n);
  }
};

}  // namespace gmdyn
