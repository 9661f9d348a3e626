#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tos/convex.hpp"
#include "tos/linops.hpp"
#include "tos/vec.hpp"

namespace tos {

// min_x  f(Ax) + g(x) + h(x)  with f separable across the row blocks of A,
// addressed through the saddle form  min_x max_y  h(x) + g(x) + <Ax,y> - f*(y).
template <typename Scalar>
struct SaddleProblem {
  std::shared_ptr<const BlockLinearOperator<Scalar>> A;
  std::vector<ConjProxableBlock<Scalar>> f_blocks;
  ProxableFunction<Scalar> g;
  SmoothFunction<Scalar> h;
  Scalar L = 0;  // certified Lipschitz bound for grad h

  Index n() const { return A->block_count(); }
  Index dim() const { return A->domain_dim(); }

  void check() const {
    if (!A) throw std::invalid_argument("problem: missing operator");
    if (static_cast<Index>(f_blocks.size()) != A->block_count())
      throw std::invalid_argument("problem: " + std::to_string(f_blocks.size()) +
                                  " data blocks for " + std::to_string(A->block_count()) +
                                  " operator blocks");
    for (Index i = 0; i < A->block_count(); ++i)
      if (f_blocks[static_cast<size_t>(i)].dim() != A->block_dim(i))
        throw std::invalid_argument("problem: data block " + std::to_string(i) + " has dim " +
                                    std::to_string(f_blocks[static_cast<size_t>(i)].dim()) +
                                    ", operator block has " + std::to_string(A->block_dim(i)));
    if (!(L >= Scalar(0))) throw std::invalid_argument("problem: L must be nonnegative");
  }

  BlockVec<Scalar> zero_dual() const { return BlockVec<Scalar>::zero(A->block_dims()); }

  Scalar f_eval(const BlockVec<Scalar>& z) const {
    Scalar s = 0;
    for (size_t i = 0; i < f_blocks.size(); ++i) s += eval(f_blocks[i], z[static_cast<Index>(i)]);
    return s;
  }

  Scalar fstar_eval(const BlockVec<Scalar>& y) const {
    Scalar s = 0;
    for (size_t i = 0; i < f_blocks.size(); ++i)
      s += conjugate_eval(f_blocks[i], y[static_cast<Index>(i)]);
    return s;
  }
};

// f(Ax) + g(x) + h(x)
template <typename Scalar>
Scalar primal_objective(const SaddleProblem<Scalar>& prob, const Vec<Scalar>& x) {
  return prob.f_eval(apply(*prob.A, x)) + eval(prob.g, x) + eval(prob.h, x);
}

}  // namespace tos
