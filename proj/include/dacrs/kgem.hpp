#pragma once

#include <algorithm>
#include <vector>

#include "dacrs/model.hpp"

namespace dacrs {

/// Replaces each entity, independently with probability `rate`, by a
/// uniformly drawn 1-hop neighbor. Isolated entities are kept.
std::vector<EntityId> substitute_entities(const std::vector<EntityId>& entities,
                                          const KgIndex& index, double rate, Rng& rng);

/// Candidate denominators for the sampled entity softmax. Row m holds m, its
/// neighbors and `count` uniform draws over all entities.
struct EntityNegatives {
  std::vector<std::vector<EntityId>> candidates;
};
EntityNegatives sample_entity_negatives(const KgIndex& index, std::size_t count, Rng& rng);

template <typename Scalar>
struct EntityLossReport {
  Scalar value = Scalar(0);
  Vector<Scalar> per_entity;
};

namespace detail {

/// Shared kernel for the entity similarity constraint. When grad is non-null
/// it receives dL/dH. Rows are processed in blocks so the |E| x |E| score
/// matrix is never materialized.
template <typename Scalar>
EntityLossReport<Scalar> entity_loss_kernel(const Matrix<Scalar>& h, const KgIndex& index,
                                            const EntityNegatives* negatives,
                                            Matrix<Scalar>* grad) {
  require_finite(h, "entity embeddings");
  const auto n = h.rows();
  if (static_cast<std::size_t>(n) != index.num_entities()) {
    throw ConfigError("entity embedding rows do not match the graph");
  }
  EntityLossReport<Scalar> report;
  report.per_entity = Vector<Scalar>::Zero(n);
  if (grad) *grad = Matrix<Scalar>::Zero(n, h.cols());

  if (negatives) {
    for (Eigen::Index m = 0; m < n; ++m) {
      const auto& nbrs = index.neighbors(static_cast<EntityId>(m));
      if (nbrs.empty()) continue;
      const auto& cand = negatives->candidates.at(static_cast<std::size_t>(m));
      Vector<Scalar> p(static_cast<Eigen::Index>(cand.size()));
      for (std::size_t i = 0; i < cand.size(); ++i) p[static_cast<Eigen::Index>(i)] = h.row(m).dot(h.row(cand[i]));
      const Scalar lse = softmax_inplace<Scalar>(p);
      const auto deg = static_cast<Scalar>(nbrs.size());
      Scalar term = deg * lse;
      for (const auto j : nbrs) term -= h.row(m).dot(h.row(j));
      report.per_entity[m] = term;
      if (grad) {
        for (std::size_t i = 0; i < cand.size(); ++i) {
          const Scalar g = deg * p[static_cast<Eigen::Index>(i)];
          grad->row(m) += g * h.row(cand[i]);
          grad->row(cand[i]) += g * h.row(m);
        }
        for (const auto j : nbrs) {
          grad->row(m) -= h.row(j);
          grad->row(j) -= h.row(m);
        }
      }
    }
  } else {
    constexpr Eigen::Index kBlock = 256;
    for (Eigen::Index start = 0; start < n; start += kBlock) {
      const auto rows = std::min(kBlock, n - start);
      Matrix<Scalar> g = h.middleRows(start, rows) * h.transpose();  // scores, then dL/dS
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto m = start + i;
        const auto& nbrs = index.neighbors(static_cast<EntityId>(m));
        if (nbrs.empty()) {
          g.row(i).setZero();
          continue;
        }
        const auto deg = static_cast<Scalar>(nbrs.size());
        Scalar term = Scalar(0);
        for (const auto j : nbrs) term -= g(i, j);
        Vector<Scalar> p = g.row(i).transpose();
        term += deg * softmax_inplace<Scalar>(p);
        report.per_entity[m] = term;
        g.row(i) = deg * p.transpose();
        for (const auto j : nbrs) g(i, j) -= Scalar(1);
      }
      if (grad) {
        grad->middleRows(start, rows).noalias() += g * h;
        grad->noalias() += g.transpose() * h.middleRows(start, rows);
      }
    }
  }
  // Fixed entity order keeps the sum bit-reproducible.
  for (Eigen::Index m = 0; m < n; ++m) report.value += report.per_entity[m];
  if (!std::isfinite(static_cast<double>(report.value))) throw NumericError("entity loss is not finite");
  return report;
}

}  // namespace detail

/// L_entity = sum_m sum_{j in N_m} -log softmax_k(h_m . h_k)[j], the softmax
/// running over every entity including m itself (or over the sampled
/// candidates when negatives is given).
template <typename Scalar>
EntityLossReport<Scalar> entity_similarity_loss(const Matrix<Scalar>& h, const KgIndex& index,
                                                const EntityNegatives* negatives = nullptr) {
  return detail::entity_loss_kernel<Scalar>(h, index, negatives, nullptr);
}

/// Exact dL_entity/dh, covering each entity's roles as anchor, neighbor and
/// softmax candidate.
template <typename Scalar>
Matrix<Scalar> entity_similarity_loss_grad(const Matrix<Scalar>& h, const KgIndex& index,
                                           const EntityNegatives* negatives = nullptr) {
  Matrix<Scalar> grad;
  detail::entity_loss_kernel<Scalar>(h, index, negatives, &grad);
  return grad;
}

template <typename Scalar>
EntityLossReport<Scalar> entity_similarity_loss_and_grad(const Matrix<Scalar>& h,
                                                         const KgIndex& index,
                                                         Matrix<Scalar>& grad,
                                                         const EntityNegatives* negatives = nullptr) {
  return detail::entity_loss_kernel<Scalar>(h, index, negatives, &grad);
}

}  // namespace dacrs
