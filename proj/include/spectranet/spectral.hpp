#pragma once

#include <Eigen/Dense>

#include "spectranet/errors.hpp"
#include "spectranet/tensorops.hpp"

namespace spectranet {

/// Fixed temporal basis for the latent-space spectral decomposition.
///
/// Rows are ordered [trend 0..degree][cos 0..n_freq][sin 0..n_freq] and
/// evaluated on normalized time t~ = t / d_t for t in {0, ..., d_t - 1}:
///
///   trend row i : t~^i
///   cos   row i : cos(2 pi i t~)
///   sin   row i : sin(2 pi i t~)
///
/// Normalizing time keeps the harmonics non-degenerate on the integer grid
/// (on raw integer t every cosine row would collapse to the constant 1) and
/// keeps the polynomial rows bounded by 1. Harmonic indices above d_t / 2
/// alias lower ones on this grid; they are kept unless capped via max_freq.
struct TemporalBasis {
  Eigen::MatrixXd rows;  // d x d_t
  int degree = 0;
  int n_freq = 0;
  int d_t = 0;

  long size() const { return rows.rows(); }
};

/// Number of basis rows: (degree + 1) + 2 * (n_freq + 1).
long basis_size(int degree, int n_freq);

/// Builds the basis for a window of length `window`. The number of harmonics
/// is window / 2, optionally capped at max_freq (pass a negative max_freq to
/// keep the full range).
TemporalBasis build_basis(int degree, int window, int d_t, int max_freq = -1);

/// E[i,:] = z[i] * B[i,:].
Eigen::MatrixXd expand(const Eigen::VectorXd& z, const TemporalBasis& basis);

/// Gradient of a scalar w.r.t. z given its gradient w.r.t. the embedding:
/// grad_z[i] = <grad_e[i,:], B[i,:]>.
Eigen::VectorXd expand_backward(const Eigen::MatrixXd& grad_e,
                                const TemporalBasis& basis);

/// Ablation route: reshape a free length d*d_t vector into the embedding,
/// flat index i * d_t + t -> E(i, t).
Eigen::MatrixXd no_basis_embedding(const Eigen::VectorXd& flat, long d, long d_t);

Eigen::VectorXd no_basis_backward(const Eigen::MatrixXd& grad_e);

enum class LatentMode { kBasis, kNoBasis };

/// The latent -> embedding map for the active mode. In basis mode the latent
/// has one coefficient per basis row; in no-basis mode it is the flattened
/// embedding itself.
struct LatentMap {
  TemporalBasis basis;
  LatentMode mode = LatentMode::kBasis;

  long latent_dim() const {
    return mode == LatentMode::kBasis ? basis.size() : basis.size() * basis.d_t;
  }
  Eigen::MatrixXd embed(const Eigen::VectorXd& z) const;
  Eigen::VectorXd embed_backward(const Eigen::MatrixXd& grad_e) const;
};

/// Stacks per-window embeddings of the latent columns z(:, b) into a
/// (B, d, d_t) tensor.
Tensor3 embed_batch(const Eigen::MatrixXd& z, const LatentMap& map);

/// Per-window adjoint of embed_batch; returns latent gradients as columns.
Eigen::MatrixXd embed_batch_backward(const Tensor3& grad_e, const LatentMap& map);

}  // namespace spectranet
