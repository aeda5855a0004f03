#include "spectranet/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace spectranet {

long basis_size(int degree, int n_freq) {
  return (degree + 1) + 2L * (n_freq + 1);
}

TemporalBasis build_basis(int degree, int window, int d_t, int max_freq) {
  if (degree < 0) throw contract_error("build_basis: degree must be >= 0");
  if (window < 2) throw contract_error("build_basis: window must be >= 2");
  if (d_t < 2) throw contract_error("build_basis: d_t must be >= 2");

  TemporalBasis basis;
  basis.degree = degree;
  basis.n_freq = window / 2;
  if (max_freq >= 0) basis.n_freq = std::min(basis.n_freq, max_freq);
  basis.d_t = d_t;

  const long d = basis_size(degree, basis.n_freq);
  basis.rows.resize(d, d_t);

  Eigen::ArrayXd time(d_t);
  for (int t = 0; t < d_t; ++t) time(t) = static_cast<double>(t) / d_t;

  long row = 0;
  for (int i = 0; i <= degree; ++i) basis.rows.row(row++) = time.pow(i).matrix();
  for (int i = 0; i <= basis.n_freq; ++i)
    basis.rows.row(row++) = (2.0 * std::numbers::pi * i * time).cos().matrix();
  for (int i = 0; i <= basis.n_freq; ++i)
    basis.rows.row(row++) = (2.0 * std::numbers::pi * i * time).sin().matrix();
  return basis;
}

Eigen::MatrixXd expand(const Eigen::VectorXd& z, const TemporalBasis& basis) {
  if (z.size() != basis.size()) {
    throw contract_error("expand: latent length " + std::to_string(z.size()) +
                         ", basis has " + std::to_string(basis.size()) + " rows");
  }
  return z.asDiagonal() * basis.rows;
}

Eigen::VectorXd expand_backward(const Eigen::MatrixXd& grad_e,
                                const TemporalBasis& basis) {
  if (grad_e.rows() != basis.size() || grad_e.cols() != basis.d_t) {
    throw contract_error("expand_backward: gradient shape mismatch");
  }
  return grad_e.cwiseProduct(basis.rows).rowwise().sum();
}

Eigen::MatrixXd no_basis_embedding(const Eigen::VectorXd& flat, long d, long d_t) {
  if (flat.size() != d * d_t) {
    throw contract_error("no_basis_embedding: expected length " +
                         std::to_string(d * d_t) + ", got " +
                         std::to_string(flat.size()));
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(flat.data(), d, d_t);
}

Eigen::VectorXd no_basis_backward(const Eigen::MatrixXd& grad_e) {
  Eigen::VectorXd flat(grad_e.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), grad_e.rows(), grad_e.cols()) = grad_e;
  return flat;
}

Eigen::MatrixXd LatentMap::embed(const Eigen::VectorXd& z) const {
  return mode == LatentMode::kBasis
             ? expand(z, basis)
             : no_basis_embedding(z, basis.size(), basis.d_t);
}

Eigen::VectorXd LatentMap::embed_backward(const Eigen::MatrixXd& grad_e) const {
  return mode == LatentMode::kBasis ? expand_backward(grad_e, basis)
                                    : no_basis_backward(grad_e);
}

Tensor3 embed_batch(const Eigen::MatrixXd& z, const LatentMap& map) {
  if (z.rows() != map.latent_dim()) {
    throw contract_error("embed_batch: latent rows " + std::to_string(z.rows()) +
                         ", expected " + std::to_string(map.latent_dim()));
  }
  Tensor3 e = Tensor3::uninit(z.cols(), map.basis.size(), map.basis.d_t);
  for (long b = 0; b < z.cols(); ++b) e.element(b) = map.embed(z.col(b)).transpose();
  return e;
}

Eigen::MatrixXd embed_batch_backward(const Tensor3& grad_e, const LatentMap& map) {
  Eigen::MatrixXd grad_z(map.latent_dim(), grad_e.batch);
  for (long b = 0; b < grad_e.batch; ++b) {
    grad_z.col(b) = map.embed_backward(grad_e.element(b).transpose());
  }
  return grad_z;
}

}  // namespace spectranet
