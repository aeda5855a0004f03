#include "spectranet/inference.hpp"

#include <limits>
#include <string>

namespace spectranet {

InferenceResult infer_latent(const Tensor3& ref_values, const Tensor3& ref_mask,
                             Eigen::MatrixXd z0, DecoderParams& params,
                             const LatentMap& map, long iters, double step_size) {
  if (!ref_values.same_shape(ref_mask)) {
    throw contract_error("infer_latent: value/mask shape mismatch");
  }
  const long b = ref_values.batch;
  const long ref_len = ref_values.length;
  const long features = ref_values.channels;
  if (ref_len > params.hyper.window || features != params.hyper.features) {
    throw contract_error("infer_latent: reference slab does not fit the decoder window");
  }
  if (z0.rows() != map.latent_dim() || z0.cols() != b) {
    throw contract_error("infer_latent: z0 is " + std::to_string(z0.rows()) + "x" +
                         std::to_string(z0.cols()) + ", expected " +
                         std::to_string(map.latent_dim()) + "x" + std::to_string(b));
  }

  Eigen::VectorXd counts(b);
  for (long i = 0; i < b; ++i) {
    counts(i) = ref_mask.element(i).sum();
    if (counts(i) <= 0.0) throw empty_mask_error();
  }

  Eigen::MatrixXd z = std::move(z0);
  InferenceResult best;
  best.z = z;
  best.loss = Eigen::VectorXd::Constant(b, std::numeric_limits<double>::infinity());

  Tensor3 grad_out(b, features, params.hyper.window);
  for (long it = 0; it <= iters; ++it) {
    const Tensor3 e = embed_batch(z, map);
    DecoderTrace trace;
    const Tensor3 y = decoder_forward(e, params, BnMode::kRunningStats, &trace);

    grad_out.m.setZero();
    for (long i = 0; i < b; ++i) {
      const auto mask = ref_mask.element(i).array();
      const Eigen::MatrixXd diff =
          (mask != 0.0).select(y.element(i).topRows(ref_len) - ref_values.element(i), 0.0);
      const double loss = diff.squaredNorm() / counts(i);
      if (loss < best.loss(i)) {
        best.loss(i) = loss;
        best.z.col(i) = z.col(i);
      }
      if (it < iters) {
        grad_out.element(i).topRows(ref_len) = (2.0 / counts(i)) * diff;
      }
    }
    if (it == iters) break;

    const DecoderGrads grads =
        decoder_backward(trace, params, grad_out, BnMode::kRunningStats, false);
    z.noalias() -= step_size * embed_batch_backward(grads.embedding, map);
  }
  return best;
}

void ref_tensors(const WindowContext& ctx, Tensor3& values, Tensor3& mask) {
  values = Tensor3(1, ctx.ref_values.rows(), ctx.ref_len());
  mask = Tensor3(1, ctx.ref_values.rows(), ctx.ref_len());
  values.element(0) = normalize_values(ctx, ctx.ref_values, ctx.ref_mask).transpose();
  mask.element(0) = ctx.ref_mask.transpose();
}

InferenceResult infer_window(const WindowContext& ctx, DecoderParams& params,
                             const LatentMap& map, const InferenceConfig& cfg,
                             bool eval_iters, const LatentCache* cache,
                             RngStream& rng) {
  if (ctx.observed_ref() == 0) throw empty_mask_error();
  Tensor3 values, mask;
  ref_tensors(ctx, values, mask);

  Eigen::MatrixXd z0(map.latent_dim(), 1);
  const Eigen::VectorXd* cached = cache ? cache->get(ctx.start) : nullptr;
  if (cached) {
    z0.col(0) = *cached;
  } else {
    for (long i = 0; i < z0.rows(); ++i) z0(i, 0) = rng.normal(0.0, cfg.init_std);
  }
  const long iters = eval_iters ? cfg.iters_eval : cfg.iters_train;
  return infer_latent(values, mask, std::move(z0), params, map, iters, cfg.step_size);
}

}  // namespace spectranet
