#pragma once

// Private approximations of exp, reciprocal, softmax, activations and layer
// norm on top of the Beaver-triple substrate. All kernels are stateless; the
// dealer and channel travel in an MpcContext.

#include "merge/activation.hpp"
#include "merge/sharing.hpp"

namespace merge {

struct MpcContext {
  Channel& ch;
  Dealer& dealer;
};

struct NonlinearConfig {
  int exp_iterations = 8;
  int recip_newton_iterations = 10;
  // Initial guess y0 = scale * exp(offset - x) + bias. The exp runs with its
  // own iteration count so that it stays valid for x up to 2^(k-1).
  double recip_init_scale = 3.0;
  double recip_init_offset = 0.5;
  double recip_init_bias = 0.003;
  int recip_init_exp_iterations = 9;

  ActivationKind activation = ActivationKind::ReluSignAssisted;
  QuadCoeffs quad;

  // Public stand-in for the row max in softmax.
  double softmax_shift = 2.0;

  // Inverse square root for layer norm: Newton from y0 = 1/sqrt(ln_var_max).
  // Converges for variances in (0, 3 * ln_var_max).
  int ln_iterations = 20;
  double ln_var_max = 256.0;

  void validate() const;
};

// exp(x) via a second-order limit: b = 1/2 + (1 + x/2^(k-1))^2 / 2, then
// b^(2^(k-1)). Exactly k squaring rounds; meaningful for x >= -2^(k-1).
SharedTensor mpc_exp(const SharedTensor& x, int iterations, MpcContext& m);
SharedTensor mpc_exp(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m);

// 1/x by Newton iteration, x > 0. Rounds: init exp + 2 per iteration.
SharedTensor mpc_reciprocal(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m);

// Row-wise softmax over the last dimension with a public shift instead of a
// private max. `keep`, if non-empty, is a public 0/1 matrix of x's shape
// applied after exponentiation (causal masking). Charged to Softmax.
SharedTensor mpc_softmax(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m,
                         const FixedTensor& keep = {});

// Charged to Linear.
SharedTensor mpc_activation(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m);

// Row-wise (x - mean) / sqrt(var) * gamma + beta; gamma and beta are shared
// rows of length cols(x). Charged to the caller's category.
SharedTensor mpc_layernorm(const SharedTensor& x, const SharedTensor& gamma,
                           const SharedTensor& beta, const NonlinearConfig& cfg, MpcContext& m);

// Stack a shared row `rows` times.
SharedTensor repeat_rows(const SharedTensor& row, std::size_t rows);

// Rounds charged by one call of each kernel.
int exp_rounds(const NonlinearConfig& cfg);
int reciprocal_rounds(const NonlinearConfig& cfg);
int softmax_rounds(const NonlinearConfig& cfg);

}  // namespace merge
