#pragma once

#include <Eigen/Dense>
#include <optional>
#include <variant>
#include <vector>

namespace refield {

/// Bipartite coupling kernel K : {1..T} x V -> R^{d_L x d_R}. Each family
/// carries its own Hilbert-Schmidt budget structure; see family_budget.
/// All families share block dimensions (T, V, d_L, d_R).

struct KernelDims {
  int T = 1, V = 1, d_L = 1, d_R = 1;
};

/// Explicit state-independent blocks, stored as one (T d_L) x (V d_R)
/// matrix with block (l, i) at offset (l d_L, i d_R). Used directly and as
/// the fixed channels of gated mixtures.
struct FixedBlocksKernel {
  KernelDims dims;
  Eigen::MatrixXd blocks;
};

/// K(l,i) = W for all pairs; HS norm sqrt(T V) ||W||_F.
struct ConstantSharedKernel {
  KernelDims dims;
  Eigen::MatrixXd W;  // d_L x d_R
};

/// K(l,i) = W_V shared, with simplex attention weights alpha computed from
/// sparsemax of scaled dot-product scores (W_Q h_l) . (W_K e_i).
struct AttentionKernel {
  KernelDims dims;
  Eigen::MatrixXd W_V;  // d_L x d_R
  Eigen::MatrixXd W_Q;  // d_K x d_L
  Eigen::MatrixXd W_K;  // d_K x d_R
  double C_W = 1.0;     // spectral bound on the projections
};

struct LowRankChannel {
  Eigen::VectorXd a;  // T-vector, sum a^2 <= 1
  Eigen::VectorXd b;  // V-vector, sum b^2 <= 1
  Eigen::MatrixXd A;  // d_L x d_R
};

/// K(l,i) = sum_r a_r(l) b_r(i) A_r; HS norm <= sum_r ||A_r||_F.
struct LowRankKernel {
  KernelDims dims;
  std::vector<LowRankChannel> channels;
};

struct CouplingKernel;

/// K(l,i; Z) = sum_r g_r(Z) K_r(l,i), |g_r| <= gate_bounds[r]. Gate values
/// are supplied by the caller at application time; the kernel itself stays
/// state-agnostic.
struct GatedMixtureKernel {
  std::vector<double> gate_bounds;
  std::vector<CouplingKernel> channels;
};

/// K(l,i; Z) = sum_r g_r(Z) a_r(l) b_r(i) A_r with gated low-rank channels.
struct LowRankGatedAttentionKernel {
  KernelDims dims;
  std::vector<double> gate_bounds;
  std::vector<LowRankChannel> channels;
};

struct CouplingKernel {
  std::variant<FixedBlocksKernel, ConstantSharedKernel, AttentionKernel, LowRankKernel,
               GatedMixtureKernel, LowRankGatedAttentionKernel>
      family;

  KernelDims dims() const;
  int gate_count() const;  // 0 for ungated families
  const char* family_name() const;
};

/// sqrt(sum_{l,i} ||K(l,i)||_F^2), evaluated per family without
/// materializing all T V blocks where a closed form exists. State-dependent
/// families are evaluated at their worst admissible state (one-hot
/// attention rows, gates at their bounds).
double hs_norm(const CouplingKernel& k);

/// Family-specific uniform-in-state upper bound on ||K(Z)||_HS:
/// constant -> sqrt(T V) ||W||_F; attention -> sqrt(T) ||W_V||_F;
/// low-rank -> sum_r ||A_r||_F; gated -> sum_r gbar_r budget(K_r).
double family_budget(const CouplingKernel& k);

/// Materialize the effective fixed blocks for given gate values
/// (gates may be empty for ungated families).
Eigen::MatrixXd materialize_blocks(const CouplingKernel& k, const std::vector<double>& gates = {});

/// C_{R->L,l} = sum_i alpha_{l i} K(l,i) e_i. When alpha is absent the plain
/// operator action (all-ones selection) is applied, matching the master
/// equation's K_alpha(Z) X form for fixed kernels. With alpha present, each
/// row must lie on the simplex over nodes (within 1e-9).
Eigen::MatrixXd apply_forward(const CouplingKernel& k, const std::optional<Eigen::MatrixXd>& alpha,
                              const Eigen::MatrixXd& x_delayed,
                              const std::vector<double>& gates = {});

/// Mirror of apply_forward with K(l,i)^T: per-node simplex weights beta over
/// tokens, applied to the delayed symbolic field.
Eigen::MatrixXd apply_adjoint(const CouplingKernel& k, const std::optional<Eigen::MatrixXd>& beta,
                              const Eigen::MatrixXd& h_delayed,
                              const std::vector<double>& gates = {});

/// Sparsemax attention rows alpha_{l .} from scaled dot-product scores
/// between W_Q-projected tokens and W_K-projected node embeddings.
Eigen::MatrixXd attention_weights(const AttentionKernel& k, const Eigen::MatrixXd& h,
                                  const Eigen::MatrixXd& x);

/// Both selection fields from one score matrix: alpha rows over nodes
/// (T x V) and beta rows over tokens (V x T).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> attention_alpha_beta(const AttentionKernel& k,
                                                                 const Eigen::MatrixXd& h,
                                                                 const Eigen::MatrixXd& x);

void check_kernel(const CouplingKernel& k);  // invariants; throws on violation

}  // namespace refield
