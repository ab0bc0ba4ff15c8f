#include "refield/coupling.hpp"

#include <cmath>
#include <stdexcept>

#include "refield/simplex.hpp"

namespace refield {

namespace {

constexpr double kSimplexTol = 1e-9;

void check_alpha_rows(const Eigen::MatrixXd& alpha, int rows, int cols, const char* what) {
  if (alpha.rows() != rows || alpha.cols() != cols)
    throw std::invalid_argument(std::string(what) + ": weight shape mismatch");
  for (Eigen::Index r = 0; r < alpha.rows(); ++r) {
    if (std::abs(alpha.row(r).sum() - 1.0) > kSimplexTol || (alpha.row(r).array() < -kSimplexTol).any())
      throw std::invalid_argument(std::string(what) + ": weight row off the simplex");
  }
}

const std::vector<double>& require_gates(const std::vector<double>& gates,
                                         const std::vector<double>& bounds) {
  if (gates.size() != bounds.size())
    throw std::invalid_argument("gated kernel: one gate value per channel required");
  for (size_t r = 0; r < gates.size(); ++r) {
    if (std::abs(gates[r]) > bounds[r] + 1e-12)
      throw std::invalid_argument("gated kernel: gate value exceeds its bound");
  }
  return gates;
}

}  // namespace

KernelDims CouplingKernel::dims() const {
  return std::visit(
      [](const auto& f) -> KernelDims {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, GatedMixtureKernel>) {
          if (f.channels.empty()) return KernelDims{};
          return f.channels.front().dims();
        } else {
          return f.dims;
        }
      },
      family);
}

int CouplingKernel::gate_count() const {
  if (const auto* g = std::get_if<GatedMixtureKernel>(&family)) return static_cast<int>(g->channels.size());
  if (const auto* g = std::get_if<LowRankGatedAttentionKernel>(&family))
    return static_cast<int>(g->channels.size());
  return 0;
}

const char* CouplingKernel::family_name() const {
  struct Visitor {
    const char* operator()(const FixedBlocksKernel&) const { return "fixed_blocks"; }
    const char* operator()(const ConstantSharedKernel&) const { return "constant_shared"; }
    const char* operator()(const AttentionKernel&) const { return "attention_weighted"; }
    const char* operator()(const LowRankKernel&) const { return "low_rank"; }
    const char* operator()(const GatedMixtureKernel&) const { return "gated_mixture"; }
    const char* operator()(const LowRankGatedAttentionKernel&) const {
      return "low_rank_gated_attention";
    }
  };
  return std::visit(Visitor{}, family);
}

namespace {

double low_rank_hs(const std::vector<LowRankChannel>& channels, const std::vector<double>& gates) {
  // ||K||_HS^2 = sum_{r,s} g_r g_s (a_r . a_s)(b_r . b_s) tr(A_r^T A_s)
  double total = 0.0;
  for (size_t r = 0; r < channels.size(); ++r) {
    for (size_t s = 0; s < channels.size(); ++s) {
      double gr = gates.empty() ? 1.0 : gates[r];
      double gs = gates.empty() ? 1.0 : gates[s];
      total += gr * gs * channels[r].a.dot(channels[s].a) * channels[r].b.dot(channels[s].b) *
               (channels[r].A.array() * channels[s].A.array()).sum();
    }
  }
  return std::sqrt(std::max(total, 0.0));
}

}  // namespace

double hs_norm(const CouplingKernel& k) {
  struct Visitor {
    double operator()(const FixedBlocksKernel& f) const { return f.blocks.norm(); }
    double operator()(const ConstantSharedKernel& f) const {
      return std::sqrt(static_cast<double>(f.dims.T) * f.dims.V) * f.W.norm();
    }
    double operator()(const AttentionKernel& f) const {
      // sup over simplex rows of sum_l sum_i alpha^2 ||W_V||_F^2 = T ||W_V||_F^2
      return std::sqrt(static_cast<double>(f.dims.T)) * f.W_V.norm();
    }
    double operator()(const LowRankKernel& f) const { return low_rank_hs(f.channels, {}); }
    double operator()(const GatedMixtureKernel& f) const {
      double total = 0.0;
      for (size_t r = 0; r < f.channels.size(); ++r)
        total += f.gate_bounds[r] * hs_norm(f.channels[r]);
      return total;
    }
    double operator()(const LowRankGatedAttentionKernel& f) const {
      return low_rank_hs(f.channels, f.gate_bounds);
    }
  };
  return std::visit(Visitor{}, k.family);
}

double family_budget(const CouplingKernel& k) {
  struct Visitor {
    double operator()(const FixedBlocksKernel& f) const { return f.blocks.norm(); }
    double operator()(const ConstantSharedKernel& f) const {
      return std::sqrt(static_cast<double>(f.dims.T) * f.dims.V) * f.W.norm();
    }
    double operator()(const AttentionKernel& f) const {
      return std::sqrt(static_cast<double>(f.dims.T)) * f.W_V.norm();
    }
    double operator()(const LowRankKernel& f) const {
      double total = 0.0;
      for (const auto& c : f.channels) total += c.A.norm();
      return total;
    }
    double operator()(const GatedMixtureKernel& f) const {
      double total = 0.0;
      for (size_t r = 0; r < f.channels.size(); ++r)
        total += f.gate_bounds[r] * family_budget(f.channels[r]);
      return total;
    }
    double operator()(const LowRankGatedAttentionKernel& f) const {
      double total = 0.0;
      for (size_t r = 0; r < f.channels.size(); ++r) total += f.gate_bounds[r] * f.channels[r].A.norm();
      return total;
    }
  };
  return std::visit(Visitor{}, k.family);
}

Eigen::MatrixXd materialize_blocks(const CouplingKernel& k, const std::vector<double>& gates) {
  const KernelDims d = k.dims();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d.T * d.d_L, d.V * d.d_R);
  struct Visitor {
    Eigen::MatrixXd& out;
    const KernelDims& d;
    const std::vector<double>& gates;
    void operator()(const FixedBlocksKernel& f) const { out = f.blocks; }
    void operator()(const ConstantSharedKernel& f) const {
      for (int l = 0; l < d.T; ++l)
        for (int i = 0; i < d.V; ++i) out.block(l * d.d_L, i * d.d_R, d.d_L, d.d_R) = f.W;
    }
    void operator()(const AttentionKernel& f) const {
      for (int l = 0; l < d.T; ++l)
        for (int i = 0; i < d.V; ++i) out.block(l * d.d_L, i * d.d_R, d.d_L, d.d_R) = f.W_V;
    }
    void operator()(const LowRankKernel& f) const {
      for (const auto& c : f.channels)
        for (int l = 0; l < d.T; ++l)
          for (int i = 0; i < d.V; ++i)
            out.block(l * d.d_L, i * d.d_R, d.d_L, d.d_R) += c.a[l] * c.b[i] * c.A;
    }
    void operator()(const GatedMixtureKernel& f) const {
      require_gates(gates, f.gate_bounds);
      for (size_t r = 0; r < f.channels.size(); ++r)
        out += gates[r] * materialize_blocks(f.channels[r]);
    }
    void operator()(const LowRankGatedAttentionKernel& f) const {
      require_gates(gates, f.gate_bounds);
      for (size_t r = 0; r < f.channels.size(); ++r) {
        const auto& c = f.channels[r];
        for (int l = 0; l < d.T; ++l)
          for (int i = 0; i < d.V; ++i)
            out.block(l * d.d_L, i * d.d_R, d.d_L, d.d_R) += gates[r] * c.a[l] * c.b[i] * c.A;
      }
    }
  };
  std::visit(Visitor{out, d, gates}, k.family);
  return out;
}

Eigen::MatrixXd apply_forward(const CouplingKernel& k, const std::optional<Eigen::MatrixXd>& alpha,
                              const Eigen::MatrixXd& x_delayed, const std::vector<double>& gates) {
  const KernelDims d = k.dims();
  if (x_delayed.rows() != d.V || x_delayed.cols() != d.d_R)
    throw std::invalid_argument("apply_forward: delayed field shape mismatch");
  if (alpha) check_alpha_rows(*alpha, d.T, d.V, "apply_forward");
  Eigen::MatrixXd blocks = materialize_blocks(k, gates);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d.T, d.d_L);
  for (int l = 0; l < d.T; ++l) {
    for (int i = 0; i < d.V; ++i) {
      double w = alpha ? (*alpha)(l, i) : 1.0;
      if (w == 0.0) continue;
      out.row(l) += w * (blocks.block(l * d.d_L, i * d.d_R, d.d_L, d.d_R) *
                         x_delayed.row(i).transpose())
                            .transpose();
    }
  }
  return out;
}

Eigen::MatrixXd apply_adjoint(const CouplingKernel& k, const std::optional<Eigen::MatrixXd>& beta,
                              const Eigen::MatrixXd& h_delayed, const std::vector<double>& gates) {
  const KernelDims d = k.dims();
  if (h_delayed.rows() != d.T || h_delayed.cols() != d.d_L)
    throw std::invalid_argument("apply_adjoint: delayed field shape mismatch");
  if (beta) check_alpha_rows(*beta, d.V, d.T, "apply_adjoint");
  Eigen::MatrixXd blocks = materialize_blocks(k, gates);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d.V, d.d_R);
  for (int i = 0; i < d.V; ++i) {
    for (int l = 0; l < d.T; ++l) {
      double w = beta ? (*beta)(i, l) : 1.0;
      if (w == 0.0) continue;
      out.row(i) += w * (blocks.block(l * d.d_L, i * d.d_R, d.d_L, d.d_R).transpose() *
                         h_delayed.row(l).transpose())
                            .transpose();
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd attention_scores(const AttentionKernel& k, const Eigen::MatrixXd& h,
                                 const Eigen::MatrixXd& x) {
  const KernelDims& d = k.dims;
  if (h.rows() != d.T || h.cols() != d.d_L || x.rows() != d.V || x.cols() != d.d_R)
    throw std::invalid_argument("attention_weights: field shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.W_Q.rows()));
  Eigen::MatrixXd q = h * k.W_Q.transpose();     // T x d_K
  Eigen::MatrixXd keys = x * k.W_K.transpose();  // V x d_K
  return scale * q * keys.transpose();
}

}  // namespace

Eigen::MatrixXd attention_weights(const AttentionKernel& k, const Eigen::MatrixXd& h,
                                  const Eigen::MatrixXd& x) {
  Eigen::MatrixXd scores = attention_scores(k, h, x);
  Eigen::MatrixXd alpha(scores.rows(), scores.cols());
  for (Eigen::Index l = 0; l < scores.rows(); ++l)
    alpha.row(l) = sparsemax(scores.row(l).transpose()).transpose();
  return alpha;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> attention_alpha_beta(const AttentionKernel& k,
                                                                 const Eigen::MatrixXd& h,
                                                                 const Eigen::MatrixXd& x) {
  Eigen::MatrixXd scores = attention_scores(k, h, x);
  Eigen::MatrixXd alpha(scores.rows(), scores.cols());
  for (Eigen::Index l = 0; l < scores.rows(); ++l)
    alpha.row(l) = sparsemax(scores.row(l).transpose()).transpose();
  Eigen::MatrixXd beta(scores.cols(), scores.rows());
  for (Eigen::Index i = 0; i < scores.cols(); ++i)
    beta.row(i) = sparsemax(scores.col(i)).transpose();
  return {alpha, beta};
}

void check_kernel(const CouplingKernel& k) {
  const KernelDims d = k.dims();
  if (d.T < 1 || d.V < 1 || d.d_L < 1 || d.d_R < 1)
    throw std::invalid_argument("kernel: dimensions must be positive");
  struct Visitor {
    const KernelDims& d;
    void operator()(const FixedBlocksKernel& f) const {
      if (f.blocks.rows() != d.T * d.d_L || f.blocks.cols() != d.V * d.d_R)
        throw std::invalid_argument("fixed kernel: block matrix shape mismatch");
    }
    void operator()(const ConstantSharedKernel& f) const {
      if (f.W.rows() != d.d_L || f.W.cols() != d.d_R)
        throw std::invalid_argument("constant kernel: W shape mismatch");
    }
    void operator()(const AttentionKernel& f) const {
      if (f.W_V.rows() != d.d_L || f.W_V.cols() != d.d_R)
        throw std::invalid_argument("attention kernel: W_V shape mismatch");
      if (f.W_Q.cols() != d.d_L || f.W_K.cols() != d.d_R || f.W_Q.rows() != f.W_K.rows())
        throw std::invalid_argument("attention kernel: projection shape mismatch");
      Eigen::JacobiSVD<Eigen::MatrixXd> sq(f.W_Q), sk(f.W_K);
      if (sq.singularValues()[0] > f.C_W + 1e-9 || sk.singularValues()[0] > f.C_W + 1e-9)
        throw std::invalid_argument("attention kernel: projection exceeds spectral bound C_W");
    }
    void operator()(const LowRankKernel& f) const {
      for (const auto& c : f.channels) {
        if (c.a.size() != d.T || c.b.size() != d.V || c.A.rows() != d.d_L || c.A.cols() != d.d_R)
          throw std::invalid_argument("low-rank kernel: channel shape mismatch");
        if (c.a.squaredNorm() > 1.0 + 1e-9 || c.b.squaredNorm() > 1.0 + 1e-9)
          throw std::invalid_argument("low-rank kernel: channel factors must have norm <= 1");
      }
    }
    void operator()(const GatedMixtureKernel& f) const {
      if (f.gate_bounds.size() != f.channels.size())
        throw std::invalid_argument("gated mixture: one gate bound per channel");
      if (f.channels.empty()) throw std::invalid_argument("gated mixture: no channels");
      for (size_t r = 0; r < f.channels.size(); ++r) {
        if (!(f.gate_bounds[r] >= 0.0))
          throw std::invalid_argument("gated mixture: gate bounds must be nonnegative");
        check_kernel(f.channels[r]);
        KernelDims cd = f.channels[r].dims();
        if (cd.T != d.T || cd.V != d.V || cd.d_L != d.d_L || cd.d_R != d.d_R)
          throw std::invalid_argument("gated mixture: channel dimensions disagree");
      }
    }
    void operator()(const LowRankGatedAttentionKernel& f) const {
      if (f.gate_bounds.size() != f.channels.size())
        throw std::invalid_argument("gated low-rank kernel: one gate bound per channel");
      for (const auto& c : f.channels) {
        if (c.a.size() != d.T || c.b.size() != d.V || c.A.rows() != d.d_L || c.A.cols() != d.d_R)
          throw std::invalid_argument("gated low-rank kernel: channel shape mismatch");
        if (c.a.squaredNorm() > 1.0 + 1e-9 || c.b.squaredNorm() > 1.0 + 1e-9)
          throw std::invalid_argument("gated low-rank kernel: channel factors must have norm <= 1");
      }
    }
  };
  std::visit(Visitor{d}, k.family);
}

}  // namespace refield
