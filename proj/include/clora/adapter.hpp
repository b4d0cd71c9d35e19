#pragma once

// Channel-aware low-rank adaptation.
//
// Each channel c owns a factor phi_c (r x D). A single matrix W (r x d) is
// shared by all channels. The effective adapter ReLU(phi_c^T W) is D x d,
// and the adaptation of a token z_c (length D) is z_c^T ReLU(phi_c^T W),
// appended to the shared embedding row.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "clora/config.hpp"
#include "clora/matrix.hpp"

namespace clora {

struct AdapterBank {
  std::vector<Matrix> phi;  // C matrices, each r x D
  Matrix shared;            // W, r x d

  std::size_t channels() const noexcept { return phi.size(); }
  std::size_t rank() const noexcept { return shared.rows(); }
  std::size_t adapt_dim() const noexcept { return shared.cols(); }
  std::size_t embed_dim() const noexcept { return phi.empty() ? 0 : phi.front().cols(); }

  static AdapterBank zeros(std::size_t channels, std::size_t rank, std::size_t embed_dim,
                           std::size_t adapt_dim);
  /// phi entries ~ N(0, 1/sqrt(r)), W entries ~ N(0, 1/sqrt(d)) (standard deviations).
  static AdapterBank random(std::size_t channels, std::size_t rank, std::size_t embed_dim,
                            std::size_t adapt_dim, std::mt19937_64& rng);

  /// Throws ShapeError unless every phi is r x D and W is r x d.
  void validate() const;
};

/// phi_c^T * W before the ReLU (D x d); its rank is at most r.
Matrix effective_adapter_preactivation(const Matrix& phi_c, const Matrix& shared);

/// ReLU(phi_c^T * W), D x d.
Matrix effective_adapter(const Matrix& phi_c, const Matrix& shared);

/// z_c^T * phi_tilde_c, length d.
std::vector<double> apply_adapter(std::span<const double> token, const Matrix& phi_tilde);

/// Effective adapters for every channel of a bank, computed once per
/// parameter snapshot.
struct PreparedAdapters {
  std::vector<Matrix> preactivation;  // C x (D x d)
  std::vector<Matrix> effective;      // C x (D x d)
};

PreparedAdapters prepare_adapters(const AdapterBank& bank);

/// Row c = [z_tok[c] | z_tok[c]^T ReLU(phi_c^T W)]; C x (D + d).
Matrix assemble_embedding(const Matrix& z_tok, const AdapterBank& bank);
Matrix assemble_embedding(const Matrix& z_tok, const PreparedAdapters& prepared);

/// Adapter parameters added on top of the shared model: C*r*D + r*d.
std::size_t extra_param_count(const ModelConfig& config);

/// Exact count over every trainable matrix the configuration instantiates.
std::size_t total_param_count(const ModelConfig& config);

}  // namespace clora
