#include "clora/adapter.hpp"

#include <cmath>
#include <string>

#include "clora/ops.hpp"
#include "clora/params.hpp"

namespace clora {

AdapterBank AdapterBank::zeros(std::size_t channels, std::size_t rank, std::size_t embed_dim,
                               std::size_t adapt_dim) {
  AdapterBank bank;
  bank.phi.assign(channels, Matrix(rank, embed_dim));
  bank.shared = Matrix(rank, adapt_dim);
  return bank;
}

AdapterBank AdapterBank::random(std::size_t channels, std::size_t rank, std::size_t embed_dim,
                                std::size_t adapt_dim, std::mt19937_64& rng) {
  AdapterBank bank = zeros(channels, rank, embed_dim, adapt_dim);
  std::normal_distribution<double> phi_dist(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
  std::normal_distribution<double> w_dist(0.0, 1.0 / std::sqrt(static_cast<double>(adapt_dim)));
  for (auto& phi : bank.phi) {
    for (double& v : phi.data()) v = phi_dist(rng);
  }
  for (double& v : bank.shared.data()) v = w_dist(rng);
  return bank;
}

void AdapterBank::validate() const {
  if (shared.empty()) throw ShapeError("adapter bank: missing shared matrix");
  for (std::size_t c = 0; c < phi.size(); ++c) {
    if (phi[c].rows() != shared.rows() || phi[c].cols() != embed_dim()) {
      throw ShapeError("adapter bank: phi[" + std::to_string(c) + "] is " +
                       phi[c].shape_string() + ", expected " + std::to_string(shared.rows()) +
                       "x" + std::to_string(embed_dim()));
    }
  }
}

Matrix effective_adapter_preactivation(const Matrix& phi_c, const Matrix& shared) {
  if (phi_c.rows() != shared.rows()) throw_shape_error("effective_adapter", phi_c, shared);
  return matmul_tn(phi_c, shared);
}

Matrix effective_adapter(const Matrix& phi_c, const Matrix& shared) {
  return relu(effective_adapter_preactivation(phi_c, shared));
}

std::vector<double> apply_adapter(std::span<const double> token, const Matrix& phi_tilde) {
  if (token.size() != phi_tilde.rows()) {
    throw ShapeError("apply_adapter: token of length " + std::to_string(token.size()) +
                     " against adapter " + phi_tilde.shape_string());
  }
  const Matrix z(1, token.size(), std::vector<double>(token.begin(), token.end()));
  const Matrix out = matmul(z, phi_tilde);
  return {out.data().begin(), out.data().end()};
}

PreparedAdapters prepare_adapters(const AdapterBank& bank) {
  PreparedAdapters p;
  p.preactivation.reserve(bank.channels());
  p.effective.reserve(bank.channels());
  for (const auto& phi : bank.phi) {
    p.preactivation.push_back(effective_adapter_preactivation(phi, bank.shared));
    p.effective.push_back(relu(p.preactivation.back()));
  }
  return p;
}

Matrix assemble_embedding(const Matrix& z_tok, const PreparedAdapters& prepared) {
  if (prepared.effective.size() != z_tok.rows()) {
    throw ShapeError("assemble_embedding: " + std::to_string(z_tok.rows()) +
                     " token rows but adapters for " + std::to_string(prepared.effective.size()) +
                     " channels");
  }
  const std::size_t width = z_tok.cols();
  const std::size_t adapt = prepared.effective.front().cols();
  Matrix out(z_tok.rows(), width + adapt);
  for (std::size_t c = 0; c < z_tok.rows(); ++c) {
    const auto token = z_tok.row(c);
    const auto adaptation = apply_adapter(token, prepared.effective[c]);
    auto dst = out.row(c);
    std::copy(token.begin(), token.end(), dst.begin());
    std::copy(adaptation.begin(), adaptation.end(),
              dst.begin() + static_cast<std::ptrdiff_t>(width));
  }
  return out;
}

Matrix assemble_embedding(const Matrix& z_tok, const AdapterBank& bank) {
  return assemble_embedding(z_tok, prepare_adapters(bank));
}

std::size_t extra_param_count(const ModelConfig& config) {
  return config.channels * config.rank * config.embed_dim + config.rank * config.adapt_dim;
}

std::size_t total_param_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& s : param_shapes(config)) total += s.rows * s.cols;
  return total;
}

}  // namespace clora
