// SPDX-License-Identifier: Apache-2.0
#include "asgn/structlearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace asgn::structlearn {

namespace {

std::atomic<std::uint64_t> g_calls{0};

void count_call() { g_calls.fetch_add(1, std::memory_order_relaxed); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var affine(Var x, Var w, Var b) { return ad::add_row(ad::matmul(x, w), b); }

}  // namespace

std::uint64_t call_count() { return g_calls.load(std::memory_order_relaxed); }

// ---- projection -------------------------------------------------------------------

EmbeddingBatch project_features(const LocalSubgraph& g, const ProjectionParams& p) {
  count_call();
  return project_features_uncounted(g, p);
}

EmbeddingBatch project_features_uncounted(const LocalSubgraph& g, const ProjectionParams& p) {
  ad::Tape& tape = *p.grid_w.tape();
  const int n = static_cast<int>(g.size());

  // Rows are encoded per group (grid, then each platform) and scattered back
  // into local order with a single gather.
  std::vector<Var> blocks;
  std::vector<int> source_row(static_cast<std::size_t>(n), -1);
  int stacked = 0;

  auto encode_group = [&](const std::vector<int>& rows, Var w, Var b, const std::string& who) {
    if (rows.empty()) return;
    Matrix x(static_cast<Eigen::Index>(rows.size()), w.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& f = g.features[static_cast<std::size_t>(rows[r])];
      const auto& m = g.mask[static_cast<std::size_t>(rows[r])];
      if (static_cast<Eigen::Index>(f.size()) != w.rows()) {
        throw std::invalid_argument("project_features: " + who + " feature width " +
                                    std::to_string(f.size()) + " != encoder width " +
                                    std::to_string(w.rows()));
      }
      for (std::size_t c = 0; c < f.size(); ++c) {
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            (c < m.size() && m[c] == 0) ? 0.0 : f[c];
      }
    }
    blocks.push_back(affine(tape.constant(std::move(x)), w, b));
    for (int row : rows) source_row[static_cast<std::size_t>(row)] = stacked++;
  };

  std::vector<int> grid_rows;
  std::vector<std::vector<int>> obs_rows(p.obs_w.size());
  for (int i = 0; i < n; ++i) {
    if (g.kind[static_cast<std::size_t>(i)] == NodeKind::kGrid) {
      grid_rows.push_back(i);
    } else {
      const int plat = g.platform[static_cast<std::size_t>(i)];
      if (plat < 0 || static_cast<std::size_t>(plat) >= p.obs_w.size()) {
        throw std::invalid_argument("project_features: no encoder for platform " +
                                    std::to_string(plat));
      }
      obs_rows[static_cast<std::size_t>(plat)].push_back(i);
    }
  }
  encode_group(grid_rows, p.grid_w, p.grid_b, "grid");
  for (std::size_t k = 0; k < obs_rows.size(); ++k) {
    encode_group(obs_rows[k], p.obs_w[k], p.obs_b[k], "platform " + std::to_string(k));
  }

  EmbeddingBatch out;
  out.kind = g.kind;
  if (blocks.empty()) {
    out.rows = tape.constant(Matrix::Zero(0, p.grid_w.cols()));
    return out;
  }
  Var stackedv = blocks.size() == 1 ? blocks.front() : ad::concat_rows(blocks);
  bool identity = true;
  for (int i = 0; i < n; ++i) identity = identity && source_row[static_cast<std::size_t>(i)] == i;
  out.rows = identity ? stackedv : ad::gather_rows(stackedv, source_row);
  return out;
}

// ---- candidates -------------------------------------------------------------------

CandidateSet build_candidates(int n, std::span<const std::pair<int, int>> edges,
                              std::span<const double> km) {
  if (edges.size() != km.size()) throw std::invalid_argument("build_candidates: size mismatch");
  std::vector<std::vector<std::pair<int, double>>> nb(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    if (a < 0 || b < 0 || a >= n || b >= n || a == b) {
      throw std::invalid_argument("build_candidates: bad edge");
    }
    nb[static_cast<std::size_t>(a)].emplace_back(b, km[e]);
    nb[static_cast<std::size_t>(b)].emplace_back(a, km[e]);
  }
  CandidateSet c;
  c.nodes = n;
  c.offsets.push_back(0);
  for (int i = 0; i < n; ++i) {
    auto& list = nb[static_cast<std::size_t>(i)];
    std::sort(list.begin(), list.end());
    c.src.push_back(i);
    c.dst.push_back(i);
    c.km.push_back(0.0);
    for (const auto& [j, d] : list) {
      c.src.push_back(i);
      c.dst.push_back(j);
      c.km.push_back(d);
    }
    c.offsets.push_back(static_cast<int>(c.src.size()));
  }
  return c;
}

CandidateSet build_candidates(const LocalSubgraph& g) {
  return build_candidates(static_cast<int>(g.size()), g.edges, g.edge_km);
}

// ---- scoring ----------------------------------------------------------------------

Var score_edges(Var emb, const CandidateSet& cands, const ScoreParams& p,
                const ScoreOptions& opt) {
  count_call();
  ad::Tape& tape = *emb.tape();
  const Var left = ad::gather_rows(ad::matmul(emb, p.wc1), cands.src);
  const Var right = ad::gather_rows(ad::matmul(emb, p.wc2), cands.dst);
  const Var lr[] = {left, right};
  const Var corr = ad::sigmoid(ad::concat_cols(lr));
  const auto hc2 = corr.cols();

  Var logits;
  if (opt.use_distance) {
    Matrix d(static_cast<Eigen::Index>(cands.pairs()), 1);
    for (std::size_t k = 0; k < cands.pairs(); ++k) {
      d(static_cast<Eigen::Index>(k), 0) = cands.km[k] / opt.distance_scale_km;
    }
    const Var dist = ad::sigmoid(ad::matmul(tape.constant(std::move(d)), p.wd));
    const Var parts[] = {corr, dist};
    logits = ad::add_row(ad::matmul(ad::concat_cols(parts), p.wp), p.bp);
  } else {
    const Var wp_corr = ad::transpose(ad::slice_cols(ad::transpose(p.wp), 0, hc2));
    logits = ad::add_row(ad::matmul(corr, wp_corr), p.bp);
  }
  return ad::sigmoid(logits);
}

// ---- Gumbel-Softmax ---------------------------------------------------------------

std::vector<double> gumbel_softmax_sample(std::span<const double> p_row, double tau,
                                          NoiseSource& noise) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: tau must be > 0");
  count_call();
  std::vector<double> z(p_row.size());
  for (std::size_t j = 0; j < p_row.size(); ++j) {
    if (!(p_row[j] > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: p must be > 0");
    z[j] = (std::log(p_row[j]) + noise.gumbel()) / tau;
  }
  if (z.empty()) return z;
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

Var gumbel_softmax(Var p, std::span<const int> offsets, double tau, NoiseSource& noise) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
  count_call();
  ad::Tape& tape = *p.tape();
  Matrix g(p.rows(), 1);
  for (Eigen::Index r = 0; r < p.rows(); ++r) g(r, 0) = noise.gumbel();
  const Var logits = ad::scale(ad::add(ad::log(p), tape.constant(std::move(g))), 1.0 / tau);
  return ad::segment_softmax(logits, offsets);
}

// ---- degree -----------------------------------------------------------------------

int integer_degree(double k, int candidate_count) {
  if (candidate_count <= 0) return 0;
  const double r = std::round(k);  // half away from zero
  if (!(r >= 1.0)) return 1;       // also catches NaN
  if (r >= static_cast<double>(candidate_count)) return candidate_count;
  return static_cast<int>(r);
}

DegreeEstimate estimate_degree(Var emb, Var e_hat, const CandidateSet& cands,
                               const DegreeParams& p, NoiseSource& noise) {
  count_call();
  const Var mu = affine(emb, p.w_mu, p.b_mu);
  const Var sigma = ad::softplus(affine(emb, p.w_sigma, p.b_sigma));
  Matrix eps(mu.rows(), mu.cols());
  for (Eigen::Index r = 0; r < eps.rows(); ++r) {
    for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = noise.normal();
  }
  const Var z = ad::add(mu, ad::mask(sigma, eps));

  // Off-self mass of each node's soft sample row.
  Matrix off_self = Matrix::Ones(static_cast<Eigen::Index>(cands.pairs()), 1);
  for (int i = 0; i < cands.nodes; ++i) off_self(cands.offsets[i], 0) = 0.0;
  const Var mass_pairs = ad::mask(e_hat, off_self);
  const Var mass = ad::row_sums(
      ad::scatter_pairs(mass_pairs, cands.src, cands.dst, static_cast<Eigen::Index>(cands.nodes)));

  const Var parts[] = {z, mass};
  DegreeEstimate out;
  out.mu = mu;
  out.sigma = sigma;
  out.k = affine(ad::concat_cols(parts), p.w_k, p.b_k);
  out.K.resize(static_cast<std::size_t>(cands.nodes));
  for (int i = 0; i < cands.nodes; ++i) {
    out.K[static_cast<std::size_t>(i)] = integer_degree(out.k.value()(i, 0), cands.neighbor_count(i));
  }
  return out;
}

// ---- adjacency --------------------------------------------------------------------

Matrix top_k_adjacency(std::span<const double> e_hat, const CandidateSet& cands,
                       std::span<const int> K, bool symmetrize) {
  const int n = cands.nodes;
  Matrix a = Matrix::Zero(n, n);
  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    const int lo = cands.offsets[i] + 1, hi = cands.offsets[i + 1];
    order.resize(static_cast<std::size_t>(hi - lo));
    std::iota(order.begin(), order.end(), lo);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      if (e_hat[x] != e_hat[y]) return e_hat[x] > e_hat[y];
      return cands.dst[x] < cands.dst[y];
    });
    const int take = std::min<int>(K[static_cast<std::size_t>(i)], static_cast<int>(order.size()));
    for (int q = 0; q < take; ++q) a(i, cands.dst[order[q]]) = 1.0;
  }
  if (symmetrize) a = a.cwiseMax(a.transpose());
  return a;
}

Var soft_top_k(Var e_hat, Var k, const CandidateSet& cands, const AdjacencyOptions& opt) {
  ad::Tape& tape = *e_hat.tape();
  const double kr = opt.rank_temperature, kd = opt.degree_temperature;
  const Matrix& e = e_hat.value();
  const Matrix& kv = k.value();
  Matrix m = Matrix::Zero(e.rows(), 1);
  for (int i = 0; i < cands.nodes; ++i) {
    const int lo = cands.offsets[i] + 1, hi = cands.offsets[i + 1];
    for (int p = lo; p < hi; ++p) {
      double rank = 1.0;
      for (int q = lo; q < hi; ++q) {
        if (q != p) rank += logistic((e(q, 0) - e(p, 0)) / kr);
      }
      m(p, 0) = logistic((kv(i, 0) + 0.5 - rank) / kd);
    }
  }
  const auto ie = e_hat.id(), ik = k.id();
  std::vector<int> offsets = cands.offsets;
  return tape.record(
      std::move(m), tape.needs_grad(ie) || tape.needs_grad(ik),
      [ie, ik, kr, kd, offsets = std::move(offsets)](ad::Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& m = t.value(self);
        const Matrix& e = t.value(ie);
        Matrix ge = Matrix::Zero(e.rows(), 1);
        Matrix gk = Matrix::Zero(t.value(ik).rows(), 1);
        const int nodes = static_cast<int>(offsets.size()) - 1;
        for (int i = 0; i < nodes; ++i) {
          const int lo = offsets[i] + 1, hi = offsets[i + 1];
          for (int p = lo; p < hi; ++p) {
            const double a = g(p, 0) * m(p, 0) * (1.0 - m(p, 0)) / kd;
            gk(i, 0) += a;
            // d m_p / d rank_p = -a; rank_p grows with every e_q - e_p.
            for (int q = lo; q < hi; ++q) {
              if (q == p) continue;
              const double s = logistic((e(q, 0) - e(p, 0)) / kr);
              const double ds = s * (1.0 - s) / kr;
              ge(q, 0) -= a * ds;
              ge(p, 0) += a * ds;
            }
          }
        }
        t.accumulate(ie, ge);
        t.accumulate(ik, gk);
      });
}

AdjacencySample build_adaptive_adjacency(Var e_hat, const DegreeEstimate& degree,
                                         const CandidateSet& cands,
                                         const AdjacencyOptions& opt) {
  count_call();
  const auto n = static_cast<Eigen::Index>(cands.nodes);
  AdjacencySample out;
  out.soft_samples = e_hat;
  out.degrees = degree.k;
  out.K = degree.K;

  const Matrix& ev = e_hat.value();
  out.hard = top_k_adjacency(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.rows())),
                             cands, degree.K, opt.symmetrize);

  const Var membership = soft_top_k(e_hat, degree.k, cands, opt);
  Var soft = ad::scatter_pairs(membership, cands.src, cands.dst, n);
  if (opt.symmetrize) {
    // Smooth OR: a + a^T - a * a^T.
    const Var st = ad::transpose(soft);
    soft = ad::sub(ad::add(soft, st), ad::hadamard(soft, st));
  }
  out.soft = soft;
  out.adjacency = opt.hard ? ad::straight_through(out.hard, soft) : soft;
  return out;
}

}  // namespace asgn::structlearn
