// SPDX-License-Identifier: Apache-2.0
#include "asgn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace asgn::model {

namespace {

Var affine(Var x, Var w, Var b) { return ad::add_row(ad::matmul(x, w), b); }

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

nlohmann::json to_json(const ModelShape& s) {
  return {{"variables", s.variables},   {"hidden", s.hidden},
          {"platforms", s.platforms},   {"gcn_layers", s.gcn_layers},
          {"score_hidden", s.score_hidden}, {"dist_hidden", s.dist_hidden}};
}

ModelShape shape_from_json(const nlohmann::json& j) {
  ModelShape s;
  s.variables = j.at("variables").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.platforms = j.at("platforms").get<int>();
  s.gcn_layers = j.at("gcn_layers").get<int>();
  s.score_hidden = j.at("score_hidden").get<int>();
  s.dist_hidden = j.at("dist_hidden").get<int>();
  return s;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoDistance: return "no-distance";
    case Variant::kFixedGraph: return "fixed-graph";
  }
  return "?";
}

std::string to_string(Phase p) { return p == Phase::kPretrain ? "pretrain" : "finetune"; }

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "no-distance") return Variant::kNoDistance;
  if (s == "fixed-graph") return Variant::kFixedGraph;
  throw std::invalid_argument("unknown variant '" + s + "' (full | no-distance | fixed-graph)");
}

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::kPretrain;
  if (s == "finetune") return Phase::kFinetune;
  throw std::invalid_argument("unknown phase '" + s + "' (pretrain | finetune)");
}

// ---- parameters -------------------------------------------------------------------

namespace {

struct Spec {
  std::string name;
  Eigen::Index rows, cols;
  bool bias;
};

std::vector<Spec> layout(const ModelShape& s) {
  if (s.variables < 1 || s.hidden < 1 || s.platforms < 0 || s.gcn_layers < 0 ||
      s.score_hidden < 1 || s.dist_hidden < 1) {
    throw std::invalid_argument("ModelShape: sizes must be positive");
  }
  const Eigen::Index c = s.variables, d = s.hidden, hc = s.score_hidden, hd = s.dist_hidden;
  std::vector<Spec> out = {{"proj.grid.W", c, d, false}, {"proj.grid.b", 1, d, true}};
  for (int p = 0; p < s.platforms; ++p) {
    out.push_back({"proj.obs" + std::to_string(p) + ".W", c, d, false});
    out.push_back({"proj.obs" + std::to_string(p) + ".b", 1, d, true});
  }
  out.push_back({"score.Wc1", d, hc, false});
  out.push_back({"score.Wc2", d, hc, false});
  out.push_back({"score.Wd", 1, hd, false});
  out.push_back({"score.Wp", 2 * hc + hd, 1, false});
  out.push_back({"score.bp", 1, 1, true});
  out.push_back({"degree.Wmu", d, d, false});
  out.push_back({"degree.bmu", 1, d, true});
  out.push_back({"degree.Wsig", d, d, false});
  out.push_back({"degree.bsig", 1, d, true});
  out.push_back({"degree.Wk", d + 1, 1, false});
  out.push_back({"degree.bk", 1, 1, true});
  for (int l = 0; l < s.gcn_layers; ++l) out.push_back({"gcn.W" + std::to_string(l), d, d, false});
  out.push_back({"readout.W", (s.gcn_layers + 1) * d, d, false});
  out.push_back({"gru.Wx", d, 3 * d, false});
  out.push_back({"gru.Wh", d, 3 * d, false});
  out.push_back({"gru.bx", 1, 3 * d, true});
  out.push_back({"gru.bh", 1, 3 * d, true});
  out.push_back({"head.fine.W", d, c, false});
  out.push_back({"head.fine.b", 1, c, true});
  out.push_back({"head.pre.grid.W", d, c, false});
  out.push_back({"head.pre.grid.b", 1, c, true});
  for (int p = 0; p < s.platforms; ++p) {
    out.push_back({"head.pre.obs" + std::to_string(p) + ".W", d, c, false});
    out.push_back({"head.pre.obs" + std::to_string(p) + ".b", 1, c, true});
  }
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelShape& shape) {
  ModelParams m;
  m.shape_ = shape;
  for (const Spec& s : layout(shape)) m.tensors_.push_back({s.name, Matrix::Zero(s.rows, s.cols)});
  return m;
}

ModelParams ModelParams::init(const ModelShape& shape, std::uint64_t seed) {
  ModelParams m = zeros(shape);
  const auto specs = layout(shape);
  SeededNoise rng(derive_seed(seed, 0x1417));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].bias) continue;
    Matrix& w = m.tensors_[i].value;
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = (2.0 * rng.uniform() - 1.0) * a;
    }
  }
  return m;
}

std::size_t ModelParams::index(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter tensor named '" + name + "'");
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool is_structure_tensor(const std::string& name) {
  return starts_with(name, "score.") || starts_with(name, "degree.");
}

bool is_used(const std::string& name, Variant v, Phase p) {
  if (v == Variant::kFixedGraph && is_structure_tensor(name)) return false;
  if (v == Variant::kNoDistance && name == "score.Wd") return false;
  if (starts_with(name, "head.fine.")) return p == Phase::kFinetune;
  if (starts_with(name, "head.pre.")) return p == Phase::kPretrain;
  return true;
}

Bound bind(ad::Tape& tape, const ModelParams& params, const std::vector<bool>& trainable) {
  if (!trainable.empty() && trainable.size() != params.size()) {
    throw std::invalid_argument("bind: trainable mask size mismatch");
  }
  Bound b;
  b.vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& v = params.tensors()[i].value;
    b.vars.push_back(trainable.empty() || trainable[i] ? tape.variable(v) : tape.constant(v));
  }
  auto get = [&](const std::string& name) { return b.vars[params.index(name)]; };
  const ModelShape& s = params.shape();
  b.proj.grid_w = get("proj.grid.W");
  b.proj.grid_b = get("proj.grid.b");
  for (int p = 0; p < s.platforms; ++p) {
    b.proj.obs_w.push_back(get("proj.obs" + std::to_string(p) + ".W"));
    b.proj.obs_b.push_back(get("proj.obs" + std::to_string(p) + ".b"));
    b.pre_obs_w.push_back(get("head.pre.obs" + std::to_string(p) + ".W"));
    b.pre_obs_b.push_back(get("head.pre.obs" + std::to_string(p) + ".b"));
  }
  b.score = {get("score.Wc1"), get("score.Wc2"), get("score.Wd"), get("score.Wp"),
             get("score.bp")};
  b.degree = {get("degree.Wmu"), get("degree.bmu"), get("degree.Wsig"),
              get("degree.bsig"), get("degree.Wk"),  get("degree.bk")};
  for (int l = 0; l < s.gcn_layers; ++l) b.gcn.push_back(get("gcn.W" + std::to_string(l)));
  b.readout = get("readout.W");
  b.gru = {get("gru.Wx"), get("gru.Wh"), get("gru.bx"), get("gru.bh")};
  b.fine_w = get("head.fine.W");
  b.fine_b = get("head.fine.b");
  b.pre_grid_w = get("head.pre.grid.W");
  b.pre_grid_b = get("head.pre.grid.b");
  return b;
}

// ---- forward ------------------------------------------------------------------------

StepGraph step_graph(const Bound& b, const LocalSubgraph& g, const ForwardConfig& cfg,
                     NoiseSource& noise) {
  ad::Tape& tape = *b.proj.grid_w.tape();
  StepGraph out;
  const auto n = static_cast<Eigen::Index>(g.size());

  if (cfg.variant == Variant::kFixedGraph) {
    out.embeddings = structlearn::project_features_uncounted(g, b.proj).rows;
    out.hard = Matrix::Zero(n, n);
    for (const auto& [a, c] : g.edges) out.hard(a, c) = out.hard(c, a) = 1.0;
    out.a_tilde = tape.constant(encoder::normalize_adjacency(out.hard));
    return out;
  }

  const auto emb = structlearn::project_features(g, b.proj);
  out.embeddings = emb.rows;
  const auto cands = structlearn::build_candidates(g);
  structlearn::ScoreOptions so;
  so.use_distance = cfg.variant == Variant::kFull;
  so.distance_scale_km = cfg.distance_scale_km;
  const Var p = structlearn::score_edges(emb.rows, cands, b.score, so);
  const Var e_hat = structlearn::gumbel_softmax(p, cands.offsets, cfg.tau, noise);
  const auto deg = structlearn::estimate_degree(emb.rows, e_hat, cands, b.degree, noise);
  auto adj = structlearn::build_adaptive_adjacency(e_hat, deg, cands, cfg.adjacency);
  adj.probabilities = p;
  out.hard = adj.hard;
  out.a_tilde = ad::gcn_normalize(adj.adjacency);
  if (cfg.kl_weight > 0.0) {
    // 0.5 * mean(mu^2 + sigma^2 - 1 - 2 log sigma)
    const Var terms = ad::sub(ad::add(ad::hadamard(deg.mu, deg.mu),
                                      ad::hadamard(deg.sigma, deg.sigma)),
                              ad::add_scalar(ad::scale(ad::log(deg.sigma), 2.0), 1.0));
    out.kl = ad::scale(ad::mean(terms), 0.5);
  }
  return out;
}

namespace {

Var accumulate_kl(Var acc, Var step) {
  if (!step.valid()) return acc;
  return acc.valid() ? ad::add(acc, step) : step;
}

}  // namespace

WindowForward forecast(const Bound& b, const SubgraphWindow& w, const ForwardConfig& cfg,
                       NoiseSource& noise) {
  if (w.snapshots.empty()) throw std::invalid_argument("forecast: window has no snapshots");
  WindowForward out;
  std::vector<Var> seq;
  seq.reserve(w.snapshots.size());
  for (const LocalSubgraph& g : w.snapshots) {
    StepGraph sg = step_graph(b, g, cfg, noise);
    const auto layers = encoder::gcn_forward(sg.embeddings, sg.a_tilde, b.gcn);
    seq.push_back(encoder::skip_readout(layers, g.target, b.readout));
    out.adjacency.push_back(std::move(sg.hard));
    out.kl = accumulate_kl(out.kl, sg.kl);
  }
  const Var z = encoder::gru_aggregate(seq, b.gru);
  out.prediction = affine(z, b.fine_w, b.fine_b);
  if (out.kl.valid()) out.kl = ad::scale(out.kl, 1.0 / static_cast<double>(w.snapshots.size()));
  return out;
}

Var l2_penalty(const Bound& b, const ModelParams& params, Variant v, Phase p, double lambda) {
  ad::Tape& tape = *b.proj.grid_w.tape();
  Var total = tape.constant(Matrix::Zero(1, 1));
  if (lambda == 0.0) return total;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!is_used(params.tensors()[i].name, v, p)) continue;
    total = ad::add(total, ad::sum_squares(b.vars[i]));
  }
  return ad::scale(total, lambda);
}

Var finetune_data_loss(const Bound& b, const SubgraphWindow& w, const ForwardConfig& cfg,
                       NoiseSource& noise, Var* kl) {
  if (!w.target_next) throw std::invalid_argument("finetune loss needs a labelled window");
  const auto& label = *w.target_next;
  ad::Tape& tape = *b.proj.grid_w.tape();
  const WindowForward f = forecast(b, w, cfg, noise);
  if (static_cast<Eigen::Index>(label.size()) != f.prediction.cols()) {
    throw std::invalid_argument("finetune loss: label width mismatch");
  }
  Matrix y(1, f.prediction.cols());
  for (std::size_t c = 0; c < label.size(); ++c) y(0, static_cast<Eigen::Index>(c)) = label[c];
  if (kl) *kl = f.kl;
  return ad::mean(ad::abs(ad::sub(f.prediction, tape.constant(std::move(y)))));
}

Var pretrain_data_loss(const Bound& b, const SubgraphWindow& w, const ForwardConfig& cfg,
                       NoiseSource& noise, Var* kl) {
  if (w.snapshots.empty()) throw std::invalid_argument("pretrain loss: empty window");
  ad::Tape& tape = *b.proj.grid_w.tape();
  const auto d = b.readout.cols();
  Var total;
  Var kl_acc;
  double count = 0.0;

  for (const LocalSubgraph& g : w.snapshots) {
    StepGraph sg = step_graph(b, g, cfg, noise);
    kl_acc = accumulate_kl(kl_acc, sg.kl);
    const auto layers = encoder::gcn_forward(sg.embeddings, sg.a_tilde, b.gcn);
    const Var h = encoder::skip_readout_all(layers, b.readout);
    const Var z = encoder::gru_step(h, tape.constant(Matrix::Zero(h.rows(), d)), b.gru);

    // Group rows by head, then compare against the inputs in stacked order.
    std::vector<std::vector<int>> groups(1 + b.pre_obs_w.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int slot = g.kind[i] == NodeKind::kGrid ? 0 : g.platform[i] + 1;
      groups[static_cast<std::size_t>(slot)].push_back(static_cast<int>(i));
    }
    std::vector<Var> preds;
    std::vector<int> order;
    for (std::size_t s = 0; s < groups.size(); ++s) {
      if (groups[s].empty()) continue;
      const Var w_head = s == 0 ? b.pre_grid_w : b.pre_obs_w[s - 1];
      const Var b_head = s == 0 ? b.pre_grid_b : b.pre_obs_b[s - 1];
      preds.push_back(affine(ad::gather_rows(z, groups[s]), w_head, b_head));
      order.insert(order.end(), groups[s].begin(), groups[s].end());
    }
    const Var pred = preds.size() == 1 ? preds.front() : ad::concat_rows(preds);
    Matrix x(pred.rows(), pred.cols());
    Matrix m(pred.rows(), pred.cols());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& f = g.features[static_cast<std::size_t>(order[r])];
      const auto& mk = g.mask[static_cast<std::size_t>(order[r])];
      for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const auto cc = static_cast<std::size_t>(c);
        x(static_cast<Eigen::Index>(r), c) = f[cc];
        m(static_cast<Eigen::Index>(r), c) = mk[cc] ? 1.0 : 0.0;
      }
    }
    count += m.sum();
    const Var err = ad::sum(ad::mask(ad::abs(ad::sub(pred, tape.constant(std::move(x)))), m));
    total = total.valid() ? ad::add(total, err) : err;
  }
  if (kl && kl_acc.valid()) {
    *kl = ad::scale(kl_acc, 1.0 / static_cast<double>(w.snapshots.size()));
  }
  return ad::scale(total, count > 0.0 ? 1.0 / count : 0.0);
}

Loss window_loss(const Bound& b, const ModelParams& params, const SubgraphWindow& w,
                 Phase phase, const ForwardConfig& cfg, double lambda, NoiseSource& noise) {
  Var kl;
  const Var data = phase == Phase::kPretrain ? pretrain_data_loss(b, w, cfg, noise, &kl)
                                             : finetune_data_loss(b, w, cfg, noise, &kl);
  const Var l2 = l2_penalty(b, params, cfg.variant, phase, lambda);
  Loss out;
  out.data = data.scalar();
  out.l2 = l2.scalar();
  out.total = ad::add(data, l2);
  if (kl.valid() && cfg.kl_weight > 0.0) out.total = ad::add(out.total, ad::scale(kl, cfg.kl_weight));
  return out;
}

}  // namespace asgn::model
