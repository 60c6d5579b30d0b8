// SPDX-License-Identifier: Apache-2.0
#include "asgn/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include "asgn/json_util.hpp"

namespace asgn::training {

using model::Matrix;
using nlohmann::json;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'A', 'S', 'G', 'N'};

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffleStream = 0x5E1EC7ULL << 20;
constexpr std::uint64_t kWindowStream = 0x0A11CEULL << 32;
constexpr std::uint64_t kHeadStream = 0xF17EULL;

std::string optimizer_name(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "sgd") return Optimizer::kSgd;
  throw ConfigError("train.optimizer: unknown optimizer '" + s + "' (adam | sgd)");
}

}  // namespace

// ---- config -------------------------------------------------------------------------

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train." + what);
  };
  need(c.epochs >= 0, "epochs must be >= 0");
  need(std::isfinite(c.lr) && c.lr >= 0.0, "lr must be finite and >= 0");
  need(std::isfinite(c.lambda) && c.lambda >= 0.0, "lambda must be >= 0");
  need(std::isfinite(c.tau) && c.tau > 0.0, "tau must be > 0");
  need(c.hidden >= 1, "hidden must be >= 1");
  need(c.window >= 1, "window must be >= 1");
  need(c.khop >= 0, "khop must be >= 0");
  need(c.radius_km > 0.0, "radius_km must be > 0");
  need(c.batch >= 1, "batch must be >= 1");
  need(c.patience >= 0, "patience must be >= 0");
  need(c.windows_per_epoch >= 0, "windows_per_epoch must be >= 0");
  need(c.val_windows >= 0, "val_windows must be >= 0");
  need(c.kl_weight >= 0.0, "kl_weight must be >= 0");
  need(c.gcn_layers >= 0, "gcn_layers must be >= 0");
  need(c.jobs >= 1, "jobs must be >= 1");
}

json to_json(const TrainConfig& c) {
  return {{"phase", model::to_string(c.phase)},
          {"variant", model::to_string(c.variant)},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"hidden", c.hidden},
          {"window", c.window},
          {"khop", c.khop},
          {"radius_km", c.radius_km},
          {"batch", c.batch},
          {"seed", c.seed},
          {"optimizer", optimizer_name(c.optimizer)},
          {"clip_norm", c.clip_norm},
          {"patience", c.patience},
          {"windows_per_epoch", c.windows_per_epoch},
          {"val_windows", c.val_windows},
          {"freeze_structure", c.freeze_structure},
          {"kl_weight", c.kl_weight},
          {"gcn_layers", c.gcn_layers},
          {"jobs", c.jobs}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  const std::string ctx = "train";
  reject_unknown_keys(j,
                      {"phase", "variant", "epochs", "lr", "lambda", "tau", "hidden", "window",
                       "khop", "radius_km", "batch", "seed", "optimizer", "clip_norm",
                       "patience", "windows_per_epoch", "val_windows", "freeze_structure",
                       "kl_weight", "gcn_layers", "jobs"},
                      ctx);
  TrainConfig c = base;
  std::string s;
  try {
    if (j.contains("phase")) c.phase = model::phase_from_string(j.at("phase").get<std::string>());
    if (j.contains("variant")) {
      c.variant = model::variant_from_string(j.at("variant").get<std::string>());
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  read_key(j, "epochs", c.epochs, ctx);
  read_key(j, "lr", c.lr, ctx);
  read_key(j, "lambda", c.lambda, ctx);
  read_key(j, "tau", c.tau, ctx);
  read_key(j, "hidden", c.hidden, ctx);
  read_key(j, "window", c.window, ctx);
  read_key(j, "khop", c.khop, ctx);
  read_key(j, "radius_km", c.radius_km, ctx);
  read_key(j, "batch", c.batch, ctx);
  read_key(j, "seed", c.seed, ctx);
  if (j.contains("optimizer")) {
    read_key(j, "optimizer", s, ctx);
    c.optimizer = optimizer_from_string(s);
  }
  read_key(j, "clip_norm", c.clip_norm, ctx);
  read_key(j, "patience", c.patience, ctx);
  read_key(j, "windows_per_epoch", c.windows_per_epoch, ctx);
  read_key(j, "val_windows", c.val_windows, ctx);
  read_key(j, "freeze_structure", c.freeze_structure, ctx);
  read_key(j, "kl_weight", c.kl_weight, ctx);
  read_key(j, "gcn_layers", c.gcn_layers, ctx);
  read_key(j, "jobs", c.jobs, ctx);
  validate(c);
  return c;
}

model::ModelShape shape_for(const TrainConfig& cfg, const SimConfig& sim) {
  model::ModelShape s;
  s.hidden = cfg.hidden;
  s.gcn_layers = cfg.gcn_layers;
  s.platforms = static_cast<int>(sim.platforms.size());
  return s;
}

model::ForwardConfig forward_config(const TrainConfig& cfg) {
  model::ForwardConfig f;
  f.variant = cfg.variant;
  f.tau = cfg.tau;
  f.distance_scale_km = cfg.radius_km;
  f.kl_weight = cfg.kl_weight;
  return f;
}

// ---- checkpoint IO ------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

void put_tensor(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
    }
  }
}

Matrix get_tensor(const std::vector<std::uint8_t>& in, std::size_t& at, Eigen::Index rows,
                  Eigen::Index cols) {
  const auto need = static_cast<std::size_t>(rows * cols) * 4;
  if (at + need > in.size()) throw CheckpointError("checkpoint: truncated tensor payload");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = static_cast<double>(std::bit_cast<float>(get_u32(in, at)));
      at += 4;
    }
  }
  return m;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  const auto& tensors = c.params.tensors();
  const bool adam = c.optimizer.kind == Optimizer::kAdam && !c.optimizer.m.empty();
  json layout = json::array();
  for (const auto& t : tensors) {
    layout.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  }
  json header = {{"format", "asgn-checkpoint"},
                 {"shape", model::to_json(c.params.shape())},
                 {"config", c.config},
                 {"epoch", c.epoch},
                 {"rng", {{"seed", c.seed}, {"epoch", c.epoch}}},
                 {"optimizer",
                  {{"kind", optimizer_name(c.optimizer.kind)},
                   {"step", c.optimizer.step},
                   {"moments", adam}}},
                 {"tensors", layout}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : tensors) put_tensor(out, t.value);
  if (adam) {
    for (const auto& m : c.optimizer.m) put_tensor(out, m);
    for (const auto& v : c.optimizer.v) put_tensor(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& in) {
  if (in.size() < 12 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic (not an ASGN checkpoint)");
  }
  const std::uint32_t version = get_u32(in, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t len = get_u32(in, 8);
  if (12 + static_cast<std::size_t>(len) > in.size()) {
    throw CheckpointError("checkpoint: truncated header");
  }
  json header;
  try {
    header = json::parse(in.begin() + 12, in.begin() + 12 + len);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  try {
    const auto shape = model::shape_from_json(header.at("shape"));
    c.params = ModelParams::zeros(shape);
    c.config = header.at("config");
    c.epoch = header.at("epoch").get<int>();
    c.seed = header.at("rng").at("seed").get<std::uint64_t>();
    const auto& opt = header.at("optimizer");
    c.optimizer.kind = optimizer_from_string(opt.at("kind").get<std::string>());
    c.optimizer.step = opt.at("step").get<std::int64_t>();
    const auto& layout = header.at("tensors");
    if (layout.size() != c.params.size()) {
      throw CheckpointError("checkpoint: tensor count does not match the model shape");
    }
    std::size_t at = 12 + len;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      auto& t = c.params.tensors()[i];
      const auto rows = layout[i].at("rows").get<Eigen::Index>();
      const auto cols = layout[i].at("cols").get<Eigen::Index>();
      if (layout[i].at("name").get<std::string>() != t.name || rows != t.value.rows() ||
          cols != t.value.cols()) {
        throw CheckpointError("checkpoint: tensor " + std::to_string(i) + " ('" +
                              layout[i].at("name").get<std::string>() +
                              "') does not match the model layout");
      }
      t.value = get_tensor(in, at, rows, cols);
    }
    if (opt.at("moments").get<bool>()) {
      for (auto* slot : {&c.optimizer.m, &c.optimizer.v}) {
        for (const auto& t : c.params.tensors()) {
          slot->push_back(get_tensor(in, at, t.value.rows(), t.value.cols()));
        }
      }
    }
    if (at != in.size()) throw CheckpointError("checkpoint: trailing bytes after payload");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(c);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

ModelParams handoff(const ModelParams& pretrained, const model::ModelShape& shape,
                    std::uint64_t seed) {
  if (!(pretrained.shape() == shape)) {
    throw CheckpointError("pretrain checkpoint shape does not match the fine-tuning model");
  }
  ModelParams out = ModelParams::init(shape, derive_seed(seed, kHeadStream));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& t = out.tensors()[i];
    if (t.name.rfind("head.fine.", 0) == 0) continue;
    t.value = pretrained.tensors()[i].value;
  }
  return out;
}

// ---- gradients / optimiser ----------------------------------------------------------

std::vector<bool> trainable_mask(const ModelParams& params, const TrainConfig& cfg) {
  std::vector<bool> mask(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.tensors()[i].name;
    mask[i] = model::is_used(name, cfg.variant, cfg.phase) &&
              !(cfg.freeze_structure && model::is_structure_tensor(name));
  }
  return mask;
}

WindowGrad window_gradient(const ModelParams& params, const SubgraphWindow& w,
                           const TrainConfig& cfg, const std::vector<bool>& trainable,
                           NoiseSource& noise) {
  ad::Tape tape;
  const auto b = model::bind(tape, params, trainable);
  const auto loss =
      model::window_loss(b, params, w, cfg.phase, forward_config(cfg), cfg.lambda, noise);
  tape.backward(loss.total);
  WindowGrad out;
  out.loss = loss.total.scalar();
  out.data = loss.data;
  out.grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = b.vars[i].grad();
    const Matrix& v = params.tensors()[i].value;
    out.grads.push_back(g.size() == v.size() ? g : Matrix::Zero(v.rows(), v.cols()));
  }
  return out;
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

OptimizerState fresh_optimizer(const ModelParams& params, Optimizer kind) {
  OptimizerState s;
  s.kind = kind;
  if (kind == Optimizer::kAdam) {
    for (const auto& t : params.tensors()) {
      s.m.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
      s.v.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    }
  }
  return s;
}

void apply_update(ModelParams& params, OptimizerState& state, const std::vector<Matrix>& grads,
                  const std::vector<bool>& trainable, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.step;
  if (state.kind == Optimizer::kAdam && state.m.empty()) {
    state = fresh_optimizer(params, Optimizer::kAdam);
    state.step = 1;
  }
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable.empty() && !trainable[i]) continue;
    Matrix& w = params.tensors()[i].value;
    const Matrix& g = grads[i];
    if (state.kind == Optimizer::kSgd) {
      w -= lr * g;
      continue;
    }
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g.cwiseProduct(g);
    w.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
}

// ---- fit ----------------------------------------------------------------------------

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<WindowKey> training_keys(const Dataset& ds, const TrainConfig& cfg) {
  std::vector<NodeId> targets(ds.grid.size());
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<NodeId>(i);
  auto keys = window_keys(ds.split, cfg.window, targets, Split::kTrain);
  if (keys.empty()) {
    throw ConfigError("no training windows: the train split has " +
                      std::to_string(ds.split.train_end) + " steps but window " +
                      std::to_string(cfg.window) + " needs at least " +
                      std::to_string(cfg.window + 1));
  }
  return keys;
}

namespace {

/// Evenly spaced subset of `keys` of size `limit` (0 = all), deterministic.
std::vector<WindowKey> spaced_subset(const std::vector<WindowKey>& keys, int limit) {
  if (limit <= 0 || static_cast<std::size_t>(limit) >= keys.size()) return keys;
  std::vector<WindowKey> out;
  out.reserve(static_cast<std::size_t>(limit));
  for (int i = 0; i < limit; ++i) {
    out.push_back(keys[static_cast<std::size_t>(i) * keys.size() / static_cast<std::size_t>(limit)]);
  }
  return out;
}

}  // namespace

std::vector<WindowKey> validation_keys(const Dataset& ds, const TrainConfig& cfg) {
  std::vector<NodeId> targets(ds.grid.size());
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<NodeId>(i);
  return spaced_subset(window_keys(ds.split, cfg.window, targets, Split::kVal), cfg.val_windows);
}

double evaluate_loss(const ModelParams& params, const DatasetGraphs& graphs,
                     const std::vector<WindowKey>& keys, const TrainConfig& cfg) {
  if (keys.empty()) return 0.0;
  std::vector<double> losses(keys.size());
  const auto fwd = forward_config(cfg);
  parallel_for(static_cast<int>(keys.size()), cfg.jobs, [&](int i) {
    const auto w = make_window(graphs, keys[static_cast<std::size_t>(i)], cfg.window, cfg.khop,
                               cfg.phase == Phase::kFinetune);
    ad::Tape tape;
    const auto b = model::bind(tape, params, std::vector<bool>(params.size(), false));
    ZeroNoise noise;
    const model::Var loss = cfg.phase == Phase::kPretrain
                         ? model::pretrain_data_loss(b, w, fwd, noise)
                         : model::finetune_data_loss(b, w, fwd, noise);
    losses[static_cast<std::size_t>(i)] = loss.scalar();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

FitResult fit(const Dataset& ds, const TrainConfig& cfg, const FitOptions& opt) {
  validate(cfg);
  const auto shape = shape_for(cfg, ds.config);
  ModelParams params = opt.init ? *opt.init : ModelParams::init(shape, cfg.seed);
  if (!(params.shape() == shape)) {
    throw CheckpointError("initial parameters do not match the configured model shape");
  }
  const DatasetGraphs graphs(ds, RadiusOptions{cfg.radius_km, true});
  const auto train = training_keys(ds, cfg);
  const auto val = validation_keys(ds, cfg);
  const auto trainable = trainable_mask(params, cfg);
  OptimizerState state = fresh_optimizer(params, cfg.optimizer);

  FitResult result;
  auto snapshot = [&](int epoch) {
    Checkpoint c;
    c.params = params;
    c.optimizer = state;
    c.config = to_json(cfg);
    c.epoch = epoch;
    c.seed = cfg.seed;
    return c;
  };
  result.checkpoint = snapshot(0);
  double best = val.empty() ? 0.0 : evaluate_loss(params, graphs, val, cfg);
  if (!std::isfinite(best)) best = INFINITY;
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates over all training windows, then take a prefix.
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededNoise shuffle(derive_seed(cfg.seed, kShuffleStream + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    const std::size_t count = cfg.windows_per_epoch > 0
                                  ? std::min<std::size_t>(order.size(), cfg.windows_per_epoch)
                                  : order.size();

    double epoch_loss = 0.0;
    bool finite = true;
    for (std::size_t start = 0; start < count && finite; start += cfg.batch) {
      const std::size_t n = std::min<std::size_t>(cfg.batch, count - start);
      std::vector<WindowGrad> slots(n);
      parallel_for(static_cast<int>(n), cfg.jobs, [&](int s) {
        const std::size_t pos = start + static_cast<std::size_t>(s);
        const auto w = make_window(graphs, train[order[pos]], cfg.window, cfg.khop,
                                   cfg.phase == Phase::kFinetune);
        SeededNoise noise(derive_seed(cfg.seed, kWindowStream +
                                                    (static_cast<std::uint64_t>(epoch) << 24) +
                                                    static_cast<std::uint64_t>(pos)));
        slots[static_cast<std::size_t>(s)] = window_gradient(params, w, cfg, trainable, noise);
      });
      std::vector<Matrix> grads = std::move(slots[0].grads);
      double batch_loss = slots[0].loss;
      for (std::size_t s = 1; s < n; ++s) {
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += slots[s].grads[i];
        batch_loss += slots[s].loss;
      }
      for (auto& g : grads) g /= static_cast<double>(n);
      const double norm = clip_global_norm(grads, cfg.clip_norm);
      if (!std::isfinite(batch_loss) || !std::isfinite(norm)) {
        finite = false;
        break;
      }
      epoch_loss += batch_loss;
      apply_update(params, state, grads, trainable, cfg.lr);
    }
    if (finite) {
      for (const auto& t : params.tensors()) finite = finite && t.value.allFinite();
    }
    const double val_loss = finite && !val.empty() ? evaluate_loss(params, graphs, val, cfg) : 0.0;
    if (!finite || !std::isfinite(val_loss)) {
      result.diverged = true;
      break;
    }
    EpochLoss e{epoch, epoch_loss / static_cast<double>(count), val_loss};
    result.curve.push_back(e);
    if (opt.on_epoch) opt.on_epoch(e);

    if (val.empty() || val_loss < best) {
      best = val_loss;
      since_best = 0;
      result.checkpoint = snapshot(epoch);
      result.best_epoch = epoch;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  return result;
}

void write_loss_csv(const std::vector<EpochLoss>& curve, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "epoch,train,val\n";
  char buf[128];
  for (const auto& e : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.train, e.val);
    f << buf;
  }
}

}  // namespace asgn::training
