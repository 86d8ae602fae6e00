#include "quadembed/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "quadembed/errors.hpp"

namespace qde {

using nn::Tape;
using nn::Var;

void TrainingConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  for (int w : encoder_hidden) {
    if (w <= 0) throw ConfigError("encoder widths must be positive");
  }
  for (int w : decoder_hidden) {
    if (w <= 0) throw ConfigError("decoder widths must be positive");
  }
  if (lambda_mode == LambdaMode::fixed && !(lambda_value >= 0.0)) {
    throw ConfigError("lambda must be >= 0");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("lr_decay_factor must lie in (0, 1]");
  }
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw ConfigError("invalid Adam parameters");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (!(norm_momentum > 0.0 && norm_momentum < 1.0) || !(norm_epsilon > 0.0)) {
    throw ConfigError("invalid latent norm parameters");
  }
}

double TrainingConfig::lambda(double dt) const {
  return lambda_mode == LambdaMode::one_over_dt ? 1.0 / dt : lambda_value;
}

AdamState AdamState::zeros_like(const nn::ParameterSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    s.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  return s;
}

void adam_step(const nn::ParameterSet& params, const nn::Gradients& grads, AdamState& state,
               double lr, const AdamParams& adam) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw OptimizerError("gradient / state count does not match the parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = *params[i].value;
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols()) {
      throw OptimizerError("gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].allFinite()) {
      throw OptimizerError("non-finite gradient for " + params[i].name);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    state.m[i] = adam.beta1 * state.m[i] + (1.0 - adam.beta1) * g;
    state.v[i] = adam.beta2 * state.v[i] + (1.0 - adam.beta2) * g.cwiseProduct(g);
    const auto m_hat = state.m[i].array() / bc1;
    const auto v_hat = state.v[i].array() / bc2;
    params[i].value->array() -= lr * m_hat / (v_hat.sqrt() + adam.epsilon);
  }
}

double lr_schedule(int epoch, const TrainingConfig& cfg) {
  if (epoch < 0) throw DomainError("epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

TrainableModel::TrainableModel(int latent_dim)
    : A(Matrix::Zero(latent_dim, latent_dim)),
      H(Matrix::Zero(latent_dim, latent_dim * latent_dim)),
      b(Matrix::Zero(latent_dim, 1)) {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
}

TrainableModel::TrainableModel(const QuadraticModel& model)
    : A(model.A()), H(model.H()), b(model.b()) {}

nn::ParameterSet TrainableModel::parameters() {
  nn::ParameterSet set;
  set.add("model.A", A);
  set.add("model.H", H);
  set.add("model.b", b);
  return set;
}

QuadraticModel TrainableModel::freeze() const { return QuadraticModel(A, H, b.col(0)); }

Var quadratic_rhs(const Var& z, const Var& A, const Var& H, const Var& b) {
  return add_row(matmul_t(z, A) + matmul_t(kron_rows(z), H), b);
}

Var rk4_step(const Var& z, const Var& A, const Var& H, const Var& b, double h) {
  const Var k1 = quadratic_rhs(z, A, H, b);
  const Var k2 = quadratic_rhs(z + (0.5 * h) * k1, A, H, b);
  const Var k3 = quadratic_rhs(z + (0.5 * h) * k2, A, H, b);
  const Var k4 = quadratic_rhs(z + h * k3, A, H, b);
  return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Var mse(const Var& a, const Var& b) { return mean_square(a - b); }

Var loss_total(const Var& rec, const Var& rk4, const Var& rk4_back, double lambda) {
  return rec + lambda * (rk4 + rk4_back);
}

double loss_total(double rec, double rk4, double rk4_back, double lambda) {
  return rec + lambda * (rk4 + rk4_back);
}

LossTerms record_losses(Tape& tape, nn::Network& encoder, nn::Network& decoder,
                        TrainableModel& model, const Matrix& stacked, double h, double lambda) {
  if (stacked.rows() % 3 != 0 || stacked.rows() == 0) {
    throw DimensionError("stacked batch must hold 3B rows");
  }
  const Eigen::Index batch = stacked.rows() / 3;
  const Var x = tape.constant(stacked);
  const Var z = nn::forward(tape, encoder, x);
  const Var x_hat = nn::forward(tape, decoder, z);

  const Var A = tape.parameter(model.A);
  const Var H = tape.parameter(model.H);
  const Var b = tape.parameter(model.b);
  const Var z_prev = rows(z, 0, batch);
  const Var z_curr = rows(z, batch, batch);
  const Var z_next = rows(z, 2 * batch, batch);

  LossTerms terms;
  terms.rec = mse(x_hat, x);
  terms.rk4 = mse(z_next, rk4_step(z_curr, A, H, b, h));
  terms.rk4_back = mse(z_prev, rk4_step(z_curr, A, H, b, -h));
  terms.total = loss_total(terms.rec, terms.rk4, terms.rk4_back, lambda);
  return terms;
}

double loss_reconstruction(nn::Network& encoder, nn::Network& decoder, const Matrix& batch) {
  const Matrix x_hat = nn::forward(decoder, nn::forward(encoder, batch));
  const double loss = (x_hat - batch).squaredNorm() / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw TrainingError("reconstruction loss is not finite", -1, -1);
  return loss;
}

namespace {

double rk4_loss(nn::Network& encoder, const QuadraticModel& model, const Matrix& x_curr,
                const Matrix& x_other, double h) {
  if (x_curr.rows() != x_other.rows()) throw DimensionError("batches differ in size");
  Matrix stacked(2 * x_curr.rows(), x_curr.cols());
  stacked << x_curr, x_other;
  const Matrix z = nn::forward(encoder, stacked);
  const Eigen::Index batch = x_curr.rows();
  Matrix predicted(batch, z.cols());
  try {
    for (Eigen::Index i = 0; i < batch; ++i) {
      const Vector zc = z.row(i).transpose();
      predicted.row(i) =
          (h > 0 ? qde::rk4_step(model, zc, h) : rk4_step_back(model, zc, -h)).transpose();
    }
  } catch (const DivergenceError& e) {
    throw TrainingError(std::string("RK4 loss diverged: ") + e.what(), -1, -1);
  }
  return (z.bottomRows(batch) - predicted).squaredNorm() / static_cast<double>(predicted.size());
}

}  // namespace

double loss_rk4_forward(nn::Network& encoder, const QuadraticModel& model, const Matrix& x_curr,
                        const Matrix& x_next, double h) {
  return rk4_loss(encoder, model, x_curr, x_next, h);
}

double loss_rk4_backward(nn::Network& encoder, const QuadraticModel& model, const Matrix& x_curr,
                         const Matrix& x_prev, double h) {
  return rk4_loss(encoder, model, x_curr, x_prev, -h);
}

std::string TrainingHistory::to_csv() const {
  std::string out = "epoch,l_rec,l_rk4,l_rk4b,l_total,lr\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.l_rec,
                  r.l_rk4, r.l_rk4b, r.l_total, r.lr);
    out += line;
  }
  return out;
}

TrainedModel train(const TrainingConfig& cfg, const SnapshotDataset& ds,
                   const TrainCallbacks& callbacks) {
  cfg.validate();
  ds.validate();
  if (!ds.normalization) throw DatasetError("training needs a normalized dataset");
  const std::vector<Triplet> triplets = make_triplets(ds);
  const Eigen::Index n = ds.n_state();
  const double h = ds.dt;
  const double lambda = cfg.lambda(h);

  Rng rng(cfg.seed);
  nn::NetworkSpec enc_spec;
  enc_spec.widths.push_back(static_cast<int>(n));
  enc_spec.widths.insert(enc_spec.widths.end(), cfg.encoder_hidden.begin(),
                         cfg.encoder_hidden.end());
  enc_spec.widths.push_back(cfg.latent_dim);
  enc_spec.latent_norm = true;
  enc_spec.momentum = cfg.norm_momentum;
  enc_spec.epsilon = cfg.norm_epsilon;
  nn::NetworkSpec dec_spec;
  dec_spec.widths.push_back(cfg.latent_dim);
  dec_spec.widths.insert(dec_spec.widths.end(), cfg.decoder_hidden.begin(),
                         cfg.decoder_hidden.end());
  dec_spec.widths.push_back(static_cast<int>(n));

  TrainedModel result;
  result.encoder = nn::init_network(enc_spec, rng);
  result.decoder = nn::init_network(dec_spec, rng);
  TrainableModel model(cfg.latent_dim);

  nn::ParameterSet params = result.encoder.parameters("encoder");
  params.append(result.decoder.parameters("decoder"));
  params.append(model.parameters());
  AdamState adam = AdamState::zeros_like(params);

  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Near-equal batches of at most batch_size: a small trailing batch would
  // feed the latent norm layer noisy statistics.
  const std::size_t n_batches =
      (order.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size);
  long global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    rng.shuffle(order);
    double sum_rec = 0.0, sum_f = 0.0, sum_b = 0.0, sum_total = 0.0;
    double weight = 0.0;
    std::size_t start = 0;
    for (std::size_t j = 0; j < n_batches; ++j, ++global_step) {
      const std::size_t count = order.size() / n_batches + (j < order.size() % n_batches ? 1 : 0);
      const auto b = static_cast<Eigen::Index>(count);
      Matrix stacked(3 * b, n);
      for (std::size_t k = 0; k < count; ++k) {
        const Triplet& tr = triplets[order[start + k]];
        const auto row = static_cast<Eigen::Index>(k);
        stacked.row(row) = ds.snapshots.row(tr.prev);
        stacked.row(b + row) = ds.snapshots.row(tr.curr);
        stacked.row(2 * b + row) = ds.snapshots.row(tr.next);
      }
      Tape tape;
      const LossTerms terms =
          record_losses(tape, result.encoder, result.decoder, model, stacked, h, lambda);
      const double total = terms.total.scalar();
      if (!std::isfinite(total)) {
        throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(global_step),
                            epoch, global_step);
      }
      tape.backward(terms.total);
      try {
        adam_step(params, tape.gradients(params), adam, lr, cfg.adam);
      } catch (const OptimizerError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(global_step),
                            epoch, global_step);
      }
      const double w = static_cast<double>(count);
      sum_rec += w * terms.rec.scalar();
      sum_f += w * terms.rk4.scalar();
      sum_b += w * terms.rk4_back.scalar();
      sum_total += w * total;
      weight += w;
      start += count;
    }
    EpochRecord record{epoch, sum_rec / weight, sum_f / weight, sum_b / weight,
                       sum_total / weight, lr};
    result.history.records.push_back(record);
    if (callbacks.on_epoch) callbacks.on_epoch(record);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        callbacks.on_checkpoint) {
      TrainedModel snapshot = result;
      nn::calibrate_norm(snapshot.encoder, ds.snapshots);
      snapshot.encoder.set_mode(nn::NormMode::eval);
      snapshot.model = model.freeze();
      callbacks.on_checkpoint(epoch, snapshot);
    }
  }

  nn::calibrate_norm(result.encoder, ds.snapshots);
  result.encoder.set_mode(nn::NormMode::eval);
  result.model = model.freeze();
  return result;
}

}  // namespace qde
