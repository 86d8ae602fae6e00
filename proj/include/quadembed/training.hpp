#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "quadembed/datagen.hpp"
#include "quadembed/network.hpp"
#include "quadembed/quaddyn.hpp"

namespace qde {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class LambdaMode { one_over_dt, fixed };

struct TrainingConfig {
  int latent_dim = 2;
  std::vector<int> encoder_hidden = {64, 32};
  std::vector<int> decoder_hidden = {32, 64};
  LambdaMode lambda_mode = LambdaMode::one_over_dt;
  double lambda_value = 0.0;  // used with LambdaMode::fixed
  int epochs = 3000;
  int batch_size = 32;
  double lr0 = 1e-3;
  /// Multiplier applied every lr_decay_every epochs (0.8 is the milder
  /// alternative).
  double lr_decay_factor = 0.2;
  int lr_decay_every = 400;
  AdamParams adam;
  std::uint64_t seed = 42;
  /// 0 disables periodic checkpoints.
  int checkpoint_every = 0;
  double norm_momentum = 0.1;
  double norm_epsilon = 1e-5;

  /// Throws ConfigError.
  void validate() const;
  double lambda(double dt) const;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long t = 0;

  static AdamState zeros_like(const nn::ParameterSet& params);
};

/// Bias-corrected Adam update of every parameter in place.
/// Throws OptimizerError on non-finite gradients or shape mismatch.
void adam_step(const nn::ParameterSet& params, const nn::Gradients& grads, AdamState& state,
               double lr, const AdamParams& adam = {});

/// lr0 * factor^floor(epoch / decay_every).
double lr_schedule(int epoch, const TrainingConfig& cfg);

/// (A, H, b) as trainable storage; b is a column.
struct TrainableModel {
  Matrix A;
  Matrix H;
  Matrix b;

  explicit TrainableModel(int latent_dim);
  explicit TrainableModel(const QuadraticModel& model);

  nn::ParameterSet parameters();
  QuadraticModel freeze() const;
};

// Differentiable building blocks (rows of z are independent latent states).

nn::Var quadratic_rhs(const nn::Var& z, const nn::Var& A, const nn::Var& H, const nn::Var& b);
/// Classical RK4 with signed step h (h < 0 integrates backward).
nn::Var rk4_step(const nn::Var& z, const nn::Var& A, const nn::Var& H, const nn::Var& b,
                 double h);
nn::Var mse(const nn::Var& a, const nn::Var& b);

struct LossTerms {
  nn::Var rec;
  nn::Var rk4;
  nn::Var rk4_back;
  nn::Var total;
};

/// L_Total = L_Rec + lambda (L_RK4 + L^b_RK4).
nn::Var loss_total(const nn::Var& rec, const nn::Var& rk4, const nn::Var& rk4_back,
                   double lambda);
double loss_total(double rec, double rk4, double rk4_back, double lambda);

/// Full loss graph for one minibatch. `stacked` holds the B previous, B
/// current and B next snapshots (3B rows, in that order); each is encoded
/// once and the encoding feeds both the reconstruction and the RK4 terms.
LossTerms record_losses(nn::Tape& tape, nn::Network& encoder, nn::Network& decoder,
                        TrainableModel& model, const Matrix& stacked, double h, double lambda);

/// Mean squared error of decoder(encoder(batch)) against batch.
double loss_reconstruction(nn::Network& encoder, nn::Network& decoder, const Matrix& batch);
/// MSE between encoded x_next and the RK4 step of encoded x_curr.
double loss_rk4_forward(nn::Network& encoder, const QuadraticModel& model, const Matrix& x_curr,
                        const Matrix& x_next, double h);
/// MSE between encoded x_prev and the backward RK4 step of encoded x_curr.
double loss_rk4_backward(nn::Network& encoder, const QuadraticModel& model, const Matrix& x_curr,
                         const Matrix& x_prev, double h);

struct EpochRecord {
  int epoch = 0;
  double l_rec = 0.0;
  double l_rk4 = 0.0;
  double l_rk4b = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;

  /// Header epoch,l_rec,l_rk4,l_rk4b,l_total,lr; values printed round-trip exact.
  std::string to_csv() const;
};

struct TrainedModel {
  nn::Network encoder;
  nn::Network decoder;
  QuadraticModel model = QuadraticModel::zeros(1);
  TrainingHistory history;
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called every checkpoint_every epochs with the current state.
  std::function<void(int epoch, const TrainedModel&)> on_checkpoint;
};

/// Trains encoder, decoder and quadratic model jointly with Adam on shuffled
/// triplet minibatches (ceil(N / batch_size) batches of near-equal size). `ds` must be normalized. On return the encoder's norm
/// layer holds population statistics of the training data and is in eval mode.
/// Throws TrainingError when a loss or gradient turns non-finite.
TrainedModel train(const TrainingConfig& cfg, const SnapshotDataset& ds,
                   const TrainCallbacks& callbacks = {});

}  // namespace qde
