#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cangraph/graphs.hpp"

namespace cangraph {

struct GcnArchitecture {
    int input_dim = kFeatureDim;
    int hidden_units = 32;
    int num_layers = 4;      // number of GCN layers
    int num_classes = 5;
    double dropout_rate = 0.5;

    void validate() const;
    bool operator==(const GcnArchitecture&) const = default;
};

/// Adam first/second moments for every parameter, in checkpoint order.
struct AdamState {
    std::vector<Matrix> m_gcn, v_gcn;
    Matrix m_dense, v_dense;
    Vector m_bias, v_bias;
    std::uint64_t step = 0;
};

struct ModelCheckpoint {
    GcnArchitecture architecture;
    std::vector<Matrix> gcn_weights;  // layer 0: input_dim x h, rest h x h
    Matrix dense_weight;              // h x F
    Vector dense_bias;                // F
    AdamState adam;
    std::uint64_t rng_seed = 0;
};

struct Gradients {
    std::vector<Matrix> gcn_weights;
    Matrix dense_weight;
    Vector dense_bias;
};

struct TrainConfig {
    int batch_size = 40;
    double learning_rate = 5e-4;
    double weight_decay = 5e-4;
    int max_epochs = 100;
    int early_stop_patience = 10;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    double wall_time_s = 0.0;  // informational; excluded from the persisted log
};

struct TrainResult {
    ModelCheckpoint checkpoint;  // best-validation weights
    std::vector<EpochRecord> log;
    int best_epoch = 0;
    bool early_stopped = false;
};

struct ForwardResult {
    Matrix logits;                 // n x F
    std::vector<int> predictions;  // argmax per node, lowest index on ties
};

/// Seeded Glorot-uniform weights, zero dense bias, zero optimizer state.
ModelCheckpoint init_checkpoint(const GcnArchitecture& arch, std::uint64_t seed);

/// One propagation step: ReLU(A_hat * H * W). No bias.
Matrix gcn_layer_forward(const Matrix& h, const SparseMatrix& adjacency, const Matrix& weight);

/// Full forward pass. In training mode, inverted dropout is applied after
/// each of the first L-1 layers using masks drawn from `rng`.
ForwardResult forward(const ModelCheckpoint& model, const Matrix& features,
                      const SparseMatrix& adjacency, bool training, std::mt19937_64& rng);

/// Mean softmax cross-entropy over nodes plus weight_decay/2 * sum ||W||^2
/// over all weight matrices (bias excluded), with gradients for every
/// parameter. Dropout masks are drawn from `rng` when dropout_rate > 0.
std::pair<double, Gradients> loss_and_gradients(const ModelCheckpoint& model,
                                                const Matrix& features,
                                                const SparseMatrix& adjacency,
                                                const IntVector& labels, double weight_decay,
                                                std::mt19937_64& rng);

/// Standard Adam update (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected).
void adam_step(ModelCheckpoint& model, const Gradients& grads, const TrainConfig& config);

TrainResult train(std::span<const WindowGraph> train_items,
                  std::span<const WindowGraph> validation_items, const GcnArchitecture& arch,
                  const TrainConfig& config);

/// Per-message class predictions for one window (or batch) in inference mode.
std::vector<int> predict(const ModelCheckpoint& model, const Matrix& features,
                         const SparseMatrix& adjacency);

void save_checkpoint(const ModelCheckpoint& model, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

/// Throws DataError naming the mismatched field when the checkpoint does not
/// match the expected architecture.
void check_architecture(const ModelCheckpoint& model, const GcnArchitecture& expected);

struct GradientCheckReport {
    double max_relative_error = 0.0;
    int models_checked = 0;
    std::vector<double> per_model;
};

/// Central finite differences over every parameter of `models` random small
/// configurations, against the analytic gradients. Dropout masks are frozen
/// by reseeding, so the comparison is valid with dropout active.
GradientCheckReport gradient_check(int models, std::uint64_t seed, double epsilon = 1e-5);

}  // namespace cangraph
