#include "cangraph/gcn.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "cangraph/eval.hpp"
#include "cangraph/linalg.hpp"

namespace cangraph {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

struct ForwardCache {
    std::vector<Matrix> propagated;      // A_hat * X_{l-1}, per layer
    std::vector<Matrix> pre_activation;  // Z_l = propagated * W_l
    std::vector<Matrix> masks;           // scaled dropout masks, layers 0..L-2
    Matrix final_hidden;                 // input to the dense head
    Matrix logits;
};

void check_shapes(const ModelCheckpoint& model, const Matrix& features,
                  const SparseMatrix& adjacency) {
    const GcnArchitecture& arch = model.architecture;
    if (features.cols() != arch.input_dim)
        throw DataError("forward: feature width " + std::to_string(features.cols()) +
                        " does not match input dim " + std::to_string(arch.input_dim));
    if (adjacency.rows() != features.rows() || adjacency.cols() != features.rows())
        throw DataError("forward: adjacency shape does not match node count");
    if (static_cast<int>(model.gcn_weights.size()) != arch.num_layers)
        throw DataError("forward: checkpoint layer count does not match architecture");
}

Matrix scaled_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                           std::mt19937_64& rng) {
    Matrix mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            mask(i, j) = uniform01(rng) < rate ? 0.0 : keep_scale;
    return mask;
}

Matrix forward_pass(const ModelCheckpoint& model, const Matrix& features,
                    const SparseMatrix& adjacency, bool training, std::mt19937_64& rng,
                    ForwardCache* cache) {
    check_shapes(model, features, adjacency);
    const GcnArchitecture& arch = model.architecture;
    const bool dropout_active = training && arch.dropout_rate > 0.0;

    Matrix h = features;
    for (int l = 0; l < arch.num_layers; ++l) {
        const Matrix& weight = model.gcn_weights[static_cast<std::size_t>(l)];
        if (weight.rows() != h.cols())
            throw DataError("forward: GCN layer " + std::to_string(l + 1) +
                            " weight expects width " + std::to_string(weight.rows()) +
                            ", got " + std::to_string(h.cols()));
        Matrix propagated = adjacency * h;
        Matrix z = propagated * weight;
        if (!z.allFinite())
            throw InternalError("non-finite activations in GCN layer " + std::to_string(l + 1));
        h = relu(z);
        if (cache) {
            cache->propagated.push_back(std::move(propagated));
            cache->pre_activation.push_back(std::move(z));
        }
        if (l + 1 < arch.num_layers && dropout_active) {
            Matrix mask = scaled_dropout_mask(h.rows(), h.cols(), arch.dropout_rate, rng);
            h = h.cwiseProduct(mask);
            if (cache) cache->masks.push_back(std::move(mask));
        }
    }

    if (model.dense_weight.rows() != h.cols() ||
        model.dense_weight.cols() != arch.num_classes ||
        model.dense_bias.size() != arch.num_classes)
        throw DataError("forward: dense head shape does not match the architecture");
    Matrix logits = h * model.dense_weight;
    logits.rowwise() += model.dense_bias.transpose();
    if (!logits.allFinite()) throw InternalError("non-finite activations in dense layer");
    if (cache) {
        cache->final_hidden = std::move(h);
        cache->logits = logits;
    }
    return logits;
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

double weight_norm_penalty(const ModelCheckpoint& model, double weight_decay) {
    double sum = 0.0;
    for (const auto& w : model.gcn_weights) sum += w.squaredNorm();
    sum += model.dense_weight.squaredNorm();
    return 0.5 * weight_decay * sum;
}

double data_loss(const Matrix& logits, const IntVector& labels, int num_classes) {
    if (labels.size() != logits.rows())
        throw DataError("loss: labels do not match node count");
    const Vector lse = log_sum_exp_rows(logits);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int y = labels(i);
        if (y < 0 || y >= num_classes)
            throw DataError("loss: label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(num_classes) + ")");
        sum += lse(i) - logits(i, y);
    }
    return sum / static_cast<double>(logits.rows());
}

ModelCheckpoint init_checkpoint_from(const GcnArchitecture& arch, std::mt19937_64& rng) {
    arch.validate();
    ModelCheckpoint model;
    model.architecture = arch;

    auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix w(rows, cols);
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = uniform_symmetric(rng, limit);
        return w;
    };

    for (int l = 0; l < arch.num_layers; ++l) {
        const Eigen::Index fan_in = l == 0 ? arch.input_dim : arch.hidden_units;
        model.gcn_weights.push_back(glorot(fan_in, arch.hidden_units));
    }
    model.dense_weight = glorot(arch.hidden_units, arch.num_classes);
    model.dense_bias = Vector::Zero(arch.num_classes);

    for (const auto& w : model.gcn_weights) {
        model.adam.m_gcn.push_back(Matrix::Zero(w.rows(), w.cols()));
        model.adam.v_gcn.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
    model.adam.m_dense = Matrix::Zero(arch.hidden_units, arch.num_classes);
    model.adam.v_dense = Matrix::Zero(arch.hidden_units, arch.num_classes);
    model.adam.m_bias = Vector::Zero(arch.num_classes);
    model.adam.v_bias = Vector::Zero(arch.num_classes);
    return model;
}

}  // namespace

void GcnArchitecture::validate() const {
    if (input_dim < 1) throw ConfigError("architecture: input_dim must be positive");
    if (num_layers < 1) throw ConfigError("architecture: need at least one GCN layer");
    if (hidden_units < 1) throw ConfigError("architecture: hidden_units must be positive");
    if (num_classes < 2) throw ConfigError("architecture: need at least two classes");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("architecture: dropout_rate must lie in [0, 1)");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("training: batch_size must be positive");
    if (learning_rate <= 0.0) throw ConfigError("training: learning_rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("training: weight_decay must be nonnegative");
    if (max_epochs < 1) throw ConfigError("training: max_epochs must be positive");
    if (early_stop_patience < 1) throw ConfigError("training: patience must be positive");
}

ModelCheckpoint init_checkpoint(const GcnArchitecture& arch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelCheckpoint model = init_checkpoint_from(arch, rng);
    model.rng_seed = seed;
    return model;
}

Matrix gcn_layer_forward(const Matrix& h, const SparseMatrix& adjacency, const Matrix& weight) {
    if (adjacency.cols() != h.rows() || h.cols() != weight.rows())
        throw DataError("gcn_layer_forward: shape mismatch");
    return relu(Matrix(adjacency * h * weight));
}

ForwardResult forward(const ModelCheckpoint& model, const Matrix& features,
                      const SparseMatrix& adjacency, bool training, std::mt19937_64& rng) {
    ForwardResult result;
    result.logits = forward_pass(model, features, adjacency, training, rng, nullptr);
    result.predictions = argmax_rows(result.logits);
    return result;
}

std::pair<double, Gradients> loss_and_gradients(const ModelCheckpoint& model,
                                                const Matrix& features,
                                                const SparseMatrix& adjacency,
                                                const IntVector& labels, double weight_decay,
                                                std::mt19937_64& rng) {
    const GcnArchitecture& arch = model.architecture;
    ForwardCache cache;
    forward_pass(model, features, adjacency, /*training=*/true, rng, &cache);

    const double loss =
        data_loss(cache.logits, labels, arch.num_classes) + weight_norm_penalty(model, weight_decay);

    const auto n = cache.logits.rows();
    Matrix dlogits = softmax_rows(cache.logits);
    for (Eigen::Index i = 0; i < n; ++i) dlogits(i, labels(i)) -= 1.0;
    dlogits /= static_cast<double>(n);

    Gradients grads;
    grads.dense_weight = cache.final_hidden.transpose() * dlogits + weight_decay * model.dense_weight;
    grads.dense_bias = dlogits.colwise().sum().transpose();
    grads.gcn_weights.resize(model.gcn_weights.size());

    Matrix dh = dlogits * model.dense_weight.transpose();
    const bool dropout_active = arch.dropout_rate > 0.0;
    for (int l = arch.num_layers - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        if (l + 1 < arch.num_layers && dropout_active) dh = dh.cwiseProduct(cache.masks[li]);
        const Matrix dz =
            dh.cwiseProduct((cache.pre_activation[li].array() > 0.0).cast<double>().matrix());
        grads.gcn_weights[li] =
            cache.propagated[li].transpose() * dz + weight_decay * model.gcn_weights[li];
        if (l > 0) dh = adjacency * (dz * model.gcn_weights[li].transpose());
    }
    return {loss, std::move(grads)};
}

void adam_step(ModelCheckpoint& model, const Gradients& grads, const TrainConfig& config) {
    config.validate();
    if (grads.gcn_weights.size() != model.gcn_weights.size())
        throw DataError("adam_step: gradient layer count mismatch");

    auto check_finite = [](const auto& g) {
        if (!g.allFinite()) throw DataError("adam_step: non-finite gradient");
    };
    for (const auto& g : grads.gcn_weights) check_finite(g);
    check_finite(grads.dense_weight);
    check_finite(grads.dense_bias);

    const std::uint64_t t = ++model.adam.step;
    const double corr1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
    const double corr2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        if (param.rows() != grad.rows() || param.cols() != grad.cols())
            throw DataError("adam_step: gradient shape mismatch");
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
        v = (kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * grad.array().square()).matrix();
        param.array() -=
            config.learning_rate * (m.array() / corr1) / ((v.array() / corr2).sqrt() + kAdamEpsilon);
    };
    for (std::size_t l = 0; l < model.gcn_weights.size(); ++l)
        update(model.gcn_weights[l], grads.gcn_weights[l], model.adam.m_gcn[l], model.adam.v_gcn[l]);
    update(model.dense_weight, grads.dense_weight, model.adam.m_dense, model.adam.v_dense);
    update(model.dense_bias, grads.dense_bias, model.adam.m_bias, model.adam.v_bias);
}

TrainResult train(std::span<const WindowGraph> train_items,
                  std::span<const WindowGraph> validation_items, const GcnArchitecture& arch,
                  const TrainConfig& config) {
    arch.validate();
    config.validate();
    if (train_items.empty()) throw DataError("train: empty training split");

    std::mt19937_64 rng(config.seed);
    ModelCheckpoint model = init_checkpoint_from(arch, rng);
    model.rng_seed = config.seed;

    std::vector<std::size_t> order(train_items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    double best_metric = -std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        seeded_shuffle(order, rng);

        double loss_sum = 0.0;
        Eigen::Index node_count = 0;
        const auto batch = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::vector<const WindowGraph*> members;
            for (std::size_t i = start; i < std::min(start + batch, order.size()); ++i)
                members.push_back(&train_items[order[i]]);
            GraphBatch gb = batch_block_diagonal(std::span<const WindowGraph* const>(members));
            auto [loss, grads] = loss_and_gradients(model, gb.features, gb.adjacency, gb.labels,
                                                    config.weight_decay, rng);
            adam_step(model, grads, config);
            loss_sum += loss * static_cast<double>(gb.labels.size());
            node_count += gb.labels.size();
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(node_count);

        double metric = -record.train_loss;  // fallback when no validation split
        if (!validation_items.empty()) {
            std::vector<int> preds, labels;
            for (std::size_t start = 0; start < validation_items.size(); start += batch) {
                std::vector<const WindowGraph*> members;
                for (std::size_t i = start; i < std::min(start + batch, validation_items.size());
                     ++i)
                    members.push_back(&validation_items[i]);
                GraphBatch gb = batch_block_diagonal(std::span<const WindowGraph* const>(members));
                std::vector<int> p = predict(model, gb.features, gb.adjacency);
                preds.insert(preds.end(), p.begin(), p.end());
                labels.insert(labels.end(), gb.labels.data(), gb.labels.data() + gb.labels.size());
            }
            const MetricsReport val = metrics(confusion(preds, labels, arch.num_classes));
            record.val_accuracy = val.accuracy;
            record.val_macro_f1 = val.macro_f1;
            metric = val.macro_f1;
        }
        record.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(record);

        if (metric > best_metric) {
            best_metric = metric;
            result.checkpoint = model;
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= config.early_stop_patience) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

std::vector<int> predict(const ModelCheckpoint& model, const Matrix& features,
                         const SparseMatrix& adjacency) {
    std::mt19937_64 unused(0);
    return forward(model, features, adjacency, /*training=*/false, unused).predictions;
}

GradientCheckReport gradient_check(int models, std::uint64_t seed, double epsilon) {
    GradientCheckReport report;
    std::mt19937_64 meta(seed);

    constexpr int kLayerChoices[] = {1, 2, 4};
    constexpr int kClassChoices[] = {3, 5};
    constexpr double kWeightDecay = 5e-4;

    for (int m = 0; m < models; ++m) {
        GcnArchitecture arch;
        arch.input_dim = kFeatureDim;
        arch.hidden_units = 8;
        arch.num_layers = kLayerChoices[meta() % 3];
        arch.num_classes = kClassChoices[meta() % 2];
        arch.dropout_rate = (m % 2 == 0) ? 0.0 : 0.5;
        const auto n = static_cast<Eigen::Index>(2 + meta() % 9);  // 2..10 nodes

        // Random window over a 3-ID alphabet gives a realistic adjacency.
        Window window;
        for (Eigen::Index i = 0; i < n; ++i) {
            MessageRecord rec;
            rec.can_id = static_cast<std::uint16_t>(meta() % 3);
            window.records.push_back(rec);
        }
        const NormalizedAdjacency adjacency = normalize_adjacency(build_crg(window));

        Matrix features(n, arch.input_dim);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < arch.input_dim; ++j) features(i, j) = uniform01(meta);
        IntVector labels(n);
        for (Eigen::Index i = 0; i < n; ++i)
            labels(i) = static_cast<int>(meta() % static_cast<std::uint64_t>(arch.num_classes));

        ModelCheckpoint model = init_checkpoint(arch, meta());
        const std::uint64_t mask_seed = meta();

        std::mt19937_64 rng(mask_seed);
        const auto [base_loss, grads] = loss_and_gradients(model, features, adjacency.matrix,
                                                           labels, kWeightDecay, rng);
        (void)base_loss;

        const auto loss_at = [&](const ModelCheckpoint& candidate) {
            std::mt19937_64 fd_rng(mask_seed);  // identical dropout masks every evaluation
            return loss_and_gradients(candidate, features, adjacency.matrix, labels, kWeightDecay,
                                      fd_rng)
                .first;
        };

        double worst = 0.0;
        const auto probe = [&](auto param_of, const auto& analytic) {
            for (Eigen::Index i = 0; i < analytic.rows(); ++i)
                for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
                    ModelCheckpoint candidate = model;
                    param_of(candidate)(i, j) += epsilon;
                    const double up = loss_at(candidate);
                    param_of(candidate)(i, j) -= 2.0 * epsilon;
                    const double down = loss_at(candidate);
                    const double fd = (up - down) / (2.0 * epsilon);
                    const double a = analytic(i, j);
                    const double rel = std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-6);
                    worst = std::max(worst, rel);
                }
        };
        for (std::size_t l = 0; l < model.gcn_weights.size(); ++l)
            probe([l](ModelCheckpoint& c) -> Matrix& { return c.gcn_weights[l]; },
                  grads.gcn_weights[l]);
        probe([](ModelCheckpoint& c) -> Matrix& { return c.dense_weight; }, grads.dense_weight);
        probe([](ModelCheckpoint& c) -> Vector& { return c.dense_bias; }, grads.dense_bias);

        report.per_model.push_back(worst);
        report.max_relative_error = std::max(report.max_relative_error, worst);
        ++report.models_checked;
    }
    return report;
}

}  // namespace cangraph
