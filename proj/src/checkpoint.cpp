#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cangraph/gcn.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace cangraph {

namespace {

constexpr std::uint32_t kMagic = 0x50434743;  // "CGCP"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(value));
    if (!in) throw DataError("checkpoint truncated while reading header");
    return value;
}

void write_block(std::ostream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

void read_block(std::istream& in, double* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
    if (!in) throw DataError("checkpoint truncated while reading parameters");
}

std::size_t parameter_count(const GcnArchitecture& arch) {
    std::size_t count = 0;
    for (int l = 0; l < arch.num_layers; ++l) {
        const std::size_t fan_in =
            l == 0 ? static_cast<std::size_t>(arch.input_dim)
                   : static_cast<std::size_t>(arch.hidden_units);
        count += fan_in * static_cast<std::size_t>(arch.hidden_units);
    }
    count += static_cast<std::size_t>(arch.hidden_units) * static_cast<std::size_t>(arch.num_classes);
    count += static_cast<std::size_t>(arch.num_classes);
    return count;
}

constexpr std::size_t kHeaderBytes = 4 + 4 + 4 * 4 + 8 + 8 + 8;

}  // namespace

void save_checkpoint(const ModelCheckpoint& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);

    const GcnArchitecture& arch = model.architecture;
    write_pod(out, kMagic);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::int32_t>(arch.input_dim));
    write_pod(out, static_cast<std::int32_t>(arch.num_layers));
    write_pod(out, static_cast<std::int32_t>(arch.hidden_units));
    write_pod(out, static_cast<std::int32_t>(arch.num_classes));
    write_pod(out, arch.dropout_rate);
    write_pod(out, model.rng_seed);
    write_pod(out, model.adam.step);

    const auto matrices = [&](const auto& fn) {
        for (const auto& w : model.gcn_weights) fn(w);
        fn(model.dense_weight);
        fn(model.dense_bias);
        for (const auto& m : model.adam.m_gcn) fn(m);
        fn(model.adam.m_dense);
        fn(model.adam.m_bias);
        for (const auto& v : model.adam.v_gcn) fn(v);
        fn(model.adam.v_dense);
        fn(model.adam.v_bias);
    };
    matrices([&](const auto& m) { write_block(out, m.data(), static_cast<std::size_t>(m.size())); });
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);

    if (read_pod<std::uint32_t>(in) != kMagic)
        throw DataError("not a checkpoint file (bad magic): " + path);
    if (const auto version = read_pod<std::uint32_t>(in); version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) +
                        " (expected " + std::to_string(kVersion) + ")");

    ModelCheckpoint model;
    GcnArchitecture& arch = model.architecture;
    arch.input_dim = read_pod<std::int32_t>(in);
    arch.num_layers = read_pod<std::int32_t>(in);
    arch.hidden_units = read_pod<std::int32_t>(in);
    arch.num_classes = read_pod<std::int32_t>(in);
    arch.dropout_rate = read_pod<double>(in);
    model.rng_seed = read_pod<std::uint64_t>(in);
    model.adam.step = read_pod<std::uint64_t>(in);
    try {
        arch.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint header invalid: ") + e.what());
    }

    const std::size_t expected_bytes = kHeaderBytes + 3 * parameter_count(arch) * 8;
    const std::size_t actual_bytes = std::filesystem::file_size(path);
    if (expected_bytes != actual_bytes)
        throw DataError("checkpoint size mismatch for declared shape (L=" +
                        std::to_string(arch.num_layers) + ", h=" +
                        std::to_string(arch.hidden_units) + ", F=" +
                        std::to_string(arch.num_classes) + "): expected " +
                        std::to_string(expected_bytes) + " bytes, found " +
                        std::to_string(actual_bytes));

    const auto read_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        read_block(in, m.data(), static_cast<std::size_t>(m.size()));
        return m;
    };
    const auto read_vector = [&](Eigen::Index size) {
        Vector v(size);
        read_block(in, v.data(), static_cast<std::size_t>(v.size()));
        return v;
    };
    const auto layer_rows = [&](int l) {
        return static_cast<Eigen::Index>(l == 0 ? arch.input_dim : arch.hidden_units);
    };

    for (int l = 0; l < arch.num_layers; ++l)
        model.gcn_weights.push_back(read_matrix(layer_rows(l), arch.hidden_units));
    model.dense_weight = read_matrix(arch.hidden_units, arch.num_classes);
    model.dense_bias = read_vector(arch.num_classes);
    for (int l = 0; l < arch.num_layers; ++l)
        model.adam.m_gcn.push_back(read_matrix(layer_rows(l), arch.hidden_units));
    model.adam.m_dense = read_matrix(arch.hidden_units, arch.num_classes);
    model.adam.m_bias = read_vector(arch.num_classes);
    for (int l = 0; l < arch.num_layers; ++l)
        model.adam.v_gcn.push_back(read_matrix(layer_rows(l), arch.hidden_units));
    model.adam.v_dense = read_matrix(arch.hidden_units, arch.num_classes);
    model.adam.v_bias = read_vector(arch.num_classes);
    return model;
}

void check_architecture(const ModelCheckpoint& model, const GcnArchitecture& expected) {
    const GcnArchitecture& found = model.architecture;
    const auto mismatch = [](const char* field, int want, int got) {
        throw DataError(std::string("checkpoint architecture mismatch: ") + field + " expected " +
                        std::to_string(want) + ", found " + std::to_string(got));
    };
    if (found.input_dim != expected.input_dim)
        mismatch("input_dim", expected.input_dim, found.input_dim);
    if (found.num_layers != expected.num_layers)
        mismatch("num_layers", expected.num_layers, found.num_layers);
    if (found.hidden_units != expected.hidden_units)
        mismatch("hidden_units", expected.hidden_units, found.hidden_units);
    if (found.num_classes != expected.num_classes)
        mismatch("num_classes", expected.num_classes, found.num_classes);
}

}  // namespace cangraph
