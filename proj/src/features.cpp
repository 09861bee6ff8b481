#include "reclaim/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/rng.hpp"

namespace reclaim {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "EMBV1 I/O assumes a little-endian host");

constexpr const char* kMagic = "EMBV1";

}  // namespace

EmbeddingMatrix load_embeddings(const std::string& path, size_t expected_rows) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding file: " + path);

    std::string magic;
    if (!std::getline(in, magic) || magic != kMagic) {
        throw DataError(path + ": bad magic, expected \"EMBV1\"");
    }
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError(path + ": missing header line");

    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": malformed header: " + e.what());
    }
    if (!header.contains("count") || !header.contains("dim") || !header.contains("dtype")) {
        throw DataError(path + ": header must carry count, dim and dtype");
    }
    if (header.at("dtype").get<std::string>() != "f32le") {
        throw DataError(path + ": unsupported dtype \"" + header.at("dtype").get<std::string>() +
                        "\" (expected f32le)");
    }

    EmbeddingMatrix m;
    m.count = header.at("count").get<size_t>();
    m.dim = header.at("dim").get<size_t>();
    if (header.contains("source_tag")) m.source_tag = header.at("source_tag").get<std::string>();
    if (m.dim == 0) throw DataError(path + ": dim must be positive");
    if (m.count != expected_rows) {
        throw DataError(path + ": row count " + std::to_string(m.count) +
                        " does not align with expected " + std::to_string(expected_rows));
    }

    m.data.resize(m.count * m.dim);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != m.data.size() * sizeof(float)) {
        throw DataError(path + ": truncated payload");
    }
    for (size_t i = 0; i < m.data.size(); ++i) {
        if (!std::isfinite(m.data[i])) {
            throw DataError(path + ": non-finite value at row " + std::to_string(i / m.dim) +
                            " col " + std::to_string(i % m.dim));
        }
    }
    return m;
}

void save_embeddings(const EmbeddingMatrix& matrix, const std::string& path) {
    if (matrix.data.size() != matrix.count * matrix.dim) {
        throw DataError("save_embeddings: data size does not match count*dim");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write embedding file: " + path);
    json header;
    header["count"] = matrix.count;
    header["dim"] = matrix.dim;
    header["dtype"] = "f32le";
    header["source_tag"] = matrix.source_tag;
    out << kMagic << '\n' << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(matrix.data.data()),
              static_cast<std::streamsize>(matrix.data.size() * sizeof(float)));
    if (!out) throw DataError("write failed: " + path);
}

EmbeddingMatrix hash_encode(const Corpus& corpus, size_t dim, uint64_t seed) {
    if (dim < 2) throw ConfigError("hash_encode: dim must be >= 2");

    EmbeddingMatrix m;
    m.count = corpus.size();
    m.dim = dim;
    m.source_tag = "hashed-ngram";
    m.data.assign(m.count * dim, 0.0f);

    unsigned char seed_bytes[8];
    for (int b = 0; b < 8; ++b) seed_bytes[b] = static_cast<unsigned char>(seed >> (8 * b));
    const uint64_t seed_state = fnv1a64(seed_bytes, sizeof(seed_bytes));

    std::vector<double> acc(dim);
    for (size_t row = 0; row < m.count; ++row) {
        const std::string& text = corpus[row].text;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (size_t n = 3; n <= 5; ++n) {
            if (text.size() < n) break;
            for (size_t i = 0; i + n <= text.size(); ++i) {
                const uint64_t h = fnv1a64(text.data() + i, n, seed_state);
                const size_t index = static_cast<size_t>((h & 0x7fffffffffffffffULL) % dim);
                acc[index] += (h >> 63) ? -1.0 : 1.0;
            }
        }
        double norm_sq = 0.0;
        for (double v : acc) norm_sq += v * v;
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (size_t j = 0; j < dim; ++j) {
                m.data[row * dim + j] = static_cast<float>(acc[j] * inv);
            }
        }
    }
    return m;
}

}  // namespace reclaim
