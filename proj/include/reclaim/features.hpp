#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reclaim/corpus.hpp"

namespace reclaim {

// Dense feature vectors aligned row-for-row with a corpus.
struct EmbeddingMatrix {
    size_t count = 0;
    size_t dim = 0;
    std::vector<float> data;  // row-major, count * dim
    std::string source_tag;

    std::span<const float> row(size_t i) const {
        return std::span<const float>(data.data() + i * dim, dim);
    }
};

// EMBV1 file layout:
//   ASCII magic line "EMBV1\n"
//   one JSON header line {"count":C,"dim":D,"dtype":"f32le","source_tag":"..."}\n
//   C*D little-endian 32-bit floats, row-major; row i aligns with corpus record i.
EmbeddingMatrix load_embeddings(const std::string& path, size_t expected_rows);
void save_embeddings(const EmbeddingMatrix& matrix, const std::string& path);

// Offline fallback encoder: signed hashed character n-grams (n in {3,4,5})
// over the UTF-8 bytes of each text, L2-normalized per row. Hash is 64-bit
// FNV-1a over (seed bytes || n-gram bytes); bit 63 gives the sign, the
// remaining bits mod dim give the index. Rows with no n-gram stay zero.
EmbeddingMatrix hash_encode(const Corpus& corpus, size_t dim, uint64_t seed);

}  // namespace reclaim
