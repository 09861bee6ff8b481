#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace reclaim {

// Language order is load-bearing: it fixes contingency-table rows, the order
// of translated rows during augmentation, and stratum iteration in CV splits.
enum class Lang : uint8_t { en = 0, es = 1, it = 2 };
constexpr size_t kNumLangs = 3;
constexpr std::array<Lang, kNumLangs> kAllLangs = {Lang::en, Lang::es, Lang::it};

const char* to_string(Lang lang);
Lang lang_from_string(const std::string& s);  // throws DataError on unknown lang

enum class Origin : uint8_t { native = 0, translated = 1 };

// One labeled tweet record. label: 1 = reclamatory, 0 = non-reclamatory.
struct Example {
    std::string id;
    std::string text;
    Lang lang = Lang::en;
    int label = 0;
    Origin origin = Origin::native;
};

// Ordered collection of examples. Row i is addressable; embedding matrices
// align row-for-row with this order.
class Corpus {
public:
    Corpus() = default;
    // Validates: non-empty unique ids, non-empty text, label in {0,1},
    // '#' forbidden in ids of native-origin records (reserved for derived ids).
    explicit Corpus(std::vector<Example> examples);

    const std::vector<Example>& examples() const { return examples_; }
    const Example& operator[](size_t i) const { return examples_[i]; }
    size_t size() const { return examples_.size(); }
    bool empty() const { return examples_.empty(); }

    std::vector<int> labels() const;
    std::vector<Lang> langs() const;

private:
    std::vector<Example> examples_;
};

// Corpus JSONL. One object per line:
//   {"id": "...", "text": "...", "lang": "en|es|it", "label": 0|1}
// Optional "origin": "native"|"translated". UTF-8, LF line endings.
// Lines starting with '#' are comments (used for provenance trailers).
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& provenance_comment = "");

// 3x2 observed counts, rows = languages (en, es, it), columns = labels (0, 1).
struct ContingencyTable {
    std::array<std::array<long long, 2>, kNumLangs> counts = {};

    long long row_total(size_t row) const { return counts[row][0] + counts[row][1]; }
    long long col_total(size_t col) const;
    long long grand_total() const;
};

struct ChiSquareResult {
    double statistic = 0.0;
    size_t dof = 0;
    double p_value = 1.0;
};

// Tallies language x label counts. Throws DataError on an empty corpus.
ContingencyTable label_language_table(const Corpus& corpus);

// Pearson chi-square test of independence on the 3x2 table.
// statistic = sum (O-E)^2/E with E = row_total*col_total/grand_total,
// dof = (rows-1)*(cols-1) = 2, p = Q(dof/2, statistic/2).
// Throws DataError when any row or column total is zero.
ChiSquareResult chi_square_independence(const ContingencyTable& table);

}  // namespace reclaim
