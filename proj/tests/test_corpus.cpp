#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "reclaim/corpus.hpp"
#include "reclaim/errors.hpp"
#include "reclaim/numeric.hpp"
#include "reclaim/rng.hpp"

using namespace reclaim;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    const fs::path path = fs::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

Corpus imbalanced_corpus(size_t per_lang = 100) {
    // positives: en 9%, es 18%, it 24%
    const size_t positives[3] = {per_lang * 9 / 100, per_lang * 18 / 100, per_lang * 24 / 100};
    std::vector<Example> ex;
    for (size_t l = 0; l < 3; ++l) {
        for (size_t i = 0; i < per_lang; ++i) {
            Example e;
            e.id = std::string(to_string(static_cast<Lang>(l))) + "-" + std::to_string(i);
            e.text = "text " + e.id;
            e.lang = static_cast<Lang>(l);
            e.label = i < positives[l] ? 1 : 0;
            ex.push_back(std::move(e));
        }
    }
    return Corpus(std::move(ex));
}

// Independent oracle: direct evaluation of sum (O-E)^2 / E.
double chi_square_oracle(const ContingencyTable& t) {
    const double grand = static_cast<double>(t.grand_total());
    double stat = 0.0;
    for (size_t r = 0; r < kNumLangs; ++r) {
        for (size_t c = 0; c < 2; ++c) {
            const double expected =
                static_cast<double>(t.row_total(r)) * static_cast<double>(t.col_total(c)) / grand;
            const double d = static_cast<double>(t.counts[r][c]) - expected;
            stat += d * d / expected;
        }
    }
    return stat;
}

}  // namespace

TEST_CASE("load_corpus preserves file order and defaults origin") {
    const auto path = write_temp(
        "corpus_ok.jsonl",
        "{\"id\":\"t1\",\"text\":\"hello\",\"lang\":\"en\",\"label\":1}\n"
        "{\"id\":\"t2\",\"text\":\"hola\",\"lang\":\"es\",\"label\":0}\n");
    const Corpus c = load_corpus(path.string());
    REQUIRE(c.size() == 2);
    CHECK(c[0].id == "t1");
    CHECK(c[0].lang == Lang::en);
    CHECK(c[0].label == 1);
    CHECK(c[0].origin == Origin::native);
    CHECK(c[1].id == "t2");
}

TEST_CASE("load_corpus rejects duplicate ids citing the line") {
    const auto path = write_temp(
        "corpus_dup.jsonl",
        "{\"id\":\"t1\",\"text\":\"a\",\"lang\":\"en\",\"label\":0}\n"
        "{\"id\":\"t2\",\"text\":\"b\",\"lang\":\"en\",\"label\":0}\n"
        "{\"id\":\"t1\",\"text\":\"c\",\"lang\":\"it\",\"label\":1}\n");
    try {
        load_corpus(path.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("t1") != std::string::npos);
    }
}

TEST_CASE("load_corpus rejects missing fields citing the line") {
    const auto path = write_temp(
        "corpus_missing.jsonl",
        "{\"id\":\"t1\",\"text\":\"a\",\"lang\":\"en\",\"label\":0}\n"
        "{\"id\":\"x\"}\n");
    try {
        load_corpus(path.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("load_corpus rejects malformed JSON and unknown lang") {
    const auto bad_json = write_temp("corpus_bad.jsonl", "not json\n");
    CHECK_THROWS_AS(load_corpus(bad_json.string()), DataError);

    const auto bad_lang = write_temp(
        "corpus_lang.jsonl", "{\"id\":\"t1\",\"text\":\"a\",\"lang\":\"fr\",\"label\":0}\n");
    CHECK_THROWS_AS(load_corpus(bad_lang.string()), DataError);
}

TEST_CASE("native ids cannot contain the derived-id separator") {
    const auto path = write_temp(
        "corpus_hash.jsonl", "{\"id\":\"t1#en\",\"text\":\"a\",\"lang\":\"en\",\"label\":0}\n");
    CHECK_THROWS_AS(load_corpus(path.string()), DataError);
}

TEST_CASE("save/load corpus round trip") {
    Corpus c = imbalanced_corpus(10);
    const fs::path path = fs::temp_directory_path() / "corpus_rt.jsonl";
    save_corpus(c, path.string());
    const Corpus back = load_corpus(path.string());
    REQUIRE(back.size() == c.size());
    for (size_t i = 0; i < c.size(); ++i) {
        CHECK(back[i].id == c[i].id);
        CHECK(back[i].label == c[i].label);
        CHECK(back[i].lang == c[i].lang);
    }
}

TEST_CASE("label_language_table tallies the imbalanced corpus") {
    const ContingencyTable t = label_language_table(imbalanced_corpus());
    CHECK(t.counts[0][0] == 91);
    CHECK(t.counts[0][1] == 9);
    CHECK(t.counts[1][0] == 82);
    CHECK(t.counts[1][1] == 18);
    CHECK(t.counts[2][0] == 76);
    CHECK(t.counts[2][1] == 24);
    CHECK(t.grand_total() == 300);
    CHECK(t.col_total(1) == 51);
}

TEST_CASE("label_language_table single example and order independence") {
    Example e;
    e.id = "only";
    e.text = "x";
    e.lang = Lang::en;
    e.label = 1;
    const ContingencyTable single = label_language_table(Corpus({e}));
    CHECK(single.counts[0][1] == 1);
    CHECK(single.grand_total() == 1);

    const Corpus base = imbalanced_corpus(50);
    std::vector<Example> shuffled = base.examples();
    Rng rng(7);
    rng.shuffle(shuffled);
    const ContingencyTable a = label_language_table(base);
    const ContingencyTable b = label_language_table(Corpus(std::move(shuffled)));
    CHECK(a.counts == b.counts);

    CHECK_THROWS_AS(label_language_table(Corpus{}), DataError);
}

TEST_CASE("chi-square of a uniform table is exactly zero with p = 1") {
    ContingencyTable t;
    t.counts = {{{10, 10}, {10, 10}, {10, 10}}};
    const ChiSquareResult r = chi_square_independence(t);
    CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.dof == 2);
}

TEST_CASE("chi-square matches the direct-evaluation oracle on the n=100 table") {
    const ContingencyTable t = label_language_table(imbalanced_corpus());
    const ChiSquareResult r = chi_square_independence(t);

    const double oracle_stat = chi_square_oracle(t);
    CHECK(r.statistic == doctest::Approx(oracle_stat).epsilon(1e-12));
    // 114/83 + 114/17 = 8.0794...
    CHECK(r.statistic == doctest::Approx(8.079376).epsilon(1e-5));
    CHECK(r.dof == 2);
    // dof = 2 closed form: p = exp(-x/2)
    CHECK(r.p_value == doctest::Approx(std::exp(-r.statistic / 2.0)).epsilon(1e-10));
    CHECK(r.p_value == doctest::Approx(0.017603).epsilon(1e-4));
}

TEST_CASE("chi-square scales linearly with counts at fixed proportions") {
    ContingencyTable t;
    t.counts = {{{910, 90}, {820, 180}, {760, 240}}};
    const ChiSquareResult r = chi_square_independence(t);
    CHECK(r.statistic == doctest::Approx(chi_square_oracle(t)).epsilon(1e-12));
    CHECK(r.statistic == doctest::Approx(80.79376).epsilon(1e-5));  // 10x the n=100 statistic
}

TEST_CASE("chi-square rejects degenerate tables") {
    ContingencyTable zero_row;
    zero_row.counts = {{{0, 0}, {10, 5}, {8, 7}}};
    CHECK_THROWS_AS(chi_square_independence(zero_row), DataError);

    ContingencyTable zero_col;
    zero_col.counts = {{{10, 0}, {10, 0}, {8, 0}}};
    CHECK_THROWS_AS(chi_square_independence(zero_col), DataError);
}

TEST_CASE("chi-square is invariant under row permutation") {
    ContingencyTable t;
    t.counts = {{{91, 9}, {82, 18}, {76, 24}}};
    ContingencyTable p;
    p.counts = {{{76, 24}, {91, 9}, {82, 18}}};
    CHECK(chi_square_independence(t).statistic ==
          doctest::Approx(chi_square_independence(p).statistic).epsilon(1e-14));
}

TEST_CASE("product-distribution tables give statistic 0") {
    Rng rng(1234);
    for (int trial = 0; trial < 50; ++trial) {
        const long long a[3] = {1 + static_cast<long long>(rng.uniform_int(20)),
                                1 + static_cast<long long>(rng.uniform_int(20)),
                                1 + static_cast<long long>(rng.uniform_int(20))};
        const long long b[2] = {1 + static_cast<long long>(rng.uniform_int(20)),
                                1 + static_cast<long long>(rng.uniform_int(20))};
        ContingencyTable t;
        for (size_t r = 0; r < 3; ++r) {
            for (size_t c = 0; c < 2; ++c) t.counts[r][c] = a[r] * b[c];
        }
        const ChiSquareResult res = chi_square_independence(t);
        CHECK(std::abs(res.statistic) < 1e-9);
    }
}

TEST_CASE("p-value is non-increasing in the statistic at dof 2") {
    double prev = 1.0;
    for (double x = 0.0; x <= 50.0; x += 0.25) {
        const double p = gamma_q(1.0, x / 2.0);
        CHECK(p <= prev + 1e-15);
        prev = p;
    }
}

TEST_CASE("gamma_q agrees with the dof=2 closed form to 1e-10 relative error") {
    for (double x = 0.01; x <= 60.0; x += 0.37) {
        const double q = gamma_q(1.0, x / 2.0);
        const double closed = std::exp(-x / 2.0);
        CHECK(std::abs(q - closed) <= 1e-10 * closed);
    }
}

TEST_CASE("gamma_q sanity at other shapes") {
    CHECK(gamma_q(2.5, 0.0) == doctest::Approx(1.0));
    // Q(0.5, x) = erfc(sqrt(x))
    for (double x : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        CHECK(gamma_q(0.5, x) == doctest::Approx(std::erfc(std::sqrt(x))).epsilon(1e-10));
    }
}
