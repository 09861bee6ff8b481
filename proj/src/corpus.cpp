#include "reclaim/corpus.hpp"

#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/numeric.hpp"

namespace reclaim {

using nlohmann::json;

const char* to_string(Lang lang) {
    switch (lang) {
        case Lang::en: return "en";
        case Lang::es: return "es";
        case Lang::it: return "it";
    }
    return "?";
}

Lang lang_from_string(const std::string& s) {
    if (s == "en") return Lang::en;
    if (s == "es") return Lang::es;
    if (s == "it") return Lang::it;
    throw DataError("unknown lang \"" + s + "\" (expected en, es or it)");
}

namespace {

void validate_example(const Example& ex, size_t row) {
    const std::string where = " (record " + std::to_string(row + 1) + ")";
    if (ex.id.empty()) throw DataError("empty id" + where);
    if (ex.text.empty()) throw DataError("empty text for id \"" + ex.id + "\"" + where);
    if (ex.label != 0 && ex.label != 1) {
        throw DataError("label must be 0 or 1 for id \"" + ex.id + "\"" + where);
    }
    if (ex.origin == Origin::native && ex.id.find('#') != std::string::npos) {
        throw DataError("'#' is reserved for derived ids, found in native id \"" + ex.id + "\"" + where);
    }
}

}  // namespace

Corpus::Corpus(std::vector<Example> examples) : examples_(std::move(examples)) {
    std::unordered_set<std::string> seen;
    seen.reserve(examples_.size());
    for (size_t i = 0; i < examples_.size(); ++i) {
        validate_example(examples_[i], i);
        if (!seen.insert(examples_[i].id).second) {
            throw DataError("duplicate id \"" + examples_[i].id + "\" (record " +
                            std::to_string(i + 1) + ")");
        }
    }
}

std::vector<int> Corpus::labels() const {
    std::vector<int> out;
    out.reserve(examples_.size());
    for (const auto& ex : examples_) out.push_back(ex.label);
    return out;
}

std::vector<Lang> Corpus::langs() const {
    std::vector<Lang> out;
    out.reserve(examples_.size());
    for (const auto& ex : examples_) out.push_back(ex.lang);
    return out;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);

    std::vector<Example> examples;
    std::unordered_map<std::string, size_t> first_line_of_id;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": malformed JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") ||
            !obj.contains("lang") || !obj.contains("label")) {
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": expected object with keys id, text, lang, label");
        }
        Example ex;
        try {
            ex.id = obj.at("id").get<std::string>();
            ex.text = obj.at("text").get<std::string>();
            ex.lang = lang_from_string(obj.at("lang").get<std::string>());
            ex.label = obj.at("label").get<int>();
            if (obj.contains("origin")) {
                const std::string o = obj.at("origin").get<std::string>();
                if (o == "native") {
                    ex.origin = Origin::native;
                } else if (o == "translated") {
                    ex.origin = Origin::translated;
                } else {
                    throw DataError("unknown origin \"" + o + "\"");
                }
            }
        } catch (const json::exception& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (ex.label != 0 && ex.label != 1) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": label must be 0 or 1");
        }
        auto [it, inserted] = first_line_of_id.emplace(ex.id, line_no);
        if (!inserted) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": duplicate id \"" +
                            ex.id + "\" (first seen at line " + std::to_string(it->second) + ")");
        }
        examples.push_back(std::move(ex));
    }
    return Corpus(std::move(examples));
}

void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + path);
    for (const auto& ex : corpus.examples()) {
        json obj;
        obj["id"] = ex.id;
        obj["text"] = ex.text;
        obj["lang"] = to_string(ex.lang);
        obj["label"] = ex.label;
        if (ex.origin == Origin::translated) obj["origin"] = "translated";
        out << obj.dump() << '\n';
    }
    if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
    if (!out) throw DataError("write failed: " + path);
}

long long ContingencyTable::col_total(size_t col) const {
    long long t = 0;
    for (const auto& row : counts) t += row[col];
    return t;
}

long long ContingencyTable::grand_total() const { return col_total(0) + col_total(1); }

ContingencyTable label_language_table(const Corpus& corpus) {
    if (corpus.empty()) throw DataError("label_language_table: empty corpus");
    ContingencyTable table;
    for (const auto& ex : corpus.examples()) {
        table.counts[static_cast<size_t>(ex.lang)][static_cast<size_t>(ex.label)] += 1;
    }
    return table;
}

ChiSquareResult chi_square_independence(const ContingencyTable& table) {
    const double grand = static_cast<double>(table.grand_total());
    if (grand <= 0.0) throw DataError("chi_square: empty table");
    for (size_t r = 0; r < kNumLangs; ++r) {
        if (table.row_total(r) == 0) {
            throw DataError(std::string("chi_square: degenerate table, zero total for row ") +
                            to_string(static_cast<Lang>(r)));
        }
    }
    for (size_t c = 0; c < 2; ++c) {
        if (table.col_total(c) == 0) {
            throw DataError("chi_square: degenerate table, zero total for label " +
                            std::to_string(c));
        }
    }

    double statistic = 0.0;
    for (size_t r = 0; r < kNumLangs; ++r) {
        for (size_t c = 0; c < 2; ++c) {
            const double expected =
                static_cast<double>(table.row_total(r)) * static_cast<double>(table.col_total(c)) / grand;
            const double diff = static_cast<double>(table.counts[r][c]) - expected;
            statistic += diff * diff / expected;
        }
    }

    ChiSquareResult result;
    result.statistic = statistic;
    result.dof = (kNumLangs - 1) * (2 - 1);
    result.p_value = gamma_q(static_cast<double>(result.dof) / 2.0, statistic / 2.0);
    return result;
}

}  // namespace reclaim
