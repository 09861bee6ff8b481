#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "reclaim/augment.hpp"
#include "reclaim/errors.hpp"

using namespace reclaim;
namespace fs = std::filesystem;

namespace {

Corpus two_example_corpus() {
    std::vector<Example> ex = {
        {"t1", "hello world", Lang::en, 1, Origin::native},
        {"t2", "ciao mondo", Lang::it, 0, Origin::native},
    };
    return Corpus(std::move(ex));
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::multiset<int> label_multiset(const Corpus& c) {
    std::multiset<int> ms;
    for (const auto& ex : c.examples()) ms.insert(ex.label);
    return ms;
}

}  // namespace

TEST_CASE("mock translate tags the target language") {
    TranslatorEndpoint mock;
    TranslationRequest req;
    req.text = "hello";
    req.source_lang = Lang::en;
    req.target_lang = Lang::es;
    CHECK(translate(mock, req) == "[es] hello");
}

TEST_CASE("translate validates the request") {
    TranslatorEndpoint mock;
    TranslationRequest bad;
    bad.text = "x";
    bad.source_lang = Lang::en;
    bad.target_lang = Lang::en;
    CHECK_THROWS_AS(translate(mock, bad), ConfigError);

    TranslationRequest warm;
    warm.text = "x";
    warm.source_lang = Lang::en;
    warm.target_lang = Lang::es;
    warm.temperature = 0.7;
    CHECK_THROWS_AS(translate(mock, warm), ConfigError);
}

TEST_CASE("repeat requests are served from the disk cache") {
    const fs::path cache = fresh_dir("translate_cache");
    TranslatorEndpoint mock;
    mock.cache_dir = cache.string();

    TranslationRequest req;
    req.text = "hello";
    req.source_lang = Lang::en;
    req.target_lang = Lang::it;

    const std::string first = translate(mock, req);
    CHECK(first == "[it] hello");

    // exactly one cache entry, and the second call reads it (overwrite the
    // stored response with a sentinel to prove the hit)
    size_t files = 0;
    fs::path entry;
    for (const auto& f : fs::directory_iterator(cache)) {
        ++files;
        entry = f.path();
    }
    REQUIRE(files == 1);

    std::ifstream in(entry);
    nlohmann::json stored = nlohmann::json::parse(in);
    in.close();
    stored["response"] = "sentinel";
    std::ofstream out(entry, std::ios::binary);
    out << stored.dump();
    out.close();

    CHECK(translate(mock, req) == "sentinel");
}

TEST_CASE("unreachable http endpoint without cache raises a transport error naming the url") {
    TranslatorEndpoint http;
    http.kind = TranslatorKind::http_chat_completions;
    http.base_url = "http://127.0.0.1:1";  // nothing listens here
    http.model_name = "test-model";

    TranslationRequest req;
    req.text = "hello";
    req.source_lang = Lang::en;
    req.target_lang = Lang::es;
    try {
        translate(http, req);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(std::string(e.what()).find("127.0.0.1:1") != std::string::npos);
    }
}

TEST_CASE("http translator speaks the chat-completions protocol") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        const auto body = nlohmann::json::parse(req.body);
        CHECK(body.at("temperature").get<double>() == 0.0);
        CHECK(body.at("top_p").get<double>() == 1.0);
        CHECK(body.at("model").get<std::string>() == "test-model");
        const std::string prompt = body.at("messages").at(0).at("content").get<std::string>();
        CHECK(prompt.find("English") != std::string::npos);
        CHECK(prompt.find("Spanish") != std::string::npos);
        CHECK(prompt.find("hello world") != std::string::npos);
        nlohmann::json reply = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "hola mundo"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const fs::path cache = fresh_dir("http_cache");
    TranslatorEndpoint http;
    http.kind = TranslatorKind::http_chat_completions;
    http.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    http.model_name = "test-model";
    http.cache_dir = cache.string();

    TranslationRequest req;
    req.text = "hello world";
    req.source_lang = Lang::en;
    req.target_lang = Lang::es;

    CHECK(translate(http, req) == "hola mundo");
    CHECK(translate(http, req) == "hola mundo");  // cache hit, no second request
    CHECK(hits == 1);

    server.stop();
    server_thread.join();
}

TEST_CASE("augment_corpus triples the corpus preserving labels") {
    const Corpus base = two_example_corpus();
    const Corpus aug = augment_corpus(base, TranslatorEndpoint{});
    REQUIRE(aug.size() == 6);

    std::multiset<int> expected = {1, 1, 1, 0, 0, 0};
    CHECK(label_multiset(aug) == expected);

    // native row comes first, followed by its translations in enum order
    CHECK(aug[0].id == "t1");
    CHECK(aug[1].id == "t1#es");
    CHECK(aug[1].lang == Lang::es);
    CHECK(aug[1].text == "[es] hello world");
    CHECK(aug[1].origin == Origin::translated);
    CHECK(aug[2].id == "t1#it");
    CHECK(aug[3].id == "t2");
    CHECK(aug[4].id == "t2#en");
    CHECK(aug[5].id == "t2#es");
}

TEST_CASE("derived ids appear exactly once") {
    std::vector<Example> ex = {{"t7", "hola amigos", Lang::es, 1, Origin::native}};
    const Corpus aug = augment_corpus(Corpus(std::move(ex)), TranslatorEndpoint{});
    size_t en_count = 0, it_count = 0;
    for (const auto& e : aug.examples()) {
        en_count += (e.id == "t7#en");
        it_count += (e.id == "t7#it");
    }
    CHECK(en_count == 1);
    CHECK(it_count == 1);
}

TEST_CASE("augmentation preserves the class ratio exactly") {
    std::vector<Example> ex;
    for (int i = 0; i < 100; ++i) {
        Example e;
        e.id = "s" + std::to_string(i);
        e.text = "text " + std::to_string(i);
        e.lang = static_cast<Lang>(i % 3);
        e.label = i < 9 ? 1 : 0;  // 9% positives
        ex.push_back(std::move(e));
    }
    const Corpus base(std::move(ex));
    const Corpus aug = augment_corpus(base, TranslatorEndpoint{});
    CHECK(aug.size() == 300);
    size_t pos = 0;
    for (const auto& e : aug.examples()) pos += e.label;
    CHECK(pos == 27);  // still exactly 9%
}

TEST_CASE("per-language label distributions carry over to each origin group") {
    std::vector<Example> ex;
    const double rates[3] = {0.1, 0.3, 0.5};
    for (int i = 0; i < 90; ++i) {
        Example e;
        e.id = "g" + std::to_string(i);
        e.text = "word " + std::to_string(i * 7919 % 997);
        e.lang = static_cast<Lang>(i % 3);
        e.label = (i / 3) % 10 < static_cast<int>(rates[i % 3] * 10) ? 1 : 0;
        ex.push_back(std::move(e));
    }
    const Corpus base(std::move(ex));

    // positives per source language in the input
    std::map<Lang, std::pair<size_t, size_t>> input_counts;  // lang -> (pos, total)
    for (const auto& e : base.examples()) {
        input_counts[e.lang].first += e.label;
        input_counts[e.lang].second += 1;
    }

    const Corpus aug = augment_corpus(base, TranslatorEndpoint{});
    // group translated rows by their source language (recoverable from the id)
    std::map<Lang, std::pair<size_t, size_t>> translated_counts;
    for (const auto& e : aug.examples()) {
        if (e.origin != Origin::translated) continue;
        const std::string base_id = e.id.substr(0, e.id.find('#'));
        for (const auto& src : base.examples()) {
            if (src.id == base_id) {
                translated_counts[src.lang].first += e.label;
                translated_counts[src.lang].second += 1;
                break;
            }
        }
    }
    for (const auto& [lang, counts] : input_counts) {
        CHECK(translated_counts[lang].second == 2 * counts.second);
        CHECK(translated_counts[lang].first == 2 * counts.first);
    }
}

TEST_CASE("translated rows change language but never the label") {
    const Corpus base = two_example_corpus();
    const Corpus aug = augment_corpus(base, TranslatorEndpoint{});
    for (size_t i = 0; i < base.size(); ++i) {
        const auto& native = aug[3 * i];
        CHECK(native.origin == Origin::native);
        for (size_t j = 1; j <= 2; ++j) {
            const auto& t = aug[3 * i + j];
            CHECK(t.origin == Origin::translated);
            CHECK(t.lang != native.lang);
            CHECK(t.label == native.label);
        }
    }
}

TEST_CASE("augment_corpus is deterministic with the mock endpoint") {
    const Corpus base = two_example_corpus();
    const Corpus a = augment_corpus(base, TranslatorEndpoint{});
    const Corpus b = augment_corpus(base, TranslatorEndpoint{});
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].text == b[i].text);
    }
}

TEST_CASE("augmentation failure reports the failing id") {
    TranslatorEndpoint dead;
    dead.kind = TranslatorKind::http_chat_completions;
    dead.base_url = "http://127.0.0.1:1";
    try {
        augment_corpus(two_example_corpus(), dead);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("t1") != std::string::npos);
    }
}

TEST_CASE("augment_corpus rejects an empty corpus") {
    CHECK_THROWS_AS(augment_corpus(Corpus{}, TranslatorEndpoint{}), DataError);
}
