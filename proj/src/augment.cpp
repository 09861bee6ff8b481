#include "reclaim/augment.hpp"

#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/hashing.hpp"

namespace reclaim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* language_name(Lang lang) {
    switch (lang) {
        case Lang::en: return "English";
        case Lang::es: return "Spanish";
        case Lang::it: return "Italian";
    }
    return "?";
}

void validate_request(const TranslationRequest& req) {
    if (req.source_lang == req.target_lang) {
        throw ConfigError("translate: source and target language must differ");
    }
    if (req.temperature != 0.0 || req.top_p != 1.0) {
        throw ConfigError("translate: temperature must be 0.0 and top_p 1.0");
    }
    if (req.text.empty()) throw DataError("translate: empty text");
}

std::string cache_key(const TranslationRequest& req, const std::string& model_name) {
    json key;
    key["text"] = req.text;
    key["source"] = to_string(req.source_lang);
    key["target"] = to_string(req.target_lang);
    key["model"] = model_name;
    return sha256_hex(key.dump());
}

std::optional<std::string> cache_lookup(const fs::path& file) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    json entry;
    try {
        entry = json::parse(in);
        return entry.at("response").get<std::string>();
    } catch (const json::exception&) {
        return std::nullopt;  // corrupt entry, treat as a miss
    }
}

void cache_store(const fs::path& file, const TranslationRequest& req,
                 const std::string& model_name, const std::string& response) {
    json entry;
    entry["request"] = {{"text", req.text},
                        {"source", to_string(req.source_lang)},
                        {"target", to_string(req.target_lang)},
                        {"model", model_name},
                        {"temperature", req.temperature},
                        {"top_p", req.top_p}};
    entry["response"] = response;
    // temp-then-rename keeps concurrent writers of the same key safe
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("translate: cannot write cache file: " + tmp.string());
        out << entry.dump() << '\n';
    }
    fs::rename(tmp, file);
}

std::string build_prompt(const TranslationRequest& req) {
    std::string prompt = "Translate the following tweet from ";
    prompt += language_name(req.source_lang);
    prompt += " to ";
    prompt += language_name(req.target_lang);
    prompt += ". Preserve meaning, tone, and any slur reclamation nuance. "
              "Output only the translation.\n\n";
    prompt += req.text;
    return prompt;
}

std::string http_translate(const TranslatorEndpoint& endpoint, const TranslationRequest& req) {
    if (!endpoint.base_url || endpoint.base_url->empty()) {
        throw ConfigError("translate: http endpoint requires base_url");
    }
    const std::string& url = *endpoint.base_url;

    // Split a possible path suffix off the base URL; httplib clients take
    // scheme://host:port only.
    std::string host_part = url;
    std::string path_prefix;
    const size_t scheme_end = url.find("://");
    if (scheme_end != std::string::npos) {
        const size_t path_start = url.find('/', scheme_end + 3);
        if (path_start != std::string::npos) {
            host_part = url.substr(0, path_start);
            path_prefix = url.substr(path_start);
            while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
        }
    }

    json body;
    body["model"] = endpoint.model_name;
    body["messages"] = json::array({json{{"role", "user"}, {"content", build_prompt(req)}}});
    body["temperature"] = req.temperature;
    body["top_p"] = req.top_p;

    httplib::Client client(host_part);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(60, 0);
    auto res = client.Post(path_prefix + "/chat/completions", body.dump(), "application/json");
    if (!res) {
        throw TransportError("translate: request to " + url +
                             " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("translate: " + url + " returned HTTP " +
                             std::to_string(res->status));
    }
    try {
        json reply = json::parse(res->body);
        const std::string content =
            reply.at("choices").at(0).at("message").at("content").get<std::string>();
        if (content.empty()) throw TransportError("translate: provider returned empty content");
        return content;
    } catch (const json::exception& e) {
        throw TransportError("translate: malformed provider response from " + url + ": " +
                             e.what());
    }
}

}  // namespace

std::string translate(const TranslatorEndpoint& endpoint, const TranslationRequest& request) {
    validate_request(request);

    fs::path cache_file;
    if (endpoint.cache_dir) {
        fs::create_directories(*endpoint.cache_dir);
        cache_file = fs::path(*endpoint.cache_dir) /
                     (cache_key(request, endpoint.model_name) + ".json");
        if (auto hit = cache_lookup(cache_file)) return *hit;
    }

    std::string response;
    if (endpoint.kind == TranslatorKind::mock) {
        response = "[" + std::string(to_string(request.target_lang)) + "] " + request.text;
    } else {
        response = http_translate(endpoint, request);
    }

    if (endpoint.cache_dir) cache_store(cache_file, request, endpoint.model_name, response);
    return response;
}

Corpus augment_corpus(const Corpus& corpus, const TranslatorEndpoint& endpoint) {
    if (corpus.empty()) throw DataError("augment_corpus: empty corpus");

    std::vector<Example> out;
    out.reserve(corpus.size() * 3);
    for (const auto& ex : corpus.examples()) {
        out.push_back(ex);
        for (Lang target : kAllLangs) {
            if (target == ex.lang) continue;
            TranslationRequest req;
            req.text = ex.text;
            req.source_lang = ex.lang;
            req.target_lang = target;
            std::string translated;
            try {
                translated = translate(endpoint, req);
            } catch (const Error& e) {
                throw DataError("augment_corpus: aborted at id \"" + ex.id +
                                "\": " + e.what());
            }
            Example t;
            t.id = ex.id + "#" + to_string(target);
            t.text = std::move(translated);
            t.lang = target;
            t.label = ex.label;
            t.origin = Origin::translated;
            out.push_back(std::move(t));
        }
    }
    return Corpus(std::move(out));
}

}  // namespace reclaim
