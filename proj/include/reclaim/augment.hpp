#pragma once

#include <optional>
#include <string>

#include "reclaim/corpus.hpp"

namespace reclaim {

// Sampling knobs are pinned for reproducibility; validation rejects anything
// else.
struct TranslationRequest {
    std::string text;
    Lang source_lang = Lang::en;
    Lang target_lang = Lang::es;
    double temperature = 0.0;
    double top_p = 1.0;
};

enum class TranslatorKind { http_chat_completions, mock };

struct TranslatorEndpoint {
    TranslatorKind kind = TranslatorKind::mock;
    std::optional<std::string> base_url;  // required for the http kind
    std::string model_name = "mock";
    std::optional<std::string> cache_dir;  // enables the on-disk response cache
};

// Translates one text. Responses are cached on disk under
// {cache_dir}/{sha256(text, source, target, model)}.json; repeated calls are
// byte-identical cache hits. The mock endpoint returns "[{target}] " + text.
// Throws TransportError on network failure with an empty cache, or when the
// provider returns an empty/malformed response.
std::string translate(const TranslatorEndpoint& endpoint, const TranslationRequest& request);

// One-to-many back-translation: every example is kept (origin native) and
// followed by its translations into the two alternate languages in enum
// order, ids suffixed "#<lang>", labels copied verbatim. Output size is
// exactly 3x the input.
Corpus augment_corpus(const Corpus& corpus, const TranslatorEndpoint& endpoint);

}  // namespace reclaim
