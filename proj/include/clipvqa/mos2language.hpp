#pragma once

// Quality-language encoding. The five-grade scale texts are fixed, so a
// word-level tokenizer over their closed vocabulary is lossless. The text
// encoder is a CLIP-style causal transformer whose parameters stay frozen
// throughout training; the encoding of a text is the hidden state at the
// EOS position after the final layer norm, projected to length r.

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "clipvqa/nn.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

enum class QualityLanguage { kLong, kShort };

struct QualityEntry {
    int score;
    std::string description;
};

// Five-grade scale in descending score order.
inline std::vector<QualityEntry> quality_scale(QualityLanguage mode) {
    if (mode == QualityLanguage::kLong) {
        return {{5, "Excellent and Imperceptible"},
                {4, "Good and perceptible, but not annoying"},
                {3, "Fair and slightly annoying"},
                {2, "Poor and annoying"},
                {1, "Bad and very annoying"}};
    }
    return {{5, "Excellent"}, {4, "Good"}, {3, "Fair"}, {2, "Poor"}, {1, "Bad"}};
}

inline std::vector<std::string> build_quality_texts(QualityLanguage mode) {
    std::vector<std::string> texts;
    for (const auto& e : quality_scale(mode)) texts.push_back(e.description);
    return texts;
}

inline QualityLanguage parse_quality_language(const std::string& s) {
    if (s == "long") return QualityLanguage::kLong;
    if (s == "short") return QualityLanguage::kShort;
    throw std::invalid_argument("quality language must be 'long' or 'short', got '" + s + "'");
}

inline const char* quality_language_name(QualityLanguage mode) {
    return mode == QualityLanguage::kLong ? "long" : "short";
}

// Word-level tokenizer over the closed quality-scale vocabulary.
// Normalization lowercases and strips punctuation.
class TextTokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;

    explicit TextTokenizer(int context_len = 16) : context_len_(context_len) {
        // Vocabulary is the union of words from both description tables.
        std::vector<std::string> all;
        for (auto mode : {QualityLanguage::kLong, QualityLanguage::kShort})
            for (const auto& text : build_quality_texts(mode))
                for (const auto& w : split_words(text)) all.push_back(w);
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        words_ = {"<pad>", "<bos>", "<eos>"};
        words_.insert(words_.end(), all.begin(), all.end());
        for (std::size_t i = 0; i < words_.size(); ++i) ids_[words_[i]] = static_cast<int>(i);
    }

    static std::vector<std::string> split_words(const std::string& text) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : text) {
            const auto uc = static_cast<unsigned char>(c);
            if (std::isalnum(uc)) {
                cur.push_back(static_cast<char>(std::tolower(uc)));
            } else if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    }

    static std::string normalize(const std::string& text) {
        std::string out;
        for (const auto& w : split_words(text)) {
            if (!out.empty()) out.push_back(' ');
            out += w;
        }
        return out;
    }

    // [BOS, words..., EOS]; throws when the result exceeds the context.
    std::vector<int> tokenize(const std::string& text) const {
        std::vector<int> ids{kBos};
        for (const auto& w : split_words(text)) {
            auto it = ids_.find(w);
            if (it == ids_.end())
                throw std::invalid_argument("tokenizer: unknown word '" + w + "'");
            ids.push_back(it->second);
        }
        ids.push_back(kEos);
        if (static_cast<int>(ids.size()) > context_len_)
            throw std::invalid_argument("tokenizer: text exceeds context length " +
                                        std::to_string(context_len_) + ": '" + text + "'");
        return ids;
    }

    std::string detokenize(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kBos || id == kEos || id == kPad) continue;
            if (id < 0 || id >= static_cast<int>(words_.size()))
                throw std::invalid_argument("tokenizer: id out of range");
            if (!out.empty()) out.push_back(' ');
            out += words_[static_cast<std::size_t>(id)];
        }
        return out;
    }

    int vocab_size() const { return static_cast<int>(words_.size()); }
    int context_len() const { return context_len_; }

private:
    int context_len_;
    std::vector<std::string> words_;
    std::map<std::string, int> ids_;
};

// Frozen CLIP-style text encoder.
struct TextEncoder {
    TextTokenizer tokenizer;
    int dim = 0;
    int repr = 0;
    TensorPtr tok_emb;  // [V x d]
    TensorPtr pos_emb;  // [context x d]
    std::vector<EncoderLayer> layers;
    LayerNorm ln_final;
    Linear proj;  // d -> r, no bias

    TextEncoder() = default;
    TextEncoder(int dim_, int repr_, int n_layers, int heads, RngState& rng, int context_len = 16)
        : tokenizer(context_len),
          dim(dim_),
          repr(repr_),
          tok_emb(randn_param({tokenizer.vocab_size(), dim_}, rng, 0.02)),
          pos_emb(randn_param({context_len, dim_}, rng, 0.02)),
          ln_final(dim_),
          proj(dim_, repr_, rng, /*with_bias=*/false) {
        for (int i = 0; i < n_layers; ++i) layers.emplace_back(dim_, heads, rng, /*causal=*/true);
    }

    // Encodes one text to an r-vector: embed, add positions, run the causal
    // layers over the PAD-extended sequence, read the EOS position.
    TensorPtr encode_one(const std::string& text) const {
        auto ids = tokenizer.tokenize(text);
        const int eos_pos = static_cast<int>(ids.size()) - 1;
        ids.resize(static_cast<std::size_t>(tokenizer.context_len()), TextTokenizer::kPad);
        auto x = add(embedding(tok_emb, ids), pos_emb);
        for (const auto& layer : layers) x = layer(x);
        auto eos = slice(ln_final(x), 0, eos_pos, 1);  // [1 x d]
        return proj(eos);                              // [1 x r]
    }

    TensorPtr encode_texts(const std::vector<std::string>& texts) const {
        std::vector<TensorPtr> rows;
        rows.reserve(texts.size());
        for (const auto& t : texts) rows.push_back(encode_one(t));
        return concat(rows, 0);  // [g x r]
    }

    void collect(const std::string& prefix, ParamList& out) const {
        // The whole encoder is frozen during training.
        out.push_back({prefix + ".tok_emb", tok_emb, true});
        out.push_back({prefix + ".pos_emb", pos_emb, true});
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].collect(prefix + ".layer" + std::to_string(i + 1), out, true);
        ln_final.collect(prefix + ".ln_final", out, true);
        proj.collect(prefix + ".proj", out, true);
    }
};

}  // namespace clipvqa
