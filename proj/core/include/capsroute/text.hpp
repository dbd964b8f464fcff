#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capsroute/errors.hpp"
#include "capsroute/rng.hpp"

namespace capsroute {

/// Lowercase, replace punctuation with spaces, split on whitespace.
/// Bytes >= 0x80 are kept verbatim so UTF-8 sequences survive.
std::vector<std::string> tokenize(const std::string& text);

/// Token table with two fixed slots: pad=0, unk=1. Corpus tokens are ranked
/// by frequency (desc) then lexicographically, so rebuilding from the same
/// corpus reproduces the same ids.
class Vocab {
public:
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;

    /// max_size bounds the full table including the two special slots.
    static Vocab build(const std::vector<std::string>& corpus, std::size_t min_count, std::size_t max_size);

    /// Reconstruct from persisted "token\tid" lines.
    static Vocab from_tokens(std::vector<std::string> id_to_token);

    int lookup(const std::string& token) const; // unk_id when absent
    const std::string& token(int id) const;
    std::size_t size() const { return id_to_token_.size(); }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    /// FNV-1a over the token list; cheap integrity check for checkpoints.
    std::uint64_t fingerprint() const;

private:
    std::vector<std::string> id_to_token_;
    std::map<std::string, int> token_to_id_;
};

/// Tokenize, map through the vocab, truncate to length L (tail dropped),
/// right-pad with pad_id.
std::vector<int> encode_document(const std::string& text, const Vocab& vocab, std::size_t L);

/// Token strings for non-pad ids, in order.
std::vector<std::string> decode_document(const std::vector<int>& ids, const Vocab& vocab);

/// First-seen-order label interning; eval-time lookups must not grow it.
class LabelMap {
public:
    int intern(const std::string& label);       // adds when unseen
    int lookup(const std::string& label) const; // DataError when unseen
    const std::string& name(int id) const;
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    static LabelMap from_names(std::vector<std::string> names);

private:
    std::vector<std::string> names_;
    std::map<std::string, int> index_;
};

struct RawExample {
    std::string label;
    std::string text;
};

enum class DataFormat { csv, tsv, jsonl };

DataFormat data_format_from_name(const std::string& name); // "csv"|"tsv"|"jsonl"
DataFormat infer_data_format(const std::string& path);     // by extension

/// Load (label, text) rows. CSV/TSV may start with a "label,text" header;
/// JSONL rows are objects with "label" (string or integer) and "text".
/// Malformed rows raise DataError naming the line.
std::vector<RawExample> load_dataset(const std::string& path, DataFormat format);

struct Document {
    int label = 0;
    std::vector<int> tokens; // padded to L
    std::size_t length = 0;  // non-pad prefix length
    std::string raw_text;
};

/// Encode raw examples against a fixed vocab. grow_labels selects between
/// training (intern new labels) and eval (unseen label is an error).
std::vector<Document> encode_dataset(const std::vector<RawExample>& raw, const Vocab& vocab,
                                     LabelMap& labels, std::size_t L, bool grow_labels);

struct Batch {
    std::vector<std::vector<int>> token_ids; // B rows, each length L
    std::vector<int> labels;
    std::vector<std::size_t> lengths;
    std::size_t size() const { return token_ids.size(); }
};

/// Seeded shuffle, then fixed-size batches; the final partial batch is kept.
std::vector<Batch> make_batches(const std::vector<Document>& docs, std::size_t batch_size, std::uint64_t shuffle_seed);

} // namespace capsroute
