#include "capsroute/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace capsroute {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (c >= 0x80 || std::isalnum(c)) {
            cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t min_count, std::size_t max_size) {
    if (corpus.empty()) throw DataError("vocab build: empty corpus");
    if (max_size < 2) throw ConfigError("vocab max_size must leave room for pad and unk");
    std::map<std::string, std::size_t> counts;
    for (const auto& text : corpus) {
        for (auto& tok : tokenize(text)) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::vector<std::string> id_to_token = {"<pad>", "<unk>"};
    for (const auto& [tok, count] : ranked) {
        if (count < min_count) continue;
        if (id_to_token.size() >= max_size) break;
        id_to_token.push_back(tok);
    }
    return from_tokens(std::move(id_to_token));
}

Vocab Vocab::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < 2 || id_to_token[0] != "<pad>" || id_to_token[1] != "<unk>") {
        throw DataError("vocab table must start with <pad>, <unk>");
    }
    Vocab v;
    v.id_to_token_ = std::move(id_to_token);
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        auto [it, fresh] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
        if (!fresh) throw DataError("vocab table repeats token: " + v.id_to_token_[i]);
    }
    return v;
}

int Vocab::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unk_id : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw DataError("vocab: id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocab file: " + path);
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        out << id_to_token_[i] << '\t' << i << '\n';
    }
    if (!out) throw DataError("short write on vocab file: " + path);
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocab file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("vocab file " + path + " line " + std::to_string(lineno) + ": missing tab");
        }
        const std::string tok = line.substr(0, tab);
        const std::string id_str = line.substr(tab + 1);
        if (id_str != std::to_string(tokens.size())) {
            throw DataError("vocab file " + path + " line " + std::to_string(lineno) +
                            ": expected id " + std::to_string(tokens.size()) + ", got " + id_str);
        }
        tokens.push_back(tok);
    }
    return from_tokens(std::move(tokens));
}

std::uint64_t Vocab::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ull;
    };
    for (const auto& tok : id_to_token_) {
        for (unsigned char c : tok) mix(c);
        mix('\n');
    }
    return h;
}

std::vector<int> encode_document(const std::string& text, const Vocab& vocab, std::size_t L) {
    if (L < 1) throw ConfigError("document length L must be at least 1");
    std::vector<int> ids;
    ids.reserve(L);
    for (const auto& tok : tokenize(text)) {
        if (ids.size() == L) break;
        ids.push_back(vocab.lookup(tok));
    }
    ids.resize(L, Vocab::pad_id);
    return ids;
}

std::vector<std::string> decode_document(const std::vector<int>& ids, const Vocab& vocab) {
    std::vector<std::string> out;
    for (int id : ids) {
        if (id == Vocab::pad_id) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

int LabelMap::intern(const std::string& label) {
    auto it = index_.find(label);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(names_.size());
    names_.push_back(label);
    index_.emplace(label, id);
    return id;
}

int LabelMap::lookup(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw DataError("unknown label at eval time: " + label);
    return it->second;
}

const std::string& LabelMap::name(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
        throw DataError("label id " + std::to_string(id) + " out of range");
    }
    return names_[static_cast<std::size_t>(id)];
}

LabelMap LabelMap::from_names(std::vector<std::string> names) {
    LabelMap m;
    for (auto& n : names) m.intern(n);
    if (m.size() != names.size()) throw DataError("label map repeats a label name");
    return m;
}

DataFormat data_format_from_name(const std::string& name) {
    if (name == "csv") return DataFormat::csv;
    if (name == "tsv") return DataFormat::tsv;
    if (name == "jsonl") return DataFormat::jsonl;
    throw ConfigError("unknown data format: " + name + " (expected csv, tsv, or jsonl)");
}

DataFormat infer_data_format(const std::string& path) {
    auto dot = path.rfind('.');
    if (dot != std::string::npos) {
        const std::string ext = path.substr(dot + 1);
        if (ext == "csv") return DataFormat::csv;
        if (ext == "tsv") return DataFormat::tsv;
        if (ext == "jsonl") return DataFormat::jsonl;
    }
    throw ConfigError("cannot infer data format from path: " + path + " (set data.format)");
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Split one CSV record into fields, honoring double quotes and "" escapes.
std::vector<std::string> split_csv(const std::string& line, char sep, std::size_t lineno, const std::string& path) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    fields.back().push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                fields.back().push_back(c);
            }
        } else if (c == '"' && fields.back().empty()) {
            quoted = true;
        } else if (c == sep) {
            fields.emplace_back();
        } else {
            fields.back().push_back(c);
        }
    }
    if (quoted) {
        throw DataError(path + " line " + std::to_string(lineno) + ": unterminated quote");
    }
    return fields;
}

std::vector<RawExample> load_separated(const std::string& path, char sep) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read dataset: " + path);
    std::vector<RawExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line, sep, lineno, path);
        if (lineno == 1 && fields.size() == 2 && lower(fields[0]) == "label" && lower(fields[1]) == "text") {
            continue; // optional header
        }
        if (fields.size() != 2) {
            throw DataError(path + " line " + std::to_string(lineno) + ": expected 2 fields (label, text), got " +
                            std::to_string(fields.size()));
        }
        if (fields[0].empty()) {
            throw DataError(path + " line " + std::to_string(lineno) + ": empty label");
        }
        out.push_back(RawExample{fields[0], fields[1]});
    }
    return out;
}

std::vector<RawExample> load_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read dataset: " + path);
    std::vector<RawExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("label") || !obj.contains("text")) {
            throw DataError(path + " line " + std::to_string(lineno) + ": need object with label and text");
        }
        std::string label;
        if (obj["label"].is_string()) {
            label = obj["label"].get<std::string>();
        } else if (obj["label"].is_number_integer()) {
            label = std::to_string(obj["label"].get<long long>());
        } else {
            throw DataError(path + " line " + std::to_string(lineno) + ": label must be string or integer");
        }
        if (!obj["text"].is_string()) {
            throw DataError(path + " line " + std::to_string(lineno) + ": text must be a string");
        }
        out.push_back(RawExample{label, obj["text"].get<std::string>()});
    }
    return out;
}

} // namespace

std::vector<RawExample> load_dataset(const std::string& path, DataFormat format) {
    switch (format) {
        case DataFormat::csv: return load_separated(path, ',');
        case DataFormat::tsv: return load_separated(path, '\t');
        case DataFormat::jsonl: return load_jsonl(path);
    }
    throw ConfigError("unhandled data format");
}

std::vector<Document> encode_dataset(const std::vector<RawExample>& raw, const Vocab& vocab,
                                     LabelMap& labels, std::size_t L, bool grow_labels) {
    std::vector<Document> docs;
    docs.reserve(raw.size());
    for (const auto& ex : raw) {
        Document d;
        d.label = grow_labels ? labels.intern(ex.label) : labels.lookup(ex.label);
        d.tokens = encode_document(ex.text, vocab, L);
        d.length = 0;
        while (d.length < d.tokens.size() && d.tokens[d.length] != Vocab::pad_id) ++d.length;
        d.raw_text = ex.text;
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<Batch> make_batches(const std::vector<Document>& docs, std::size_t batch_size, std::uint64_t shuffle_seed) {
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> order(docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(shuffle_seed);
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        Batch b;
        const std::size_t end = std::min(order.size(), start + batch_size);
        for (std::size_t k = start; k < end; ++k) {
            const Document& d = docs[order[k]];
            b.token_ids.push_back(d.tokens);
            b.labels.push_back(d.label);
            b.lengths.push_back(d.length);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

} // namespace capsroute
