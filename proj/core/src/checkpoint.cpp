#include "capsroute/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "config_json.hpp"

namespace capsroute {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "CAPSRT1\n";
constexpr int kFormatVersion = 1;

// Parameter data is written as the in-memory float bytes; this codebase
// assumes a little-endian host (checked once at save/load).
void require_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw DataError("checkpoint io requires a little-endian host");
}

} // namespace

void save_checkpoint(const std::string& path, const ModelConfig& model, const TrainConfig& train,
                     const LabelMap& labels, const Vocab& vocab, const ParamStore<float>& params) {
    require_little_endian();

    json header;
    header["format_version"] = kFormatVersion;
    header["model"] = cfgjson::model_to_json(model);
    header["routing"] = cfgjson::routing_to_json(model.routing);
    header["train"] = cfgjson::train_to_json(train);
    header["labels"] = labels.names();
    header["vocab"] = vocab.tokens();
    header["vocab_fingerprint"] = vocab.fingerprint();

    json blocks = json::array();
    std::size_t offset = 0;
    for (const auto& p : params.all()) {
        blocks.push_back({{"name", p.name},
                          {"shape", p.value.shape()},
                          {"offset", offset},
                          {"count", p.value.numel()}});
        offset += p.value.numel() * sizeof(float);
    }
    header["blocks"] = blocks;

    const std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << kMagic << header_text.size() << '\n' << header_text;
    for (const auto& p : params.all()) {
        out.write(reinterpret_cast<const char*>(p.value.values().data()),
                  static_cast<std::streamsize>(p.value.numel() * sizeof(float)));
    }
    if (!out) throw DataError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    require_little_endian();

    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path);

    char magic[sizeof(kMagic) - 1];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw DataError("bad magic in checkpoint: " + path);
    }

    std::string len_line;
    if (!std::getline(in, len_line)) throw DataError("truncated checkpoint header: " + path);
    std::size_t header_len = 0;
    try {
        header_len = std::stoul(len_line);
    } catch (const std::exception&) {
        throw DataError("malformed header length in checkpoint: " + path);
    }

    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
        throw DataError("truncated checkpoint header: " + path);
    }

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint header in " + path + ": " + e.what());
    }

    Checkpoint ckpt;
    try {
        if (header.at("format_version").get<int>() != kFormatVersion) {
            throw DataError("unsupported checkpoint format_version " +
                            header.at("format_version").dump() + " in " + path);
        }
        cfgjson::model_from_json(header.at("model"), ckpt.model, "checkpoint model.");
        ckpt.model.routing = cfgjson::routing_from_json(header.at("routing"), "checkpoint routing.");
        cfgjson::train_from_json(header.at("train"), ckpt.train, "checkpoint train.");
        ckpt.labels = header.at("labels").get<std::vector<std::string>>();
        ckpt.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
        const auto stored_fp = header.at("vocab_fingerprint").get<std::uint64_t>();
        if (Vocab::from_tokens(ckpt.vocab_tokens).fingerprint() != stored_fp) {
            throw DataError("vocab fingerprint mismatch in checkpoint: " + path);
        }

        const std::streampos data_start = in.tellg();
        for (const auto& b : header.at("blocks")) {
            CheckpointBlock block;
            block.name = b.at("name").get<std::string>();
            block.shape = b.at("shape").get<Shape>();
            const auto offset = b.at("offset").get<std::size_t>();
            const auto count = b.at("count").get<std::size_t>();
            if (count != shape_numel(block.shape)) {
                throw DataError("checkpoint block " + block.name + " count disagrees with shape in " + path);
            }
            block.values.resize(count);
            in.seekg(data_start + static_cast<std::streamoff>(offset));
            if (!in.read(reinterpret_cast<char*>(block.values.data()),
                         static_cast<std::streamsize>(count * sizeof(float)))) {
                throw DataError("truncated checkpoint data for block " + block.name + " in " + path);
            }
            ckpt.blocks.push_back(std::move(block));
        }
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint header in " + path + ": " + e.what());
    }
    return ckpt;
}

void restore_params(const Checkpoint& ckpt, ParamStore<float>& params) {
    if (ckpt.blocks.size() != params.size()) {
        throw DataError("checkpoint holds " + std::to_string(ckpt.blocks.size()) +
                        " blocks but the model has " + std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < ckpt.blocks.size(); ++i) {
        const auto& block = ckpt.blocks[i];
        auto& p = params.all()[i];
        if (block.name != p.name) {
            throw DataError("checkpoint block order mismatch: expected " + p.name + ", found " + block.name);
        }
        if (block.shape != p.value.shape()) {
            throw DataError("shape mismatch for block " + block.name + ": checkpoint " +
                            shape_str(block.shape) + " vs model " + shape_str(p.value.shape()));
        }
        std::copy(block.values.begin(), block.values.end(), p.value.values_mut().begin());
    }
}

} // namespace capsroute
