#pragma once

#include <string>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/param.hpp"
#include "capsroute/text.hpp"

namespace capsroute {

/// File layout: "CAPSRT1\n", one ASCII line with the JSON header's byte
/// length, the header itself (configs, label map, vocab tokens, block
/// directory), then the parameter blocks as raw little-endian float32 at the
/// directory's offsets (relative to the end of the header).
struct CheckpointBlock {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::vector<std::string> labels;
    std::vector<std::string> vocab_tokens;
    std::vector<CheckpointBlock> blocks;

    LabelMap label_map() const { return LabelMap::from_names(labels); }
    Vocab vocab() const { return Vocab::from_tokens(vocab_tokens); }
};

void save_checkpoint(const std::string& path, const ModelConfig& model, const TrainConfig& train,
                     const LabelMap& labels, const Vocab& vocab, const ParamStore<float>& params);

/// Bad magic, truncation, and malformed headers raise DataError with
/// distinct messages.
Checkpoint load_checkpoint(const std::string& path);

/// Copy blocks into an existing store; name or shape mismatches raise
/// DataError naming the block.
void restore_params(const Checkpoint& ckpt, ParamStore<float>& params);

} // namespace capsroute
