#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "casii/synthdata.hpp"
#include "casii/train.hpp"

namespace casii::config {

/// Flat `key = value` text; `#` starts a comment, blank lines are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse(const std::string& text);
KeyValues read(const std::filesystem::path& path);

/// Apply recognised keys; an unknown key is an error so typos are not ignored.
void apply(const KeyValues& kv, synth::SynthConfig& config);
void apply(const KeyValues& kv, train::TrainConfig& config);

}  // namespace casii::config
