#pragma once

// Single-file run configuration (JSON). Missing keys keep their defaults;
// unknown keys are rejected so that typos do not silently fall back.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "eager/aligner.hpp"
#include "eager/decoder.hpp"
#include "eager/model.hpp"
#include "eager/trainer.hpp"

namespace eager {

using Json = nlohmann::json;

struct PipelinePaths {
  std::string train_src, train_tgt;
  std::string dev_src, dev_tgt;
  std::string work_dir = "work";
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  PipelinePaths paths;
  bool tokenize = true;
  std::size_t bpe_ops = 8000;  // 0 keeps whole words
  AlignerConfig aligner;
  int start_pad = 0;
  double max_length_ratio = 9.0;
  ModelConfig model;  // vocab_size is filled in from the data
  TrainConfig train;
  DecodeConfig decode;  // decode.start_pad follows start_pad
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void only_keys(const Json& j, const std::string& section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError("config: unknown key '" + section + (section.empty() ? "" : ".") + k + "'");
  }
}

template <typename V>
void read(const Json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline Json to_json(const PipelineConfig& c) {
  return Json{
      {"seed", c.seed},
      {"paths",
       {{"train_src", c.paths.train_src},
        {"train_tgt", c.paths.train_tgt},
        {"dev_src", c.paths.dev_src},
        {"dev_tgt", c.paths.dev_tgt},
        {"work_dir", c.paths.work_dir}}},
      {"preprocess", {{"tokenize", c.tokenize}, {"bpe_ops", c.bpe_ops}}},
      {"aligner", {{"iterations", c.aligner.iterations}, {"tension", c.aligner.tension}, {"null_prob", c.aligner.null_prob}}},
      {"eagerize", {{"start_pad", c.start_pad}, {"max_length_ratio", c.max_length_ratio}}},
      {"model",
       {{"embed_dim", c.model.embed_dim},
        {"layers", c.model.layers},
        {"dropout_embed", c.model.dropout_embed},
        {"dropout_hidden", c.model.dropout_hidden}}},
      {"train",
       {{"lr", c.train.lr},
        {"batch_size", c.train.batch_size},
        {"bptt", c.train.bptt},
        {"eval_every", c.train.eval_every},
        {"patience_updates", c.train.patience_updates},
        {"clip_norm", c.train.clip_norm},
        {"max_updates", c.train.max_updates},
        {"max_seconds", c.train.max_seconds},
        {"eval_lanes", c.train.eval_lanes}}},
      {"decode",
       {{"beam_size", c.decode.beam_size},
        {"padding_limit", c.decode.padding_limit},
        {"spi", c.decode.spi},
        {"max_extra_steps", c.decode.max_extra_steps}}},
  };
}

inline PipelineConfig config_from_json(const Json& j) {
  using detail::read;
  PipelineConfig c;
  try {
    detail::only_keys(j, "", {"seed", "paths", "preprocess", "aligner", "eagerize", "model", "train", "decode"});
    read(j, "seed", c.seed);
    if (j.contains("paths")) {
      const auto& s = j["paths"];
      detail::only_keys(s, "paths", {"train_src", "train_tgt", "dev_src", "dev_tgt", "work_dir"});
      read(s, "train_src", c.paths.train_src);
      read(s, "train_tgt", c.paths.train_tgt);
      read(s, "dev_src", c.paths.dev_src);
      read(s, "dev_tgt", c.paths.dev_tgt);
      read(s, "work_dir", c.paths.work_dir);
    }
    if (j.contains("preprocess")) {
      const auto& s = j["preprocess"];
      detail::only_keys(s, "preprocess", {"tokenize", "bpe_ops"});
      read(s, "tokenize", c.tokenize);
      read(s, "bpe_ops", c.bpe_ops);
    }
    if (j.contains("aligner")) {
      const auto& s = j["aligner"];
      detail::only_keys(s, "aligner", {"iterations", "tension", "null_prob"});
      read(s, "iterations", c.aligner.iterations);
      read(s, "tension", c.aligner.tension);
      read(s, "null_prob", c.aligner.null_prob);
    }
    if (j.contains("eagerize")) {
      const auto& s = j["eagerize"];
      detail::only_keys(s, "eagerize", {"start_pad", "max_length_ratio"});
      read(s, "start_pad", c.start_pad);
      read(s, "max_length_ratio", c.max_length_ratio);
    }
    if (j.contains("model")) {
      const auto& s = j["model"];
      detail::only_keys(s, "model", {"embed_dim", "layers", "dropout_embed", "dropout_hidden"});
      read(s, "embed_dim", c.model.embed_dim);
      read(s, "layers", c.model.layers);
      read(s, "dropout_embed", c.model.dropout_embed);
      read(s, "dropout_hidden", c.model.dropout_hidden);
    }
    if (j.contains("train")) {
      const auto& s = j["train"];
      detail::only_keys(s, "train", {"lr", "batch_size", "bptt", "eval_every", "patience_updates", "clip_norm",
                                     "max_updates", "max_seconds", "eval_lanes"});
      read(s, "lr", c.train.lr);
      read(s, "batch_size", c.train.batch_size);
      read(s, "bptt", c.train.bptt);
      read(s, "eval_every", c.train.eval_every);
      read(s, "patience_updates", c.train.patience_updates);
      read(s, "clip_norm", c.train.clip_norm);
      read(s, "max_updates", c.train.max_updates);
      read(s, "max_seconds", c.train.max_seconds);
      read(s, "eval_lanes", c.train.eval_lanes);
    }
    if (j.contains("decode")) {
      const auto& s = j["decode"];
      detail::only_keys(s, "decode", {"beam_size", "padding_limit", "spi", "max_extra_steps"});
      read(s, "beam_size", c.decode.beam_size);
      read(s, "padding_limit", c.decode.padding_limit);
      read(s, "spi", c.decode.spi);
      read(s, "max_extra_steps", c.decode.max_extra_steps);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.seed = c.seed;
  c.decode.start_pad = c.start_pad;
  if (c.start_pad < 0) throw ConfigError("config: eagerize.start_pad must be >= 0");
  if (c.aligner.iterations < 1) throw ConfigError("config: aligner.iterations must be >= 1");
  if (!(c.max_length_ratio > 0)) throw ConfigError("config: eagerize.max_length_ratio must be > 0");
  try {
    c.train.validate();
    c.decode.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace eager
