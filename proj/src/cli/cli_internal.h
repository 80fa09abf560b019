#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tabseq/models.h"

namespace tabseq::cli {

// Case- and punctuation-insensitive ("ft-transformer" works).
models::Family parse_family_name(std::string_view name);

struct Context {
  nlohmann::json config;  // resolved
  std::string run_id;
  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;
  std::ostream& out;
  std::ostream& err;
};

void cmd_train(const Context& ctx);
void cmd_bench(const Context& ctx);
void cmd_rank(const Context& ctx);
void cmd_synth(const Context& ctx);
void cmd_fetch(const Context& ctx);
void cmd_report(const Context& ctx);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace tabseq::cli
