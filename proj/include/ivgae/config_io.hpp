#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ivgae/bayesopt.hpp"
#include "ivgae/training.hpp"

namespace ivgae {

// Plain-text key=value configs. Blank lines and text after '#' are ignored.
// Recognized keys: lr, z_dim, gamma_init, beta_init, lambda_kl, epochs,
// window, d_hidden, d_p, heads, layers, p_drop, eval_seed, pos_weight.

/// Applies every key in `in` on top of `config`. Throws ConfigError naming the
/// line on unknown keys, duplicate keys or unparsable values.
void read_config(std::istream& in, TrainConfig& config, const std::string& source = "<config>");
void read_config_file(const std::filesystem::path& path, TrainConfig& config);

/// The five tuned keys, one per line, in search-space order.
void write_hyper(std::ostream& out, const HyperConfig& hyper);
void write_hyper_file(const std::filesystem::path& path, const HyperConfig& hyper);

}  // namespace ivgae
