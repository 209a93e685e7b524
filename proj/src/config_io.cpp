#include "ivgae/config_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "ivgae/errors.hpp"

namespace ivgae {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("not a number: '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("not a non-negative integer: '" + v + "'");
  }
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"lr", [](TrainConfig& c, const std::string& v) { c.lr = to_double(v); }},
      {"z_dim", [](TrainConfig& c, const std::string& v) { c.encoder.d_z = to_uint(v); }},
      {"gamma_init", [](TrainConfig& c, const std::string& v) { c.tama.gamma_init = to_double(v); }},
      {"beta_init", [](TrainConfig& c, const std::string& v) { c.tama.beta_init = to_double(v); }},
      {"lambda_kl", [](TrainConfig& c, const std::string& v) { c.kl_weight = to_double(v); }},
      {"epochs", [](TrainConfig& c, const std::string& v) { c.epochs = to_uint(v); }},
      {"window", [](TrainConfig& c, const std::string& v) { c.window = to_uint(v); }},
      {"d_hidden", [](TrainConfig& c, const std::string& v) { c.encoder.d_hidden = to_uint(v); }},
      {"d_p", [](TrainConfig& c, const std::string& v) { c.encoder.d_p = to_uint(v); }},
      {"heads", [](TrainConfig& c, const std::string& v) { c.encoder.heads = to_uint(v); }},
      {"layers", [](TrainConfig& c, const std::string& v) { c.encoder.layers = to_uint(v); }},
      {"p_drop", [](TrainConfig& c, const std::string& v) { c.encoder.p_drop = to_double(v); }},
      {"eval_seed", [](TrainConfig& c, const std::string& v) { c.eval_seed = to_uint(v); }},
      {"pos_weight", [](TrainConfig& c, const std::string& v) { c.pos_weight = to_double(v); }},
  };
  return table;
}

}  // namespace

void read_config(std::istream& in, TrainConfig& config, const std::string& source) {
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
}

void read_config_file(const std::filesystem::path& path, TrainConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  read_config(in, config, path.string());
}

void write_hyper(std::ostream& out, const HyperConfig& h) {
  char buf[64];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << key << '=' << buf << '\n';
  };
  put("lr", h.lr);
  out << "z_dim=" << h.z_dim << '\n';
  put("gamma_init", h.gamma_init);
  put("beta_init", h.beta_init);
  put("lambda_kl", h.lambda_kl);
}

void write_hyper_file(const std::filesystem::path& path, const HyperConfig& hyper) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_hyper(out, hyper);
}

}  // namespace ivgae
