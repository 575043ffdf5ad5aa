#include "metadse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "metadse/errors.hpp"
#include "metadse/text.hpp"

namespace metadse {

namespace {

constexpr const char* kMagic = "MDSE";
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos, const std::string& origin) {
  if (pos + 8 > in.size()) throw SchemaError(origin + ": checkpoint is truncated");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += 8;
  return v;
}

void put_block(std::string& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  for (double x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

std::vector<double> get_block(const std::string& in, std::size_t& pos, const std::string& origin) {
  const std::uint64_t n = get_u64(in, pos, origin);
  if (n > (in.size() - pos) / 8) throw SchemaError(origin + ": block length exceeds file size");
  std::vector<double> v(n);
  for (auto& x : v) x = std::bit_cast<double>(get_u64(in, pos, origin));
  return v;
}

std::size_t get_size(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& origin) {
  auto it = kv.find(key);
  unsigned long long v = 0;
  if (it == kv.end() || !parse_u64(it->second, v)) throw SchemaError(origin + ": missing or bad '" + key + "'");
  return static_cast<std::size_t>(v);
}

double get_real(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& origin) {
  auto it = kv.find(key);
  double v = 0;
  if (it == kv.end() || !parse_double(it->second, v)) throw SchemaError(origin + ": missing or bad '" + key + "'");
  return v;
}

}  // namespace

void Checkpoint::validate() const {
  config.validate();
  const Surrogate m = model();
  if (theta.size() != m.layout().total())
    throw ShapeError("checkpoint holds " + std::to_string(theta.size()) + " parameters, architecture needs " +
                     std::to_string(m.layout().total()));
  if (scaler.outputs != config.outputs) throw ShapeError("checkpoint scaler and model disagree on outputs");
  if (mask) {
    if (mask->dims() != params) throw ShapeError("checkpoint mask is not " + std::to_string(params) + "x" +
                                                 std::to_string(params));
    mask->validate();
  }
}

std::string serialize_checkpoint(const Checkpoint& c) {
  c.validate();
  std::ostringstream os;
  os << kMagic << '\n';
  os << "format_version = " << kFormatVersion << '\n';
  os << "model.embed_dim = " << c.config.embed_dim << '\n';
  os << "model.heads = " << c.config.heads << '\n';
  os << "model.layers = " << c.config.layers << '\n';
  os << "model.mlp_hidden = " << c.config.mlp_hidden << '\n';
  os << "model.outputs = " << to_string(c.config.outputs) << '\n';
  os << "model.params = " << c.params << '\n';
  for (std::size_t k = 0; k < 2; ++k) {
    os << "scaler.mean." << k << " = " << format_double(c.scaler.mean[k]) << '\n';
    os << "scaler.scale." << k << " = " << format_double(c.scaler.scale[k]) << '\n';
  }
  os << "mask = " << (c.mask ? 1 : 0) << '\n';
  if (c.mask) os << "mask.learnable = " << (c.mask->learnable ? 1 : 0) << '\n';
  for (const auto& [k, v] : c.metadata) {
    if (v.find('\n') != std::string::npos) throw ContractError("checkpoint metadata '" + k + "' contains a newline");
    os << "meta." << k << " = " << v << '\n';
  }
  os << "end\n";
  std::string out = os.str();
  put_block(out, c.theta.values);
  if (c.mask) put_block(out, c.mask->m.data());
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  const std::size_t end = bytes.find("\nend\n");
  if (bytes.rfind(std::string(kMagic) + "\n", 0) != 0 || end == std::string::npos)
    throw SchemaError(origin + ": not a checkpoint file");
  const std::string header = bytes.substr(std::strlen(kMagic) + 1, end - std::strlen(kMagic));
  const auto kv = parse_key_values(header, origin);
  if (get_size(kv, "format_version", origin) != kFormatVersion)
    throw SchemaError(origin + ": unsupported checkpoint format version");

  Checkpoint c;
  c.config.embed_dim = get_size(kv, "model.embed_dim", origin);
  c.config.heads = get_size(kv, "model.heads", origin);
  c.config.layers = get_size(kv, "model.layers", origin);
  c.config.mlp_hidden = get_size(kv, "model.mlp_hidden", origin);
  auto out = kv.find("model.outputs");
  if (out == kv.end()) throw SchemaError(origin + ": missing 'model.outputs'");
  try {
    c.config.outputs = parse_output_kind(out->second);
  } catch (const Error& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  c.params = get_size(kv, "model.params", origin);
  c.scaler.outputs = c.config.outputs;
  for (std::size_t k = 0; k < 2; ++k) {
    c.scaler.mean[k] = get_real(kv, "scaler.mean." + std::to_string(k), origin);
    c.scaler.scale[k] = get_real(kv, "scaler.scale." + std::to_string(k), origin);
  }
  const bool has_mask = get_size(kv, "mask", origin) != 0;
  for (const auto& [k, v] : kv)
    if (k.rfind("meta.", 0) == 0) c.metadata[k.substr(5)] = v;

  std::size_t pos = end + 5;
  c.theta.values = get_block(bytes, pos, origin);
  if (has_mask) {
    auto m = get_block(bytes, pos, origin);
    if (m.size() != c.params * c.params) throw SchemaError(origin + ": mask block has the wrong size");
    ArchMask mask{Matrix(c.params, c.params), get_size(kv, "mask.learnable", origin) != 0};
    mask.m.data() = std::move(m);
    c.mask = std::move(mask);
  }
  if (pos != bytes.size()) throw SchemaError(origin + ": trailing bytes after checkpoint data");
  try {
    c.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path), path); }

}  // namespace metadse
