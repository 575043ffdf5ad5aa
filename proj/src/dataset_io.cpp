#include "metadse/dataset_io.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "metadse/errors.hpp"
#include "metadse/text.hpp"

namespace metadse {

namespace {

std::string expected_header(const DesignSpace& space) {
  std::string h = "workload";
  for (const auto& p : space.params()) h += "," + p.name;
  return h + ",ipc,power";
}

}  // namespace

WorkloadSource parse_dataset(const std::string& text, const DesignSpace& space, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::size_t row = 0;
  // Leading '#' lines carry provenance and are skipped.
  do {
    if (!std::getline(is, line)) throw ParseError(origin + ": empty file, expected a header line");
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  } while (!line.empty() && line[0] == '#');
  const auto header = split(line, ',');
  const auto want = split(expected_header(space), ',');
  if (header != want) {
    for (std::size_t c = 0; c < std::max(header.size(), want.size()); ++c)
      if (c >= header.size() || c >= want.size() || header[c] != want[c])
        throw SchemaError(origin + ": header column " + std::to_string(c + 1) + " should be '" +
                          (c < want.size() ? want[c] : std::string("<none>")) + "'");
  }

  std::string id = std::filesystem::path(origin).stem().string();
  bool have_id = false;
  std::vector<Sample> rows;
  std::set<DesignPoint> seen;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != want.size())
      throw ParseError(origin + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " columns, expected " + std::to_string(want.size()));
    if (!have_id) {
      id = cells[0];
      have_id = true;
    } else if (cells[0] != id) {
      throw SchemaError(origin + ": row " + std::to_string(row) + " names workload '" + cells[0] + "', expected '" +
                        id + "'");
    }
    Sample s;
    s.point.indices.resize(space.dims());
    for (std::size_t i = 0; i < space.dims(); ++i) {
      const auto& spec = space.param(i);
      const std::string& cell = cells[i + 1];
      if (spec.kind != ParamKind::Categorical) {
        double v = 0;
        if (!parse_double(cell, v))
          throw ParseError(origin + ": row " + std::to_string(row) + ", column '" + spec.name + "': malformed number '" +
                           cell + "'");
      }
      const long idx = spec.index_of_label(cell);
      if (idx < 0)
        throw SchemaError(origin + ": row " + std::to_string(row) + ", column '" + spec.name + "': value '" + cell +
                          "' is not a candidate");
      s.point.indices[i] = static_cast<std::uint32_t>(idx);
    }
    const std::size_t li = space.dims() + 1;
    if (!parse_double(cells[li], s.labels.ipc) || !parse_double(cells[li + 1], s.labels.power))
      throw ParseError(origin + ": row " + std::to_string(row) + ": malformed label");
    if (!(s.labels.ipc > 0 && s.labels.power > 0))
      throw SchemaError(origin + ": row " + std::to_string(row) + ": labels must be positive");
    if (!seen.insert(s.point).second)
      throw DuplicateError(origin + ": row " + std::to_string(row) + " repeats an earlier design point");
    s.features = space.encode(s.point);
    rows.push_back(std::move(s));
  }
  return WorkloadSource::dataset(id, space, std::move(rows));
}

WorkloadSource load_dataset(const std::string& path, const DesignSpace& space) {
  return parse_dataset(read_file(path), space, path);
}

std::string format_dataset(const WorkloadSource& source, const std::map<std::string, std::string>& metadata) {
  const auto& space = source.space();
  std::vector<const Sample*> rows;
  for (const auto& r : source.rows()) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const Sample* a, const Sample* b) { return a->point < b->point; });
  std::ostringstream os;
  for (const auto& [k, v] : metadata) os << "# " << k << " = " << v << '\n';
  os << expected_header(space) << '\n';
  for (const Sample* r : rows) {
    os << source.id();
    for (std::size_t i = 0; i < space.dims(); ++i) os << ',' << space.param(i).format_candidate(r->point.indices[i]);
    os << ',' << format_double(r->labels.ipc) << ',' << format_double(r->labels.power) << '\n';
  }
  return os.str();
}

void save_dataset(const WorkloadSource& source, const std::string& path,
                  const std::map<std::string, std::string>& metadata) {
  write_file(path, format_dataset(source, metadata));
}

WorkloadSource materialize(const WorkloadSource& synthetic, std::size_t n, std::uint64_t seed) {
  return WorkloadSource::dataset(synthetic.id(), synthetic.space(), synthetic.draw(n, seed));
}

std::string format_manifest(const FamilyManifest& m) {
  std::ostringstream os;
  os << "# synthetic workload family\n";
  for (const auto& [k, v] : m.metadata) os << "meta." << k << " = " << v << '\n';
  os << "family.seed = " << m.seed << '\n';
  os << "family.dissimilarity = " << format_double(m.dissimilarity) << '\n';
  os << "family.noise = " << format_double(m.noise) << '\n';
  os << "family.samples_per_workload = " << m.samples_per_workload << '\n';
  os << "family.workloads = " << m.surfaces.size() << '\n';
  for (std::size_t w = 0; w < m.surfaces.size(); ++w) {
    const auto& s = m.surfaces[w];
    const std::string p = "workload." + std::to_string(w) + ".";
    os << p << "id = " << s.id << '\n';
    os << p << "noise = " << format_double(s.noise) << '\n';
    os << p << "noise_seed = " << s.noise_seed << '\n';
    os << p << "interactions = ";
    for (std::size_t k = 0; k < s.interactions.size(); ++k)
      os << (k ? " " : "") << s.interactions[k].a << '-' << s.interactions[k].b;
    os << '\n' << p << "coeffs = ";
    for (std::size_t k = 0; k < s.coeffs.size(); ++k) os << (k ? " " : "") << format_double(s.coeffs[k]);
    os << '\n';
  }
  return os.str();
}

FamilyManifest parse_manifest(const std::string& text, const std::string& origin) {
  const auto kv = parse_key_values(text, origin);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw SchemaError(origin + ": missing key '" + key + "'");
    return it->second;
  };
  auto get_u64 = [&](const std::string& key) {
    unsigned long long v = 0;
    if (!parse_u64(get(key), v)) throw ParseError(origin + ": key '" + key + "' is not an unsigned integer");
    return static_cast<std::uint64_t>(v);
  };
  auto get_double = [&](const std::string& key) {
    double v = 0;
    if (!parse_double(get(key), v)) throw ParseError(origin + ": key '" + key + "' is not a number");
    return v;
  };
  FamilyManifest m;
  for (const auto& [k, v] : kv)
    if (k.rfind("meta.", 0) == 0) m.metadata[k.substr(5)] = v;
  m.seed = get_u64("family.seed");
  m.dissimilarity = get_double("family.dissimilarity");
  m.noise = get_double("family.noise");
  m.samples_per_workload = get_u64("family.samples_per_workload");
  const std::size_t n = get_u64("family.workloads");
  for (std::size_t w = 0; w < n; ++w) {
    const std::string p = "workload." + std::to_string(w) + ".";
    WorkloadSurface s;
    s.id = get(p + "id");
    s.noise = get_double(p + "noise");
    s.noise_seed = get_u64(p + "noise_seed");
    std::istringstream ints(get(p + "interactions"));
    std::string tok;
    while (ints >> tok) {
      const auto parts = split(tok, '-');
      unsigned long long a = 0, b = 0;
      if (parts.size() != 2 || !parse_u64(parts[0], a) || !parse_u64(parts[1], b))
        throw ParseError(origin + ": bad interaction '" + tok + "'");
      s.interactions.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
    }
    std::istringstream cs(get(p + "coeffs"));
    while (cs >> tok) {
      double v = 0;
      if (!parse_double(tok, v)) throw ParseError(origin + ": bad coefficient '" + tok + "'");
      s.coeffs.push_back(v);
    }
    if (s.coeffs.size() != WorkloadSurface::kCoreCoeffs + s.interactions.size())
      throw SchemaError(origin + ": workload '" + s.id + "' has " + std::to_string(s.coeffs.size()) + " coefficients");
    m.surfaces.push_back(std::move(s));
  }
  return m;
}

FamilyManifest load_manifest(const std::string& path) { return parse_manifest(read_file(path), path); }

void save_manifest(const FamilyManifest& m, const std::string& path) { write_file(path, format_manifest(m)); }

}  // namespace metadse
