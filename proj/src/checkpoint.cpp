#include "ktrace/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace ktrace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'K', 'T', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

std::int64_t read_i64(std::istream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

std::string read_str(std::istream& in) {
  const auto n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("truncated checkpoint");
  return s;
}

std::string meta_get(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw std::runtime_error("checkpoint misses meta key '" + key + "'");
  return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);

  const ModelSpec spec = model.spec();
  std::map<std::string, std::string> meta;
  meta["kind"] = to_string(spec.kind);
  meta["exercise_count"] = std::to_string(spec.exercise_count);
  meta["window_len"] = std::to_string(spec.window_len);
  meta["d"] = std::to_string(spec.d);
  meta["memory_slots"] = std::to_string(spec.memory_slots);
  meta["vanilla_rnn"] = spec.vanilla_rnn ? "1" : "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", spec.dropout);
  meta["dropout"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", spec.lambda);
  meta["lambda"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", spec.init_memory_hours);
  meta["init_memory_hours"] = buf;
  meta["seed"] = std::to_string(spec.seed);

  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    write_str(out, k);
    write_str(out, v);
  }

  const auto& params = model.params();
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_str(out, p.name);
    const auto& shape = p.tensor.shape();
    write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int dim : shape) write_i64(out, dim);
    const auto& vals = p.tensor.values();
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(double)));
  }

  const auto students = model.student_table();
  write_u32(out, static_cast<std::uint32_t>(students.size()));
  for (const auto& s : students) write_str(out, s);
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

namespace {

std::map<std::string, std::string> read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path + " is not a checkpoint (bad magic)");
  std::map<std::string, std::string> meta;
  const auto n_meta = read_u32(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_str(in);
    meta[k] = read_str(in);
  }
  return meta;
}

}  // namespace

ModelKind checkpoint_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return model_kind_from(meta_get(read_header(in, path), "kind"));
}

std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       const RelationMatrix* relations) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  const auto meta = read_header(in, path);

  struct Block {
    Shape shape;
    std::vector<double> values;
  };
  std::map<std::string, Block> blocks;
  const auto n_tensors = read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_str(in);
    Block b;
    const auto ndim = read_u32(in);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      b.shape.push_back(static_cast<int>(read_i64(in)));
      count *= static_cast<std::size_t>(b.shape.back());
    }
    b.values.resize(count);
    in.read(reinterpret_cast<char*>(b.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint");
    blocks.emplace(std::move(name), std::move(b));
  }

  std::vector<std::string> students;
  const auto n_students = read_u32(in);
  for (std::uint32_t i = 0; i < n_students; ++i) students.push_back(read_str(in));

  ModelSpec spec;
  spec.kind = model_kind_from(meta_get(meta, "kind"));
  spec.exercise_count = std::stoi(meta_get(meta, "exercise_count"));
  spec.window_len = std::stoi(meta_get(meta, "window_len"));
  spec.d = std::stoi(meta_get(meta, "d"));
  spec.memory_slots = std::stoi(meta_get(meta, "memory_slots"));
  spec.vanilla_rnn = meta_get(meta, "vanilla_rnn") == "1";
  spec.dropout = std::stod(meta_get(meta, "dropout"));
  spec.lambda = std::stod(meta_get(meta, "lambda"));
  spec.init_memory_hours = std::stod(meta_get(meta, "init_memory_hours"));
  spec.seed = std::stoull(meta_get(meta, "seed"));

  if (spec.kind == ModelKind::rkt && !relations)
    throw std::runtime_error("this checkpoint needs a relation matrix to load");
  auto model = make_model(spec, relations, std::move(students));

  for (auto& p : model->params()) {
    auto it = blocks.find(p.name);
    if (it == blocks.end())
      throw std::runtime_error("checkpoint misses parameter '" + p.name + "'");
    if (it->second.shape != p.tensor.shape())
      throw std::runtime_error("checkpoint parameter '" + p.name + "' has shape " +
                               shape_str(it->second.shape) + ", model expects " +
                               shape_str(p.tensor.shape()));
    auto dst = p.tensor.values_mut();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
    blocks.erase(it);
  }
  if (!blocks.empty())
    throw std::runtime_error("checkpoint carries unknown parameter '" + blocks.begin()->first +
                             "'");
  return model;
}

}  // namespace ktrace
