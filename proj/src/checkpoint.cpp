#include "istd/checkpoint.hpp"

#include <cstdio>
#include <cstring>

namespace istd {

namespace {

struct File {
  FILE* f = nullptr;
  explicit File(FILE* f_) : f(f_) {}
  ~File() {
    if (f) std::fclose(f);
  }
};

void put_u16(FILE* f, uint16_t x) {
  unsigned char b[2] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff)};
  std::fwrite(b, 1, 2, f);
}

void put_u32(FILE* f, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff),
                        static_cast<unsigned char>((x >> 16) & 0xff),
                        static_cast<unsigned char>((x >> 24) & 0xff)};
  std::fwrite(b, 1, 4, f);
}

uint16_t get_u16(FILE* f, const std::string& path) {
  unsigned char b[2];
  if (std::fread(b, 1, 2, f) != 2)
    throw IoError("checkpoint: truncated file: " + path);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4)
    throw IoError("checkpoint: truncated file: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void put_tensor(FILE* f, const std::string& name, const Tensor4f& t) {
  put_u16(f, static_cast<uint16_t>(name.size()));
  std::fwrite(name.data(), 1, name.size(), f);
  std::fputc(4, f);
  put_u32(f, static_cast<uint32_t>(t.n));
  put_u32(f, static_cast<uint32_t>(t.c));
  put_u32(f, static_cast<uint32_t>(t.h));
  put_u32(f, static_cast<uint32_t>(t.w));
  if (!t.v.empty()) std::fwrite(t.v.data(), 4, t.v.size(), f);
}

}  // namespace

const NamedTensor* CheckpointData::find(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return &nt;
  return nullptr;
}

void save_checkpoint(const std::string& path, const ParamStore<float>& ps,
                     const AdamW<float>* opt, const std::string& config_blob) {
  File file(std::fopen(path.c_str(), "wb"));
  if (!file.f) throw IoError("checkpoint: cannot open for write: " + path);
  FILE* f = file.f;
  std::fwrite("HNT1", 1, 4, f);
  put_u32(f, kCheckpointVersion);
  put_u32(f, static_cast<uint32_t>(config_blob.size()));
  std::fwrite(config_blob.data(), 1, config_blob.size(), f);

  uint32_t count = static_cast<uint32_t>(ps.params.size() + ps.buffers.size());
  if (opt) count += static_cast<uint32_t>(2 * ps.params.size() + 1);
  put_u32(f, count);
  for (const auto& s : ps.params) put_tensor(f, s.name, *s.value);
  for (const auto& s : ps.buffers) put_tensor(f, s.name, *s.value);
  if (opt) {
    AdamW<float>* o = const_cast<AdamW<float>*>(opt);
    for (size_t i = 0; i < ps.params.size(); ++i) {
      put_tensor(f, "opt/m/" + ps.params[i].name, o->moment1()[i]);
      put_tensor(f, "opt/v/" + ps.params[i].name, o->moment2()[i]);
    }
    Tensor4f t(1, 1, 1, 1);
    t.v[0] = static_cast<float>(opt->step_count());
    put_tensor(f, "opt/t", t);
  }
  if (std::ferror(f)) throw IoError("checkpoint: write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file.f) throw IoError("checkpoint: cannot open: " + path);
  FILE* f = file.f;
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "HNT1", 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  CheckpointData data;
  data.version = get_u32(f, path);
  if (data.version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " +
                  std::to_string(data.version) + " in " + path +
                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  uint32_t blob_len = get_u32(f, path);
  data.config_blob.resize(blob_len);
  if (blob_len &&
      std::fread(data.config_blob.data(), 1, blob_len, f) != blob_len)
    throw IoError("checkpoint: truncated file: " + path);
  uint32_t count = get_u32(f, path);
  data.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = get_u16(f, path);
    std::string name(name_len, '\0');
    if (name_len && std::fread(name.data(), 1, name_len, f) != name_len)
      throw IoError("checkpoint: truncated file: " + path);
    int rank = std::fgetc(f);
    if (rank != 4)
      throw IoError("checkpoint: unsupported tensor rank in " + path);
    uint32_t n = get_u32(f, path), c = get_u32(f, path), h = get_u32(f, path),
             w = get_u32(f, path);
    Tensor4f t(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h),
               static_cast<int>(w));
    if (!t.v.empty() && std::fread(t.v.data(), 4, t.v.size(), f) != t.v.size())
      throw IoError("checkpoint: truncated file: " + path);
    data.tensors.push_back({std::move(name), std::move(t)});
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, ParamStore<float>& ps,
                      AdamW<float>* opt) {
  auto copy_into = [&](const std::string& name, Tensor4f& dst) {
    const NamedTensor* src = data.find(name);
    if (!src) throw IoError("checkpoint: missing tensor '" + name + "'");
    if (!src->t.same_dims(dst))
      throw IoError("checkpoint: tensor '" + name + "' has dims " +
                    src->t.dims_str() + ", model expects " + dst.dims_str());
    dst.v = src->t.v;
  };
  for (auto& s : ps.params) copy_into(s.name, *s.value);
  for (auto& s : ps.buffers) copy_into(s.name, *s.value);
  if (opt) {
    for (size_t i = 0; i < ps.params.size(); ++i) {
      copy_into("opt/m/" + ps.params[i].name, opt->moment1()[i]);
      copy_into("opt/v/" + ps.params[i].name, opt->moment2()[i]);
    }
    const NamedTensor* t = data.find("opt/t");
    if (!t) throw IoError("checkpoint: missing tensor 'opt/t'");
    opt->set_step_count(static_cast<int64_t>(t->t.v[0]));
  }
}

std::map<std::string, std::string> parse_kv(const std::string& blob) {
  std::map<std::string, std::string> kv;
  size_t pos = 0;
  while (pos < blob.size()) {
    size_t eol = blob.find('\n', pos);
    if (eol == std::string::npos) eol = blob.size();
    std::string line = blob.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace istd
