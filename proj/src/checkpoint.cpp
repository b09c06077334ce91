#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "gmic/common.hpp"
#include "gmic/param_store.hpp"

namespace gmic {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace {

constexpr char kMagic[4] = {'G', 'M', 'I', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_name(std::ostream& os, const std::string& name) {
  write_u32(os, std::uint32_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
}

std::string read_name(std::istream& is) {
  std::uint32_t len = read_u32(is);
  if (len > 4096) throw DataError("checkpoint: implausible name length");
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

void write_floats(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
}

void read_floats(std::istream& is, std::vector<float>& v) {
  is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4));
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path, bool include_adam) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, std::uint32_t(store.entries().size()));
  for (const auto& [name, e] : store.entries()) {
    write_name(os, name);
    write_u32(os, std::uint32_t(e.value.rank()));
    for (i64 d : e.value.shape) write_u32(os, std::uint32_t(d));
    write_floats(os, e.value.v);
  }
  std::uint8_t flag = include_adam ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&flag), 1);
  if (include_adam) {
    std::uint32_t count = 0;
    for (const auto& [name, e] : store.entries())
      if (e.trainable) ++count;
    write_u32(os, count);
    for (const auto& [name, e] : store.entries()) {
      if (!e.trainable) continue;
      write_name(os, name);
      write_u64(os, std::uint64_t(e.step));
      std::vector<float> zeros;
      const std::vector<float>* m = &e.m.v;
      const std::vector<float>* v = &e.v.v;
      if (m->empty()) {
        zeros.assign(e.value.v.size(), 0.0f);
        m = &zeros;
        v = &zeros;
      }
      write_floats(os, *m);
      write_floats(os, *v);
    }
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a GMIC checkpoint: " + path);
  std::uint32_t version = read_u32(is);
  if (version != kVersion) throw DataError("unsupported checkpoint version");
  std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_name(is);
    if (!store.has(name)) throw DataError("checkpoint tensor '" + name + "' unknown to model");
    auto& e = store.entry(name);
    std::uint32_t rank = read_u32(is);
    std::vector<i64> dims(rank);
    for (auto& d : dims) d = i64(read_u32(is));
    if (dims != e.value.shape)
      throw DataError("checkpoint tensor '" + name + "' shape mismatch");
    read_floats(is, e.value.v);
    if (!is) throw DataError("checkpoint truncated at tensor '" + name + "'");
  }
  std::uint8_t flag = 0;
  is.read(reinterpret_cast<char*>(&flag), 1);
  if (is && flag == 1) {
    std::uint32_t acount = read_u32(is);
    for (std::uint32_t i = 0; i < acount; ++i) {
      std::string name = read_name(is);
      auto& e = store.entry(name);
      e.step = i64(read_u64(is));
      e.m = Tensor::zeros(e.value.shape);
      e.v = Tensor::zeros(e.value.shape);
      read_floats(is, e.m.v);
      read_floats(is, e.v.v);
      if (!is) throw DataError("checkpoint truncated in Adam state for '" + name + "'");
    }
  }
}

}  // namespace gmic
