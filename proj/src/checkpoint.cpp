#include "cdinet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cdinet/errors.hpp"

namespace cdinet {

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    const Shape s = t.shape();
    dir.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  header["tensors"] = dir;
  const std::string header_bytes = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 8);
  write_u64(os, header_bytes.size());
  os.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, t] : tensors) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing archive " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open archive " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not a tensor archive (bad magic): " + path.string());
  }
  const std::uint64_t header_len = read_u64(is);
  std::string header_bytes(header_len, '\0');
  is.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw IoError("truncated archive header: " + path.string());

  TensorArchive archive;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt archive header in " + path.string() + ": " + e.what());
  }
  archive.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto dims = entry.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) {
      throw IoError("archive tensor " + name + " has non-4D shape");
    }
    Tensor t({dims[0], dims[1], dims[2], dims[3]});
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) {
      throw IoError("truncated archive payload for tensor " + name + " in " +
                    path.string());
    }
    archive.tensors.emplace_back(name, std::move(t));
  }
  return archive;
}

const Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

}  // namespace cdinet
