#include "au2av/autograd/archive.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "au2av/error.hpp"

namespace au2av::ag {
namespace {

constexpr const char* kMagic = "AU2AV-TENSORS 1";

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated archive " + path.string());
  return v;
}

Header read_header(std::istream& is, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) throw IoError("not a tensor archive: " + path.string());
  Header header;
  while (std::getline(is, line)) {
    if (line == "end") return header;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed header line '" + line + "' in " + path.string());
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  throw IoError("unterminated header in " + path.string());
}

}  // namespace

void save_archive(const std::filesystem::path& path, const ParamStore& tensors, const Header& header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    os << kMagic << '\n';
    for (const auto& [k, v] : header) {
      if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
        throw ValidationError("header entries must be single-line key=value: " + k);
      os << k << '=' << v << '\n';
    }
    os << "end\n";
    put<std::uint64_t>(os, tensors.size());
    for (const auto& name : tensors.names()) {
      const Tensor& t = tensors.get(name).value();
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) put<std::int32_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  Archive archive;
  archive.header = read_header(is, path);
  const auto count = take<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated archive " + path.string());
    const auto rank = take<std::uint32_t>(is, path);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(take<std::int32_t>(is, path));
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double))))
      throw IoError("truncated archive " + path.string());
    archive.tensors.add(name, std::move(t));
  }
  return archive;
}

Header load_archive_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_header(is, path);
}

}  // namespace au2av::ag
