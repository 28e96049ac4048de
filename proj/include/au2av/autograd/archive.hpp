#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "au2av/autograd/nn.hpp"

namespace au2av::ag {

using Header = std::map<std::string, std::string>;

/// Binary tensor archive with a key=value text header.
///
/// Layout: the magic line `AU2AV-TENSORS 1`, header lines `key=value`, the
/// line `end`, then a u64 tensor count and per tensor: u32 name length,
/// name bytes, u32 rank, i32 dims, f64 values (little endian).
/// Writes go to a temporary sibling and are renamed into place.
void save_archive(const std::filesystem::path& path, const ParamStore& tensors, const Header& header);

struct Archive {
  Header header;
  ParamStore tensors;
};

Archive load_archive(const std::filesystem::path& path);
Header load_archive_header(const std::filesystem::path& path);

}  // namespace au2av::ag
