#pragma once

// Dataset manifests: UTF-8 TSV rows of
//   image_path <TAB> transcription [<TAB> writer_id]
// with relative image paths resolved against the manifest's directory.

#include <filesystem>
#include <string>
#include <vector>

#include "attnhtr/image.hpp"

namespace attnhtr {

struct WordSample {
  std::string id;  // the image path as written in the manifest
  std::filesystem::path image_path;
  std::string transcription;
  std::string writer_id;

  GrayImage load() const { return load_image(image_path); }
};

// Rows in file order, duplicates kept. Blank lines are skipped. Throws
// IoError, MalformedRow or MissingImage (both carry the 1-based line).
std::vector<WordSample> load_manifest(const std::filesystem::path& path);

// Writes rows with paths relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<WordSample>& samples);

}  // namespace attnhtr
