#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dualcap {

enum class Domain { kGeneral, kMedical };
enum class Split { kTrain, kTest };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);

struct CaptionSample {
  std::string image_ref;  // relative to the manifest directory unless absolute
  std::string caption;
  Domain domain = Domain::kGeneral;
  Split split = Split::kTrain;
};

struct Manifest {
  std::string source_name;
  std::filesystem::path base_dir;
  std::vector<CaptionSample> samples;

  /// Keys of the form "general/train".
  std::map<std::string, std::size_t> counts() const;
  std::filesystem::path image_path(std::size_t index) const;
  std::vector<std::size_t> indices(Split split) const;
};

enum class ImageCheck { kRequireFiles, kSkip };

/// JSON-lines with string keys image, caption, domain, split. The source name is the file stem.
Manifest load_manifest(const std::filesystem::path& path, ImageCheck check = ImageCheck::kRequireFiles);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace dualcap
