#include "dualcap/manifest.hpp"

#include "dualcap/errors.hpp"
#include "dualcap/tokenizer.hpp"

#include "json.hpp"

#include <fstream>
#include <iostream>

namespace dualcap {

std::string_view to_string(Domain d) { return d == Domain::kGeneral ? "general" : "medical"; }
std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::map<std::string, std::size_t> Manifest::counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& s : samples) ++out[std::string(to_string(s.domain)) + "/" + std::string(to_string(s.split))];
  return out;
}

std::filesystem::path Manifest::image_path(std::size_t index) const {
  const std::filesystem::path ref = samples.at(index).image_ref;
  return ref.is_absolute() ? ref : base_dir / ref;
}

std::vector<std::size_t> Manifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

Manifest load_manifest(const std::filesystem::path& path, ImageCheck check) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.source_name = path.stem().string();
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = " at line " + std::to_string(line_no) + " of " + path.string();
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError("malformed record" + where);
    }
    CaptionSample s;
    try {
      s.image_ref = rec.at("image").get<std::string>();
      s.caption = rec.at("caption").get<std::string>();
      const auto domain = rec.at("domain").get<std::string>();
      const auto split = rec.at("split").get<std::string>();
      if (domain == "general") {
        s.domain = Domain::kGeneral;
      } else if (domain == "medical") {
        s.domain = Domain::kMedical;
      } else {
        throw DataError("unknown domain '" + domain + "'" + where);
      }
      if (split == "train") {
        s.split = Split::kTrain;
      } else if (split == "test") {
        s.split = Split::kTest;
      } else {
        throw DataError("unknown split '" + split + "'" + where);
      }
    } catch (const nlohmann::json::exception&) {
      throw DataError("malformed record" + where);
    }
    if (split_words(s.caption).empty()) throw DataError("empty caption" + where);
    m.samples.push_back(std::move(s));
    if (check == ImageCheck::kRequireFiles && !std::filesystem::is_regular_file(m.image_path(m.samples.size() - 1)))
      throw DataError("unresolvable image '" + m.samples.back().image_ref + "'" + where);
  }
  if (m.samples.empty()) std::cerr << "warning: manifest " << path.string() << " has no samples\n";
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& s : manifest.samples) {
    nlohmann::ordered_json rec;
    rec["image"] = s.image_ref;
    rec["caption"] = s.caption;
    rec["domain"] = to_string(s.domain);
    rec["split"] = to_string(s.split);
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError("failed writing manifest " + path.string());
}

}  // namespace dualcap
