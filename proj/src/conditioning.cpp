// Copyright 2026 The GridTouch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gridtouch/conditioning.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridtouch/error.hpp"

namespace gridtouch {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ConditionVector> build_conditions(std::span<const ScoreVector> gt_scores) {
  std::vector<ConditionVector> out(gt_scores.size(), ConditionVector::Zero());
  if (gt_scores.empty()) return out;
  for (Attribute a : kAttributes) {
    std::size_t hi = 0, lo = 0;
    for (std::size_t g = 1; g < gt_scores.size(); ++g) {
      if (gt_scores[g][a] > gt_scores[hi][a]) hi = g;
      if (gt_scores[g][a] < gt_scores[lo][a]) lo = g;
    }
    if (hi == lo) continue;
    out[hi][static_cast<int>(a)] = 1.0;
    out[lo][static_cast<int>(a)] = -1.0;
  }
  return out;
}

std::vector<ExpertCondition> build_conditions(const RetouchGroup& group, const ScoreOptions& opts) {
  std::vector<ScoreVector> scores;
  scores.reserve(group.gts.size());
  for (const ExpertGt& gt : group.gts) scores.push_back(score_vector(load_image(gt.path), opts));
  const auto cs = build_conditions(scores);
  std::vector<ExpertCondition> out;
  for (std::size_t g = 0; g < cs.size(); ++g) out.push_back({group.gts[g].expert, cs[g]});
  return out;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path resolve_existing(const fs::path& base, const std::string& p) {
  fs::path path = resolve(base, p);
  if (!fs::exists(path)) throw IoError("manifest references missing file '" + path.string() + "'");
  return path;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  const fs::path rel = fs::proximate(p, base);
  return (rel.empty() ? p : rel).generic_string();
}

json condition_json(const ConditionVector& c) { return json::array({c[0], c[1], c[2], c[3]}); }

}  // namespace

std::vector<RetouchGroup> load_manifest(const fs::path& path) {
  const json doc = read_json(path);
  const fs::path base = path.parent_path();
  std::vector<RetouchGroup> groups;
  try {
    for (const json& g : doc.at("groups")) {
      RetouchGroup group{resolve_existing(base, g.at("input").get<std::string>()), {}};
      std::set<std::string> seen;
      for (const json& gt : g.at("gts")) {
        std::string expert = gt.at("expert").get<std::string>();
        if (!seen.insert(expert).second) {
          throw FormatError("duplicate expert id '" + expert + "' in group of '" +
                            group.input.string() + "'");
        }
        group.gts.push_back({std::move(expert), resolve_existing(base, gt.at("path").get<std::string>())});
      }
      if (group.gts.empty()) {
        throw FormatError("group of '" + group.input.string() + "' has no ground truths");
      }
      groups.push_back(std::move(group));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest '" + path.string() + "': " + e.what());
  }
  return groups;
}

void write_manifest(std::span<const RetouchGroup> groups, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  json doc;
  doc["groups"] = json::array();
  for (const RetouchGroup& g : groups) {
    json gts = json::array();
    for (const ExpertGt& gt : g.gts) {
      gts.push_back({{"expert", gt.expert}, {"path", relative_to(fs::absolute(gt.path), base)}});
    }
    doc["groups"].push_back({{"input", relative_to(fs::absolute(g.input), base)}, {"gts", gts}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

std::vector<ConditionPair> make_pairs(std::span<const RetouchGroup> groups, const ScoreOptions& opts) {
  std::vector<ConditionPair> pairs;
  for (const RetouchGroup& g : groups) {
    const auto labels = build_conditions(g, opts);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pairs.push_back({g.input, g.gts[i].path, labels[i].expert, labels[i].c});
    }
  }
  return pairs;
}

void emit_pairs(std::span<const RetouchGroup> groups, const fs::path& out_path,
                const ScoreOptions& opts) {
  const auto pairs = make_pairs(groups, opts);
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write '" + out_path.string() + "'");
  for (const ConditionPair& p : pairs) {
    json rec;
    rec["input"] = p.input.generic_string();
    rec["gt"] = p.gt.generic_string();
    rec["expert"] = p.expert;
    rec["c"] = condition_json(p.c);
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("short write to '" + out_path.string() + "'");
}

std::vector<ConditionPair> load_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const fs::path base = path.parent_path();
  std::vector<ConditionPair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const auto c = rec.at("c").get<std::vector<double>>();
      if (c.size() != 4) throw FormatError("condition must have 4 entries");
      pairs.push_back({resolve(base, rec.at("input").get<std::string>()),
                       resolve(base, rec.at("gt").get<std::string>()),
                       rec.at("expert").get<std::string>(), ConditionVector(c[0], c[1], c[2], c[3])});
    } catch (const json::exception& e) {
      throw FormatError("malformed pairs record at " + path.string() + ":" + std::to_string(lineno) +
                        ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace gridtouch
