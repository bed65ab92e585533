#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ucm/error.hpp"
#include "ucm/pipeline/session.hpp"

namespace ucm::service {

namespace fs = std::filesystem;

inline bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

struct SessionSummary {
  std::string id;
  std::string title;
  pipeline::Stage stage = pipeline::Stage::created;
};

inline void to_json(nlohmann::json& j, const SessionSummary& s) {
  j = {{"id", s.id}, {"title", s.title}, {"stage", s.stage}};
}

/// One JSON file per session under `dir`. Writes go to a temporary file that
/// is renamed over the target, so readers never see a half-written record.
class SessionStore {
 public:
  explicit SessionStore(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error("E-IO", "cannot create data directory: " + ec.message(), {{"path", dir_.string()}});
    auto probe = dir_ / ".write-probe";
    {
      std::ofstream out(probe);
      if (!out) throw Error("E-IO", "data directory is not writable", {{"path", dir_.string()}});
    }
    fs::remove(probe, ec);
  }

  const fs::path& dir() const { return dir_; }

  fs::path path_for(const std::string& id) const { return dir_ / (id + ".json"); }

  bool exists(const std::string& id) const { return valid_session_id(id) && fs::exists(path_for(id)); }

  void save(const pipeline::Session& s) const {
    if (!valid_session_id(s.id)) throw Error("E-BAD-ID", "session id '" + s.id + "' cannot be stored");
    auto target = path_for(s.id);
    auto tmp = target;
    tmp += ".tmp-" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("E-IO", "cannot open session file for writing", {{"path", tmp.string()}});
      out << nlohmann::json(s).dump(2) << '\n';
      out.flush();
      if (!out) throw Error("E-IO", "failed writing session file", {{"path", tmp.string()}});
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw Error("E-IO", "cannot replace session file", {{"path", target.string()}});
    }
  }

  /// Unparseable files are moved to `.quarantine/` and reported as
  /// E-CORRUPT; they are never deleted.
  pipeline::Session load(const std::string& id) const {
    if (!exists(id)) throw Error("E-NOT-FOUND", "no session with id '" + id + "'", {{"id", id}});
    auto path = path_for(id);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("E-IO", "cannot read session file", {{"path", path.string()}});
    std::stringstream buf;
    buf << in.rdbuf();
    in.close();
    try {
      return nlohmann::json::parse(buf.str()).get<pipeline::Session>();
    } catch (const std::exception& e) {
      auto moved = quarantine(path);
      throw Error("E-CORRUPT", std::string("session file could not be read: ") + e.what(),
                  {{"path", path.string()}, {"quarantined_to", moved.string()}});
    }
  }

  std::vector<SessionSummary> list() const {
    std::vector<SessionSummary> out;
    for (const auto& entry : fs::directory_iterator(dir_)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
      auto id = entry.path().stem().string();
      if (!valid_session_id(id)) continue;
      std::ifstream in(entry.path(), std::ios::binary);
      auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      SessionSummary s;
      s.id = id;
      if (j.contains("requirements") && j["requirements"].is_object()) s.title = j["requirements"].value("title", "");
      try {
        s.stage = j.at("stage").get<pipeline::Stage>();
      } catch (const std::exception&) {
        continue;
      }
      out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

 private:
  fs::path quarantine(const fs::path& path) const {
    auto qdir = dir_ / ".quarantine";
    std::error_code ec;
    fs::create_directories(qdir, ec);
    auto dest = qdir / path.filename();
    for (int n = 1; fs::exists(dest); ++n) dest = qdir / (path.filename().string() + "." + std::to_string(n));
    fs::rename(path, dest, ec);
    if (ec) throw Error("E-IO", "cannot quarantine corrupt session file", {{"path", path.string()}});
    return dest;
  }

  fs::path dir_;
};

}  // namespace ucm::service
