#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "verifuse/common.hpp"
#include "verifuse/corpus.hpp"
#include "verifuse/image.hpp"

namespace verifuse {

struct HttpResponse {
  int status = 0;  // 0 when the request never completed
  std::string body;
  std::string error;
};

/// Performs one network GET. Injected so tests can count and fake calls.
using Transport = std::function<HttpResponse(const std::string& url, double timeout_s)>;

inline HttpResponse http_get(const std::string& url, double timeout_s) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return {0, {}, "not a URL: " + url};
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  try {
    httplib::Client client(origin);
    const auto secs = std::chrono::duration<double>(timeout_s);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    client.set_follow_location(true);
    auto res = client.Get(path);
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  } catch (const std::exception& e) {
    return {0, {}, e.what()};
  }
}

struct FetchPolicy {
  double timeout_s = 10.0;
  int retries = 2;
  double backoff_s = 0.5;  // doubled after every failed attempt
};

/// Either the image bytes or the reason the fetch failed. A failure never
/// throws: the caller drops the record.
struct FetchResult {
  bool ok = false;
  bool from_cache = false;
  std::string bytes;
  std::string path;  // cached file
  std::string error;
};

inline bool is_url(std::string_view ref) { return ref.find("://") != std::string_view::npos && ref.substr(0, 7) != "file://"; }

/// Turns a manifest image reference into a URL or an absolute path. Relative
/// paths resolve against `base_dir`; bare ids (MediaEval image_id) are tried
/// with the usual image extensions.
inline std::string resolve_image_ref(const std::string& ref, const std::filesystem::path& base_dir) {
  if (is_url(ref)) return ref;
  std::string p = ref.rfind("file://", 0) == 0 ? ref.substr(7) : ref;
  std::filesystem::path path(p);
  if (path.is_relative()) path = base_dir / path;
  if (!path.has_extension() && !std::filesystem::exists(path)) {
    for (const char* ext : {".jpg", ".jpeg", ".png", ".gif"}) {
      auto candidate = path;
      candidate += ext;
      if (std::filesystem::exists(candidate)) return candidate.string();
    }
  }
  return path.string();
}

/// Maps a record id to a file-system-safe cache stem.
inline std::string cache_stem(std::string_view id) {
  std::string out;
  static constexpr char hex[] = "0123456789ABCDEF";
  for (char ch : id) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out.push_back(ch);
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xF]);
    }
  }
  if (out.empty() || out == "." || out == "..") out = "%" + out;
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Disk cache of fetched images: `<root>/images/<id>.<ext>`.
class ImageCache {
 public:
  explicit ImageCache(std::filesystem::path root) : dir_(std::move(root) / "images") {}

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::filesystem::path> lookup(std::string_view id) const {
    const auto stem = cache_stem(id);
    for (const char* ext : {"png", "jpg"}) {
      auto p = dir_ / (stem + "." + ext);
      if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
  }

  std::filesystem::path store(std::string_view id, const std::string& bytes) const {
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / (cache_stem(id) + "." + std::string(extension_for(sniff_image_format(bytes))));
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return path;
  }

 private:
  std::filesystem::path dir_;
};

/// Fetches (or reads) one image, validating that it decodes as PNG/JPEG, and
/// caches the bytes under the record id. Network failures are retried with
/// exponential backoff; the final outcome is returned, never thrown.
inline FetchResult fetch_image(const std::string& record_id, const std::string& image_ref, const ImageCache& cache,
                               const Transport& transport, const FetchPolicy& policy = {},
                               const std::filesystem::path& base_dir = {}) {
  FetchResult res;
  if (image_ref.empty()) {
    res.error = "empty image reference";
    return res;
  }
  if (auto cached = cache.lookup(record_id)) {
    try {
      std::string bytes = read_file_bytes(*cached);
      if (is_decodable_image(bytes)) {
        res.ok = true;
        res.from_cache = true;
        res.bytes = std::move(bytes);
        res.path = cached->string();
        return res;
      }
    } catch (const DataError&) {
    }
  }

  const std::string resolved = resolve_image_ref(image_ref, base_dir);
  std::string bytes;
  if (is_url(resolved)) {
    double backoff = policy.backoff_s;
    bool got = false;
    for (int attempt = 0; attempt <= policy.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= 2;
      }
      HttpResponse r = transport(resolved, policy.timeout_s);
      if (r.status == 200) {
        bytes = std::move(r.body);
        got = true;
        break;
      }
      res.error = r.status == 0 ? "network error: " + r.error : "HTTP " + std::to_string(r.status);
      // Client errors will not change on retry.
      if (r.status >= 400 && r.status < 500) break;
    }
    if (!got) return res;
  } else {
    try {
      bytes = read_file_bytes(resolved);
    } catch (const DataError& e) {
      res.error = e.what();
      return res;
    }
  }
  if (!is_decodable_image(bytes)) {
    res.error = "payload from " + resolved + " is not a decodable PNG/JPEG";
    return res;
  }
  res.path = cache.store(record_id, bytes).string();
  res.ok = true;
  res.bytes = std::move(bytes);
  return res;
}

/// Fetches the images of every record using up to `workers` threads and
/// records the outcome on each record. Result order never depends on thread
/// scheduling: each worker writes only its own slots.
inline void fetch_all(std::vector<NewsRecord>& records, const ImageCache& cache, const Transport& transport,
                      const FetchPolicy& policy, const std::filesystem::path& base_dir, unsigned workers = 4,
                      std::vector<std::string>* errors = nullptr) {
  std::vector<std::string> errs(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      auto& r = records[i];
      if (!r.image_ref || r.id.empty()) {
        r.fetch_status = FetchStatus::failed;
        errs[i] = "missing image reference or id";
        continue;
      }
      auto res = fetch_image(r.id, *r.image_ref, cache, transport, policy, base_dir);
      r.fetch_status = res.ok ? FetchStatus::ok : FetchStatus::failed;
      r.image_path = res.ok ? res.path : std::string{};
      errs[i] = res.error;
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, records.size()))));
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  if (errors) *errors = std::move(errs);
}

}  // namespace verifuse
