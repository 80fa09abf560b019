#include <array>
#include <cstdio>
#include <fstream>
#include <mutex>

#include <curl/curl.h>
#include <openssl/evp.h>

#include "tabseq/data.h"
#include "tabseq/error.h"

namespace tabseq::data {

using nlohmann::json;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md.data(), &len);
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

void curl_init_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

std::size_t write_body(char* ptr, std::size_t size, std::size_t n, void* user) {
  auto* out = static_cast<std::ofstream*>(user);
  out->write(ptr, static_cast<std::streamsize>(size * n));
  return out->good() ? size * n : 0;
}

void download(const std::string& url, const std::filesystem::path& dest) {
  curl_init_once();
  const auto partial = std::filesystem::path(dest.string() + ".part");
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + partial.string());
    CURL* curl = curl_easy_init();
    if (!curl) throw NetworkError("curl init failed");
    char err[CURL_ERROR_SIZE] = {0};
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
    curl_easy_setopt(curl, CURLOPT_ERRORBUFFER, err);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_body);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &out);
    curl_easy_setopt(curl, CURLOPT_USERAGENT, "tabseq-fetch/1");
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) {
      out.close();
      std::filesystem::remove(partial);
      throw NetworkError("download of " + url + " failed: " + (err[0] ? std::string(err) : curl_easy_strerror(rc)));
    }
  }
  std::filesystem::rename(partial, dest);
}

json read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {{"files", json::object()}};
  std::ifstream in(path);
  try {
    auto j = json::parse(in);
    if (!j.contains("files")) j["files"] = json::object();
    return j;
  } catch (const json::exception& e) {
    throw IoError("corrupt cache manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const json& j) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::vector<FetchedFile> fetch(const DatasetMeta& meta, const std::filesystem::path& cache_dir, bool force) {
  std::filesystem::create_directories(cache_dir);
  const auto manifest_path = cache_dir / "manifest.json";
  auto manifest = read_manifest(manifest_path);
  auto& files = manifest["files"];
  bool dirty = false;

  std::vector<FetchedFile> out;
  for (const auto& src : meta.sources) {
    FetchedFile f;
    f.path = cache_dir / src.file;
    if (force || !std::filesystem::exists(f.path)) {
      if (!src.url) {
        throw IoError("dataset '" + meta.name + "' has no public download; place " + src.file + " at " +
                      f.path.string() + (meta.notes.empty() ? "" : " (" + meta.notes + ")"));
      }
      download(*src.url, f.path);
      f.downloaded = true;
    }
    f.sha256 = sha256_file(f.path);

    std::optional<std::string> expected = src.sha256;
    if (!expected && files.contains(src.file)) expected = files[src.file].at("sha256").get<std::string>();
    if (expected && *expected != f.sha256) {
      if (f.downloaded) std::filesystem::remove(f.path);
      throw IntegrityError("checksum mismatch for " + src.file + ": expected " + *expected + ", got " + f.sha256);
    }
    if (!files.contains(src.file)) {
      files[src.file] = {{"sha256", f.sha256}, {"url", src.url ? json(*src.url) : json(nullptr)}};
      f.recorded = !src.sha256.has_value();
      dirty = true;
    }
    out.push_back(std::move(f));
  }
  if (dirty) write_manifest(manifest_path, manifest);
  return out;
}

}  // namespace tabseq::data
