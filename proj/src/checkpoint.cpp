#include "partasm/error.hpp"
#include "partasm/json_io.hpp"
#include "partasm/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace partasm::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

constexpr char kMagic[8] = {'P', 'A', 'S', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPreamble = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);

template <class T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  check_params(checkpoint.params, checkpoint.config);
  nlohmann::json header;
  header["config"] = checkpoint.config;
  header["seed"] = checkpoint.seed;
  try {
    header["metadata"] = nlohmann::json::parse(checkpoint.metadata_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, value] : checkpoint.params.entries()) tensors.push_back({{"name", name}, {"shape", value.shape()}});
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kVersion);
  put<std::uint64_t>(blob, text.size());
  blob += text;
  for (const auto& [name, value] : checkpoint.params.entries()) {
    blob.append(reinterpret_cast<const char*>(value.data()), value.size() * sizeof(double));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < kPreamble) throw ParseError("checkpoint " + path + " is truncated", blob.size());
  if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) throw ParseError(path + " is not a checkpoint", 0);
  const auto version = get<std::uint32_t>(blob, sizeof(kMagic));
  if (version != kVersion) throw VersionError(static_cast<int>(kVersion), static_cast<int>(version));
  const auto header_size = get<std::uint64_t>(blob, sizeof(kMagic) + sizeof(std::uint32_t));
  if (header_size > blob.size() - kPreamble) throw ParseError("checkpoint header is truncated", blob.size());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.begin() + kPreamble, blob.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_size));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), kPreamble + e.byte);
  }

  Checkpoint out;
  std::size_t offset = kPreamble + header_size;
  try {
    out.config = header.at("config").get<NetConfig>();
    out.seed = header.at("seed").get<std::uint64_t>();
    out.metadata_json = header.at("metadata").dump();
    for (const auto& entry : header.at("tensors")) {
      Tensor value(entry.at("shape").get<ad::Shape>());
      const std::size_t bytes = value.size() * sizeof(double);
      if (bytes > blob.size() - offset) throw ParseError("checkpoint payload is truncated", blob.size());
      std::memcpy(value.data(), blob.data() + offset, bytes);
      offset += bytes;
      out.params.add(entry.at("name").get<std::string>(), std::move(value));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), kPreamble);
  }
  if (offset != blob.size()) throw ParseError("trailing bytes after checkpoint payload", offset);
  check_params(out.params, out.config);
  return out;
}

}  // namespace partasm::model
