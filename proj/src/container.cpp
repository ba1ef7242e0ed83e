#include "sartomo/container.hpp"

#include "sartomo/common.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sartomo {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'S', 'R', 'T', 'M', 'C', 'N', 'T', '1'};
}

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     std::span<const double> payload) {
  header["count"] = payload.size();
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open for writing: " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorCode::Io,
          "bad container magic: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(in && len < (1ULL << 30), ErrorCode::Io, "bad header length: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(in), ErrorCode::Io, "truncated header: " + path.string());

  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, "malformed header in " + path.string() + ": " + e.what());
  }
  if (!kind.empty()) {
    require(c.header.value("kind", std::string{}) == kind, ErrorCode::Io,
            path.string() + " is not a '" + kind + "' container");
  }
  const auto count = c.header.at("count").get<std::size_t>();
  c.payload.resize(count);
  in.read(reinterpret_cast<char*>(c.payload.data()), static_cast<std::streamsize>(count * sizeof(double)));
  require(static_cast<bool>(in), ErrorCode::Io, "truncated payload: " + path.string());
  return c;
}

}  // namespace sartomo
