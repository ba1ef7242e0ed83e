#pragma once

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sartomo {

/// Binary artifact container shared by `.ph`, `.vox` and `.sdfnet` files.
///
/// Layout:
///   bytes 0..7   ASCII magic "SRTMCNT1"
///   bytes 8..15  little-endian uint64 header length H
///   next H bytes UTF-8 JSON header (always carries "kind" and "count")
///   remainder    little-endian float64 payload, "count" values
struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     std::span<const double> payload);

/// Reads a container and checks header["kind"] == kind (unless kind is empty).
Container read_container(const std::filesystem::path& path, const std::string& kind = {});

}  // namespace sartomo
