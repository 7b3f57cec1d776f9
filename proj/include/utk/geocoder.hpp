#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "utk/grammar.hpp"

namespace utk {

/// Resolves an address to a lat/lon bounding box.
class Geocoder {
public:
  virtual ~Geocoder() = default;
  /// Throws Error(GeocoderUnavailable) when the address cannot be resolved.
  virtual grammar::BoundingBox lookup(const std::string& address) const = 0;
};

/// Default geocoder: always unavailable (no network access).
class OfflineGeocoder final : public Geocoder {
public:
  grammar::BoundingBox lookup(const std::string& address) const override;
};

/// Fixed address table, e.g. loaded from a workspace's geocoder.json:
///   {"Washington Square Park": [lat_min, lon_min, lat_max, lon_max], ...}
class TableGeocoder final : public Geocoder {
public:
  TableGeocoder() = default;
  explicit TableGeocoder(std::map<std::string, grammar::BoundingBox> table) : table_(std::move(table)) {}
  static TableGeocoder from_file(const std::filesystem::path& path);

  grammar::BoundingBox lookup(const std::string& address) const override;

private:
  std::map<std::string, grammar::BoundingBox> table_;
};

}  // namespace utk
