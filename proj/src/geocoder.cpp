#include "utk/geocoder.hpp"

#include <fstream>

#include "utk/error.hpp"

namespace utk {

grammar::BoundingBox OfflineGeocoder::lookup(const std::string& address) const {
  throw Error(ErrorCode::GeocoderUnavailable, "no geocoder configured to resolve '" + address + "'");
}

TableGeocoder TableGeocoder::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::FormatError, path.string() + ": expected an object");
  std::map<std::string, grammar::BoundingBox> table;
  for (const auto& [address, box] : doc.items()) {
    if (!box.is_array() || box.size() != 4)
      throw Error(ErrorCode::FormatError, path.string() + ": '" + address + "' needs [lat_min, lon_min, lat_max, lon_max]");
    table[address] = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
  }
  return TableGeocoder(std::move(table));
}

grammar::BoundingBox TableGeocoder::lookup(const std::string& address) const {
  const auto it = table_.find(address);
  if (it == table_.end()) throw Error(ErrorCode::GeocoderUnavailable, "address '" + address + "' is not in the table");
  return it->second;
}

}  // namespace utk
