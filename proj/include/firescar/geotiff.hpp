#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "firescar/grid.hpp"
#include "firescar/raster.hpp"

namespace firescar::raster {

/// North-up affine georeference: x = origin_x + col * pixel_size, y = origin_y - row * pixel_size.
struct GeoReference {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 30.0;
    int epsg = 32719;  // WGS 84 / UTM 19S
    friend bool operator==(const GeoReference&, const GeoReference&) = default;
};

struct Raster {
    std::vector<Grid<float>> bands;
    GeoReference geo;
    bool georeferenced = false;

    [[nodiscard]] int height() const { return bands.empty() ? 0 : bands[0].height(); }
    [[nodiscard]] int width() const { return bands.empty() ? 0 : bands[0].width(); }
};

/// Reads any strip- or tile-organized TIFF with 8/16/32/64-bit integer or
/// float samples. GDAL_NODATA pixels become the invalid marker.
Raster read_geotiff(const std::filesystem::path& path);

/// Writes float32 bands, one plane per band, uncompressed.
void write_geotiff(const std::filesystem::path& path, std::span<const Grid<float>> bands, const GeoReference& geo);

void write_mask_geotiff(const std::filesystem::path& path, const Mask& mask, const GeoReference& geo);
Mask read_mask_geotiff(const std::filesystem::path& path);

/// Loads a pre/post pair. Six-band inputs get NDVI and NBR appended; any
/// other band count than 6 or 8 is rejected.
BandTile load_tile(const std::filesystem::path& pre_path, const std::filesystem::path& post_path, std::string record_id);
void save_tile(const BandTile& tile, const std::filesystem::path& pre_path, const std::filesystem::path& post_path,
               int epsg = 32719);

GeoReference tile_georeference(const BandTile& tile, int epsg = 32719);

}  // namespace firescar::raster
