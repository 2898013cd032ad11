#include "firescar/geotiff.hpp"

#include <tiffio.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace firescar::raster {

namespace {

constexpr ttag_t kModelPixelScaleTag = 33550;
constexpr ttag_t kModelTiepointTag = 33922;
constexpr ttag_t kGeoKeyDirectoryTag = 34735;
constexpr ttag_t kGdalNodataTag = 42113;

const TIFFFieldInfo kGeoFieldInfo[] = {
    {kModelPixelScaleTag, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelPixelScaleTag")},
    {kModelTiepointTag, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelTiepointTag")},
    {kGeoKeyDirectoryTag, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoKeyDirectoryTag")},
    {kGdalNodataTag, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALNoDataTag")},
};

TIFFExtendProc g_parent_extender = nullptr;

void geo_tag_extender(TIFF* tif) {
    TIFFMergeFieldInfo(tif, kGeoFieldInfo, sizeof(kGeoFieldInfo) / sizeof(kGeoFieldInfo[0]));
    if (g_parent_extender) g_parent_extender(tif);
}

void register_geo_tags() {
    static std::once_flag once;
    std::call_once(once, [] {
        g_parent_extender = TIFFSetTagExtender(geo_tag_extender);
        // Keep libtiff warnings about unknown private tags off stderr.
        TIFFSetWarningHandler(nullptr);
    });
}

struct TiffCloser {
    void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

TiffHandle open_tiff(const std::filesystem::path& path, const char* mode) {
    register_geo_tags();
    TiffHandle tif(TIFFOpen(path.c_str(), mode));
    if (!tif) {
        if (mode[0] == 'r') throw FormatError("cannot open TIFF '" + path.string() + "'");
        throw std::runtime_error("cannot create TIFF '" + path.string() + "'");
    }
    return tif;
}

float sample_to_float(const unsigned char* p, uint16_t format, uint16_t bits) {
    switch (format) {
        case SAMPLEFORMAT_IEEEFP:
            if (bits == 32) {
                float v;
                std::memcpy(&v, p, 4);
                return v;
            }
            if (bits == 64) {
                double v;
                std::memcpy(&v, p, 8);
                return static_cast<float>(v);
            }
            break;
        case SAMPLEFORMAT_INT:
            if (bits == 8) return static_cast<float>(*reinterpret_cast<const int8_t*>(p));
            if (bits == 16) {
                int16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
            if (bits == 32) {
                int32_t v;
                std::memcpy(&v, p, 4);
                return static_cast<float>(v);
            }
            break;
        default:  // unsigned
            if (bits == 8) return *p;
            if (bits == 16) {
                uint16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
            if (bits == 32) {
                uint32_t v;
                std::memcpy(&v, p, 4);
                return static_cast<float>(v);
            }
            break;
    }
    throw FormatError("unsupported TIFF sample layout (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits)");
}

void write_geo_tags(TIFF* tif, const GeoReference& geo) {
    double scale[3] = {geo.pixel_size, geo.pixel_size, 0.0};
    double tie[6] = {0.0, 0.0, 0.0, geo.origin_x, geo.origin_y, 0.0};
    // KeyDirectoryVersion, KeyRevision, MinorRevision, NumberOfKeys, then key entries.
    uint16_t keys[16] = {1, 1, 0, 3,
                         1024, 0, 1, 1,  // GTModelTypeGeoKey = projected
                         1025, 0, 1, 1,  // GTRasterTypeGeoKey = PixelIsArea
                         3072, 0, 1, static_cast<uint16_t>(geo.epsg)};
    TIFFSetField(tif, kModelPixelScaleTag, 3, scale);
    TIFFSetField(tif, kModelTiepointTag, 6, tie);
    TIFFSetField(tif, kGeoKeyDirectoryTag, 16, keys);
}

std::optional<GeoReference> read_geo_tags(TIFF* tif) {
    uint16_t n_scale = 0, n_tie = 0, n_keys = 0;
    double* scale = nullptr;
    double* tie = nullptr;
    uint16_t* keys = nullptr;
    if (!TIFFGetField(tif, kModelPixelScaleTag, &n_scale, &scale) || n_scale < 2) return std::nullopt;
    if (!TIFFGetField(tif, kModelTiepointTag, &n_tie, &tie) || n_tie < 6) return std::nullopt;
    GeoReference geo;
    geo.pixel_size = scale[0];
    geo.origin_x = tie[3] - tie[0] * scale[0];
    geo.origin_y = tie[4] + tie[1] * scale[1];
    if (TIFFGetField(tif, kGeoKeyDirectoryTag, &n_keys, &keys) && n_keys >= 4) {
        const int count = keys[3];
        for (int k = 0; k < count && 4 + 4 * k + 3 < n_keys; ++k) {
            const uint16_t* e = keys + 4 + 4 * k;
            if ((e[0] == 3072 || e[0] == 2048) && e[1] == 0) geo.epsg = e[3];
        }
    }
    return geo;
}

void write_planes(const std::filesystem::path& path, int height, int width, int planes, uint16_t bits, uint16_t format,
                  const GeoReference& geo, const auto& plane_row) {
    auto tif = open_tiff(path, "w");
    TIFF* t = tif.get();
    TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<uint32_t>(width));
    TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<uint32_t>(height));
    TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, static_cast<uint16_t>(planes));
    TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, bits);
    TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, format);
    TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
    TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, 1u);
    if (planes > 1) {
        std::vector<uint16_t> extra(planes - 1, EXTRASAMPLE_UNSPECIFIED);
        TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<uint16_t>(extra.size()), extra.data());
    }
    write_geo_tags(t, geo);
    for (int p = 0; p < planes; ++p)
        for (int r = 0; r < height; ++r)
            if (TIFFWriteScanline(t, const_cast<void*>(plane_row(p, r)), static_cast<uint32_t>(r),
                                  static_cast<uint16_t>(p)) < 0)
                throw std::runtime_error("TIFF write failed for '" + path.string() + "'");
}

}  // namespace

Raster read_geotiff(const std::filesystem::path& path) {
    auto tif = open_tiff(path, "r");
    TIFF* t = tif.get();
    uint32_t width = 0, height = 0;
    uint16_t spp = 1, bits = 8, format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
    TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &width);
    TIFFGetField(t, TIFFTAG_IMAGELENGTH, &height);
    TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
    TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &format);
    TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);
    if (width == 0 || height == 0) throw FormatError("empty TIFF '" + path.string() + "'");
    if (bits % 8 != 0) throw FormatError("sub-byte TIFF samples are not supported: '" + path.string() + "'");

    std::optional<float> nodata;
    char* nodata_text = nullptr;
    if (TIFFGetField(t, kGdalNodataTag, &nodata_text) && nodata_text) nodata = std::stof(nodata_text);

    Raster out;
    out.bands.assign(spp, Grid<float>(static_cast<int>(height), static_cast<int>(width)));
    const int bytes = bits / 8;
    const bool separate = planar == PLANARCONFIG_SEPARATE;

    auto store = [&](int band, uint32_t r, uint32_t c, const unsigned char* p) {
        float v = sample_to_float(p, format, bits);
        if (nodata && v == *nodata) v = invalid_value<float>();
        out.bands[band](static_cast<int>(r), static_cast<int>(c)) = v;
    };

    if (TIFFIsTiled(t)) {
        uint32_t tw = 0, th = 0;
        TIFFGetField(t, TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(t, TIFFTAG_TILELENGTH, &th);
        std::vector<unsigned char> buf(TIFFTileSize(t));
        for (int plane = 0; plane < (separate ? spp : 1); ++plane)
            for (uint32_t y = 0; y < height; y += th)
                for (uint32_t x = 0; x < width; x += tw) {
                    if (TIFFReadTile(t, buf.data(), x, y, 0, static_cast<uint16_t>(plane)) < 0)
                        throw FormatError("TIFF tile read failed in '" + path.string() + "'");
                    for (uint32_t i = 0; i < th && y + i < height; ++i)
                        for (uint32_t j = 0; j < tw && x + j < width; ++j) {
                            if (separate) {
                                store(plane, y + i, x + j, buf.data() + (i * tw + j) * bytes);
                            } else {
                                for (int s = 0; s < spp; ++s)
                                    store(s, y + i, x + j, buf.data() + ((i * tw + j) * spp + s) * bytes);
                            }
                        }
                }
    } else {
        std::vector<unsigned char> buf(TIFFScanlineSize(t));
        for (int plane = 0; plane < (separate ? spp : 1); ++plane)
            for (uint32_t r = 0; r < height; ++r) {
                if (TIFFReadScanline(t, buf.data(), r, static_cast<uint16_t>(plane)) < 0)
                    throw FormatError("TIFF scanline read failed in '" + path.string() + "'");
                for (uint32_t c = 0; c < width; ++c) {
                    if (separate) {
                        store(plane, r, c, buf.data() + c * bytes);
                    } else {
                        for (int s = 0; s < spp; ++s) store(s, r, c, buf.data() + (c * spp + s) * bytes);
                    }
                }
            }
    }
    if (auto geo = read_geo_tags(t)) {
        out.geo = *geo;
        out.georeferenced = true;
    }
    return out;
}

void write_geotiff(const std::filesystem::path& path, std::span<const Grid<float>> bands, const GeoReference& geo) {
    if (bands.empty()) throw ContractViolation("write_geotiff: no bands");
    for (const auto& b : bands) require_same_shape(b, bands[0], "write_geotiff");
    write_planes(path, bands[0].height(), bands[0].width(), static_cast<int>(bands.size()), 32, SAMPLEFORMAT_IEEEFP,
                 geo, [&](int p, int r) -> const void* {
                     return bands[p].values().data() + static_cast<std::size_t>(r) * bands[p].width();
                 });
}

void write_mask_geotiff(const std::filesystem::path& path, const Mask& mask, const GeoReference& geo) {
    write_planes(path, mask.height(), mask.width(), 1, 8, SAMPLEFORMAT_UINT, geo, [&](int, int r) -> const void* {
        return mask.values().data() + static_cast<std::size_t>(r) * mask.width();
    });
}

Mask read_mask_geotiff(const std::filesystem::path& path) {
    Raster r = read_geotiff(path);
    if (r.bands.size() != 1) throw FormatError("scar mask '" + path.string() + "' must have exactly one band");
    Mask m(r.height(), r.width());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const float v = r.bands[0][i];
        if (v != 0.0f && v != 1.0f)
            throw FormatError("scar mask '" + path.string() + "' contains a value other than 0/1");
        m[i] = static_cast<std::uint8_t>(v);
    }
    return m;
}

namespace {

BandStack to_stack(Raster&& r, const std::filesystem::path& path) {
    if (r.bands.size() != kBandCount && r.bands.size() != kRawBandCount)
        throw FormatError("'" + path.string() + "' has " + std::to_string(r.bands.size()) +
                          " bands; expected 6 (blue..swir2) or 8 (blue..swir2, ndvi, nbr)");
    BandStack stack;
    for (std::size_t b = 0; b < r.bands.size(); ++b) stack[b] = std::move(r.bands[b]);
    if (r.bands.size() == kRawBandCount) fill_indices(stack);
    return stack;
}

}  // namespace

BandTile load_tile(const std::filesystem::path& pre_path, const std::filesystem::path& post_path, std::string record_id) {
    Raster pre = read_geotiff(pre_path);
    Raster post = read_geotiff(post_path);
    if (pre.height() != post.height() || pre.width() != post.width())
        throw FormatError("pre/post rasters differ in size for record " + record_id);
    BandTile tile;
    tile.pixel_size_m = pre.geo.pixel_size;
    tile.origin = {pre.geo.origin_x, pre.geo.origin_y};
    tile.pre = to_stack(std::move(pre), pre_path);
    tile.post = to_stack(std::move(post), post_path);
    tile.record_id = std::move(record_id);
    return tile;
}

GeoReference tile_georeference(const BandTile& tile, int epsg) {
    return {tile.origin.x, tile.origin.y, tile.pixel_size_m, epsg};
}

void save_tile(const BandTile& tile, const std::filesystem::path& pre_path, const std::filesystem::path& post_path,
               int epsg) {
    const GeoReference geo = tile_georeference(tile, epsg);
    write_geotiff(pre_path, tile.pre, geo);
    write_geotiff(post_path, tile.post, geo);
}

}  // namespace firescar::raster
