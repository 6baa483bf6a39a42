// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/param_map_io.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "kanmatch/binary_io.hpp"
#include "kanmatch/error.hpp"

namespace kanmatch
{

namespace
{
constexpr char kMagic[4] = {'C', 'M', 'K', 'N'};
}

void write_param_map(std::ostream& os, const ParamMap& map)
{
    map.validate();
    os.write(kMagic, 4);
    detail::put_u32(os, kParamMapVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(map.height_t));
    detail::put_u32(os, static_cast<std::uint32_t>(map.width_t));
    detail::put_u32(os, kGridSize);
    detail::put_u32(os, kSplineOrder);
    detail::put_u32(os, static_cast<std::uint32_t>(map.source_h));
    detail::put_u32(os, static_cast<std::uint32_t>(map.source_w));
    const char interp = static_cast<char>(map.interp);
    os.write(&interp, 1);
    for (const auto& p : map.params)
        for (double v : p.flatten())
            detail::put_f32(os, static_cast<float>(v));
    if (!os)
        throw IoError("failed writing parameter map");
}

void write_param_map(const std::filesystem::path& path, const ParamMap& map)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path.string() + "' for writing");
    write_param_map(os, map);
}

ParamMap read_param_map(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a parameter-map file (bad magic)");
    const std::uint32_t version = detail::get_u32(is, "version");
    if (version != kParamMapVersion)
        throw FormatError("unsupported parameter-map version " + std::to_string(version));

    ParamMap map;
    map.height_t = detail::get_u32(is, "height_t");
    map.width_t = detail::get_u32(is, "width_t");
    const std::uint32_t g = detail::get_u32(is, "grid size");
    const std::uint32_t k = detail::get_u32(is, "spline order");
    if (g != kGridSize || k != kSplineOrder)
        throw FormatError("unsupported spline grid G=" + std::to_string(g) +
                          " k=" + std::to_string(k));
    map.source_h = detail::get_u32(is, "src_h");
    map.source_w = detail::get_u32(is, "src_w");
    char interp;
    if (!is.read(&interp, 1))
        throw FormatError("truncated file while reading interp");
    if (interp != 0 && interp != 1)
        throw FormatError("unknown interpolation code " + std::to_string(int(interp)));
    map.interp = static_cast<Interp>(interp);
    if (map.height_t == 0 || map.width_t == 0 || map.source_h == 0 || map.source_w == 0)
        throw FormatError("parameter map has zero dimensions");

    map.params.resize(map.height_t * map.width_t);
    std::array<double, KanParams::kCount> flat{};
    for (auto& p : map.params)
    {
        for (auto& v : flat)
        {
            v = detail::get_f32(is, "parameters");
            if (!std::isfinite(v))
                throw FormatError("parameter map contains non-finite values");
        }
        p = KanParams::from_flat(flat);
    }
    return map;
}

ParamMap read_param_map(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path.string() + "'");
    return read_param_map(is);
}

} // namespace kanmatch
