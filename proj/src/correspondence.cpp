// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/correspondence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "kanmatch/error.hpp"

namespace kanmatch
{

void CorrespondenceSet::validate() const
{
    if (samples.empty())
        throw ContractError("correspondence set is empty");
    if (!weights.empty() && weights.size() != samples.size())
        throw ContractError("correspondence weights must match the sample count");
    for (std::size_t n = 0; n < samples.size(); ++n)
    {
        for (std::size_t c = 0; c < 3; ++c)
        {
            const double s = samples[n].src[c];
            const double t = samples[n].tgt[c];
            if (!std::isfinite(s) || !std::isfinite(t))
                throw ContractError("correspondence " + std::to_string(n) + " is not finite");
            if (s < 0.0 || s > 1.0 || t < 0.0 || t > 1.0)
                throw ContractError("correspondence " + std::to_string(n) +
                                    " has values outside [0,1]");
        }
        if (!weights.empty() && !(std::isfinite(weights[n]) && weights[n] >= 0.0))
            throw ContractError("correspondence weight " + std::to_string(n) + " is invalid");
    }
}

CorrespondenceSet correspondences_from_images(const ImageBuf& src, const ImageBuf& tgt,
                                              std::size_t stride)
{
    if (!src.same_shape(tgt))
        throw ContractError("source and target images differ in size");
    if (stride == 0)
        throw ContractError("correspondence stride must be positive");
    CorrespondenceSet corr;
    for (std::size_t y = 0; y < src.height(); y += stride)
        for (std::size_t x = 0; x < src.width(); x += stride)
            corr.samples.push_back(
                {src.pixel(y, x), tgt.pixel(y, x),
                 std::array<double, 2>{static_cast<double>(x), static_cast<double>(y)}});
    return corr;
}

namespace
{

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
    {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
            cell.pop_back();
        std::size_t start = cell.find_first_not_of(' ');
        out.push_back(start == std::string::npos ? std::string() : cell.substr(start));
    }
    return out;
}

double parse_number(const std::string& s, std::size_t line)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("line " + std::to_string(line) + ": invalid number '" + s + "'");
    return v;
}

} // namespace

CorrespondenceSet read_correspondences_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line))
        throw FormatError("correspondence CSV is empty");
    const auto header = split_csv(line);
    const std::vector<std::string> base{"sr", "sg", "sb", "tr", "tg", "tb"};
    const bool with_pos = header.size() == 8;
    if ((header.size() != 6 && !with_pos) || !std::equal(base.begin(), base.end(), header.begin()) ||
        (with_pos && (header[6] != "x" || header[7] != "y")))
        throw FormatError("correspondence CSV header must be sr,sg,sb,tr,tg,tb[,x,y]");

    CorrespondenceSet corr;
    std::size_t lineno = 1;
    while (std::getline(is, line))
    {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw FormatError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " columns");
        Correspondence c;
        for (std::size_t k = 0; k < 3; ++k)
        {
            c.src[k] = parse_number(cells[k], lineno);
            c.tgt[k] = parse_number(cells[3 + k], lineno);
        }
        if (with_pos)
            c.pos = std::array<double, 2>{parse_number(cells[6], lineno),
                                         parse_number(cells[7], lineno)};
        corr.samples.push_back(c);
    }
    return corr;
}

CorrespondenceSet read_correspondences_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open '" + path.string() + "'");
    return read_correspondences_csv(is);
}

void write_correspondences_csv(std::ostream& os, const CorrespondenceSet& corr)
{
    const bool with_pos = !corr.empty() && corr.samples.front().pos.has_value();
    os << "sr,sg,sb,tr,tg,tb" << (with_pos ? ",x,y" : "") << '\n';
    char buf[32];
    auto put = [&](double v) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        os.write(buf, res.ptr - buf);
    };
    for (const auto& c : corr.samples)
    {
        for (std::size_t k = 0; k < 3; ++k)
        {
            put(c.src[k]);
            os << ',';
        }
        for (std::size_t k = 0; k < 3; ++k)
        {
            put(c.tgt[k]);
            if (k < 2)
                os << ',';
        }
        if (with_pos)
        {
            const auto p = c.pos.value_or(std::array<double, 2>{0.0, 0.0});
            os << ',';
            put(p[0]);
            os << ',';
            put(p[1]);
        }
        os << '\n';
    }
}

void write_correspondences_csv(const std::filesystem::path& path, const CorrespondenceSet& corr)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open '" + path.string() + "' for writing");
    write_correspondences_csv(os, corr);
}

} // namespace kanmatch
