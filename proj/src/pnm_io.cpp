#include "regfuse/error.hpp"
#include "regfuse/raster.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace regfuse {

namespace {

using Kind = FormatError::Kind;

std::vector<unsigned char> read_all(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path &path, const std::string &header, const std::vector<unsigned char> &body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char *>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// Cursor over a PNM-style header: whitespace-separated tokens with '#' comments.
class HeaderReader {
public:
    HeaderReader(const std::vector<unsigned char> &bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

    std::string token() {
        skip_space_and_comments();
        std::string tok;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) tok.push_back(static_cast<char>(bytes_[pos_++]));
        if (tok.empty()) fail("unexpected end of header");
        return tok;
    }

    long long integer(const char *what) {
        const std::string tok = token();
        if (!std::all_of(tok.begin(), tok.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
            fail(std::string("non-numeric ") + what + " '" + tok + "'");
        }
        try {
            return std::stoll(tok);
        } catch (const std::exception &) {
            fail(std::string(what) + " out of range");
        }
    }

    double real(const char *what) {
        const std::string tok = token();
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) fail(std::string("malformed ") + what + " '" + tok + "'");
            return v;
        } catch (const std::invalid_argument &) {
            fail(std::string("malformed ") + what + " '" + tok + "'");
        } catch (const std::out_of_range &) {
            fail(std::string(what) + " out of range");
        }
    }

    // Exactly one whitespace byte separates the header from the payload.
    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing separator before payload");
        return pos_ + 1;
    }

    [[noreturn]] void fail(const std::string &msg) const {
        throw FormatError(Kind::MalformedHeader, name_ + ": malformed header: " + msg);
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<unsigned char> &bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

Size read_dimensions(HeaderReader &hdr) {
    const long long w = hdr.integer("width");
    const long long h = hdr.integer("height");
    if (w < 1 || h < 1) hdr.fail("dimensions must be positive");
    return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
}

struct PfmData {
    Size size;
    std::size_t channels = 1;
    std::vector<float> values; // top-to-bottom rows, interleaved channels
};

PfmData load_pfm(const std::filesystem::path &path) {
    const auto bytes = read_all(path);
    HeaderReader hdr(bytes, path.string());
    const std::string magic = hdr.token();
    PfmData pfm;
    if (magic == "Pf") {
        pfm.channels = 1;
    } else if (magic == "PF") {
        pfm.channels = 3;
    } else {
        throw FormatError(Kind::UnsupportedType, path.string() + ": not a PFM file (magic '" + magic + "')");
    }
    pfm.size = read_dimensions(hdr);
    const double scale = hdr.real("scale");
    if (scale == 0.0 || !std::isfinite(scale)) hdr.fail("scale must be non-zero");
    const bool little = scale < 0.0;
    const std::size_t offset = hdr.payload_offset();

    const std::size_t count = pfm.size.pixels() * pfm.channels;
    if (bytes.size() - offset < count * 4) {
        throw FormatError(Kind::TruncatedPayload, path.string() + ": truncated payload (expected " +
                                                      std::to_string(count * 4) + " bytes, found " +
                                                      std::to_string(bytes.size() - offset) + ")");
    }
    pfm.values.resize(count);
    const std::size_t row_len = pfm.size.width * pfm.channels;
    for (std::size_t file_row = 0; file_row < pfm.size.height; ++file_row) {
        const std::size_t img_row = pfm.size.height - 1 - file_row;
        for (std::size_t i = 0; i < row_len; ++i) {
            const unsigned char *p = bytes.data() + offset + (file_row * row_len + i) * 4;
            std::uint32_t bits = little ? (std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                                           std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24)
                                        : (std::uint32_t(p[3]) | std::uint32_t(p[2]) << 8 |
                                           std::uint32_t(p[1]) << 16 | std::uint32_t(p[0]) << 24);
            pfm.values[img_row * row_len + i] = std::bit_cast<float>(bits);
        }
    }
    return pfm;
}

void save_pfm(const PfmData &pfm, const std::filesystem::path &path) {
    const char *magic = pfm.channels == 1 ? "Pf" : "PF";
    const std::string header = std::string(magic) + "\n" + std::to_string(pfm.size.width) + " " +
                               std::to_string(pfm.size.height) + "\n-1.0\n";
    const std::size_t row_len = pfm.size.width * pfm.channels;
    std::vector<unsigned char> body(pfm.values.size() * 4);
    for (std::size_t file_row = 0; file_row < pfm.size.height; ++file_row) {
        const std::size_t img_row = pfm.size.height - 1 - file_row;
        for (std::size_t i = 0; i < row_len; ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(pfm.values[img_row * row_len + i]);
            unsigned char *p = body.data() + (file_row * row_len + i) * 4;
            p[0] = static_cast<unsigned char>(bits);
            p[1] = static_cast<unsigned char>(bits >> 8);
            p[2] = static_cast<unsigned char>(bits >> 16);
            p[3] = static_cast<unsigned char>(bits >> 24);
        }
    }
    write_all(path, header, body);
}

} // namespace

unsigned char quantize_byte(double v) {
    const double c = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

GrayImage load_pgm(const std::filesystem::path &path) {
    const auto bytes = read_all(path);
    HeaderReader hdr(bytes, path.string());
    const std::string magic = hdr.token();
    if (magic != "P5") {
        throw FormatError(Kind::MalformedHeader, path.string() + ": malformed header: expected P5, found '" + magic + "'");
    }
    const Size size = read_dimensions(hdr);
    const long long maxval = hdr.integer("maxval");
    if (maxval != 255) {
        throw FormatError(Kind::UnsupportedMaxval,
                          path.string() + ": unsupported maxval " + std::to_string(maxval) + " (only 255)");
    }
    const std::size_t offset = hdr.payload_offset();
    if (bytes.size() - offset < size.pixels()) {
        throw FormatError(Kind::TruncatedPayload, path.string() + ": truncated payload (expected " +
                                                      std::to_string(size.pixels()) + " bytes, found " +
                                                      std::to_string(bytes.size() - offset) + ")");
    }
    GrayImage img(size);
    for (std::size_t i = 0; i < size.pixels(); ++i) img.pixels()[i] = bytes[offset + i] / 255.0;
    return img;
}

void save_pgm(const GrayImage &img, const std::filesystem::path &path) {
    const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<unsigned char> body(img.pixel_count());
    std::transform(img.pixels().begin(), img.pixels().end(), body.begin(), quantize_byte);
    write_all(path, header, body);
}

GrayImage load_pfm_gray(const std::filesystem::path &path) {
    const auto pfm = load_pfm(path);
    if (pfm.channels != 1) throw FormatError(Kind::UnsupportedType, path.string() + ": expected single-channel Pf");
    GrayImage img(pfm.size);
    std::copy(pfm.values.begin(), pfm.values.end(), img.pixels().begin());
    return img;
}

void save_pfm_gray(const GrayImage &img, const std::filesystem::path &path) {
    PfmData pfm{img.size(), 1, std::vector<float>(img.pixels().begin(), img.pixels().end())};
    save_pfm(pfm, path);
}

RgbPlanes load_pfm_rgb(const std::filesystem::path &path) {
    const auto pfm = load_pfm(path);
    if (pfm.channels != 3) throw FormatError(Kind::UnsupportedType, path.string() + ": expected three-channel PF");
    RgbPlanes planes{GrayImage(pfm.size), GrayImage(pfm.size), GrayImage(pfm.size)};
    for (std::size_t i = 0; i < pfm.size.pixels(); ++i) {
        planes.r.pixels()[i] = pfm.values[3 * i];
        planes.g.pixels()[i] = pfm.values[3 * i + 1];
        planes.b.pixels()[i] = pfm.values[3 * i + 2];
    }
    return planes;
}

void save_pfm_rgb(const RgbPlanes &planes, const std::filesystem::path &path) {
    require_same_size(planes.r, planes.g, "save_pfm_rgb");
    require_same_size(planes.r, planes.b, "save_pfm_rgb");
    PfmData pfm{planes.r.size(), 3, std::vector<float>(planes.r.pixel_count() * 3)};
    for (std::size_t i = 0; i < planes.r.pixel_count(); ++i) {
        pfm.values[3 * i] = static_cast<float>(planes.r.pixels()[i]);
        pfm.values[3 * i + 1] = static_cast<float>(planes.g.pixels()[i]);
        pfm.values[3 * i + 2] = static_cast<float>(planes.b.pixels()[i]);
    }
    save_pfm(pfm, path);
}

} // namespace regfuse
