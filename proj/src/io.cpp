#include "mafuse/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mafuse::io {

namespace fs = std::filesystem;

namespace {

enum class Dtype { u8, i16, f32 };

struct RawImage {
    Geometry geom;
    int components = 1;
    std::vector<double> data;  // component-major, x-fastest within a component
};

[[noreturn]] void fail(const fs::path& p, const std::string& msg) {
    throw std::runtime_error(p.string() + ": " + msg);
}

bool has_ext(const fs::path& p, const char* ext) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e == ext;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        fail(p, "cannot open for reading");
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

template <typename T>
T load(const char* src, bool swap) {
    T v;
    std::memcpy(&v, src, sizeof(T));
    if (swap) {
        char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <typename T>
void store(std::vector<char>& buf, std::size_t off, T v) {
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    std::memcpy(buf.data() + off, &v, sizeof(T));
}

void decode_samples(const fs::path& p, const char* src, std::size_t n, Dtype t, bool swap, double slope, double inter,
                    std::vector<double>& out) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        switch (t) {
        case Dtype::u8: v = static_cast<unsigned char>(src[i]); break;
        case Dtype::i16: v = load<std::int16_t>(src + 2 * i, swap); break;
        case Dtype::f32: v = load<float>(src + 4 * i, swap); break;
        }
        v = v * slope + inter;
        if (!std::isfinite(v))
            fail(p, "non-finite voxel value");
        out[i] = v;
    }
}

std::size_t dtype_bytes(Dtype t) { return t == Dtype::u8 ? 1 : t == Dtype::i16 ? 2 : 4; }

// ---- NIfTI-1 ---------------------------------------------------------------

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

RawImage read_nifti(const fs::path& p) {
    const auto buf = slurp(p);
    if (buf.size() < kHeaderSize)
        fail(p, "file too short for a NIfTI-1 header");
    const char* h = buf.data();
    bool swap = false;
    if (load<std::int32_t>(h, false) != 348) {
        if (load<std::int32_t>(h, true) != 348)
            fail(p, "not a NIfTI-1 file (sizeof_hdr != 348)");
        swap = true;
    }
    if (std::memcmp(h + 344, "n+1", 4) != 0)
        fail(p, "only single-file NIfTI-1 (magic n+1) is supported");

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i)
        dim[i] = load<std::int16_t>(h + 40 + 2 * i, swap);
    const int ndim = dim[0];
    if (ndim < 1 || ndim > 7)
        fail(p, "invalid dim[0]");
    RawImage img;
    for (int a = 0; a < 3; ++a)
        img.geom.dims[a] = a < ndim ? std::max<int>(1, dim[a + 1]) : 1;
    if (ndim >= 4 && dim[4] > 1)
        fail(p, "time series are not supported");
    img.components = ndim >= 5 ? std::max<int>(1, dim[5]) : 1;
    for (int a = 6; a <= ndim; ++a)
        if (dim[a] > 1)
            fail(p, "dimensions beyond the fifth are not supported");

    const auto dt = load<std::int16_t>(h + 70, swap);
    Dtype t;
    switch (dt) {
    case 2: t = Dtype::u8; break;
    case 4: t = Dtype::i16; break;
    case 16: t = Dtype::f32; break;
    default: fail(p, "unsupported datatype " + std::to_string(dt) + " (uint8, int16 and float32 only)");
    }

    float pixdim[8];
    for (int i = 0; i < 8; ++i)
        pixdim[i] = load<float>(h + 76 + 4 * i, swap);
    const float vox_offset = load<float>(h + 108, swap);
    double slope = load<float>(h + 112, swap);
    double inter = load<float>(h + 116, swap);
    if (slope == 0.0 || !std::isfinite(slope)) {
        slope = 1.0;
        inter = 0.0;
    }
    if (!std::isfinite(inter))
        inter = 0.0;
    const auto qform_code = load<std::int16_t>(h + 252, swap);
    const auto sform_code = load<std::int16_t>(h + 254, swap);

    if (sform_code > 0) {
        for (int r = 0; r < 3; ++r) {
            img.geom.origin[r] = load<float>(h + 280 + 16 * r + 12, swap);
        }
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int r = 0; r < 3; ++r) {
                const double v = load<float>(h + 280 + 16 * r + 4 * c, swap);
                s += v * v;
            }
            img.geom.spacing[c] = std::sqrt(s);
        }
    } else {
        for (int a = 0; a < 3; ++a)
            img.geom.spacing[a] = std::abs(pixdim[a + 1]) > 0 ? std::abs(pixdim[a + 1]) : 1.0;
        if (qform_code > 0)
            for (int a = 0; a < 3; ++a)
                img.geom.origin[a] = load<float>(h + 268 + 4 * a, swap);
    }
    img.geom.validate();

    const std::size_t n = img.geom.size() * static_cast<std::size_t>(img.components);
    const auto off = static_cast<std::size_t>(vox_offset < static_cast<float>(kHeaderSize) ? kVoxOffset : vox_offset);
    if (buf.size() < off + n * dtype_bytes(t))
        fail(p, "truncated voxel data");
    decode_samples(p, buf.data() + off, n, t, swap, slope, inter, img.data);
    return img;
}

void write_nifti(const fs::path& p, const RawImage& img, Dtype t) {
    const std::size_t n = img.geom.size() * static_cast<std::size_t>(img.components);
    std::vector<char> buf(kVoxOffset + n * dtype_bytes(t), 0);
    store<std::int32_t>(buf, 0, 348);
    std::int16_t dim[8] = {3, 1, 1, 1, 1, 1, 1, 1};
    for (int a = 0; a < 3; ++a)
        dim[a + 1] = static_cast<std::int16_t>(img.geom.dims[a]);
    if (img.components > 1) {
        dim[0] = 5;
        dim[5] = static_cast<std::int16_t>(img.components);
    }
    for (int i = 0; i < 8; ++i)
        store<std::int16_t>(buf, 40 + 2 * i, dim[i]);
    if (img.components > 1)
        store<std::int16_t>(buf, 68, 1007);  // intent: vector
    const std::int16_t code = t == Dtype::u8 ? 2 : t == Dtype::i16 ? 4 : 16;
    store<std::int16_t>(buf, 70, code);
    store<std::int16_t>(buf, 72, static_cast<std::int16_t>(8 * dtype_bytes(t)));
    float pixdim[8] = {1, 1, 1, 1, 1, 1, 1, 1};
    for (int a = 0; a < 3; ++a)
        pixdim[a + 1] = static_cast<float>(img.geom.spacing[a]);
    for (int i = 0; i < 8; ++i)
        store<float>(buf, 76 + 4 * i, pixdim[i]);
    store<float>(buf, 108, static_cast<float>(kVoxOffset));
    store<float>(buf, 112, 1.0f);
    store<std::uint8_t>(buf, 123, 2);  // xyzt_units: mm
    store<std::int16_t>(buf, 252, 1);
    store<std::int16_t>(buf, 254, 1);
    for (int a = 0; a < 3; ++a)
        store<float>(buf, 268 + 4 * a, static_cast<float>(img.geom.origin[a]));
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
            store<float>(buf, 280 + 16 * r + 4 * c, r == c ? static_cast<float>(img.geom.spacing[r]) : 0.0f);
        store<float>(buf, 280 + 16 * r + 12, static_cast<float>(img.geom.origin[r]));
    }
    std::memcpy(buf.data() + 344, "n+1", 4);

    char* dst = buf.data() + kVoxOffset;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = img.data[i];
        switch (t) {
        case Dtype::u8: dst[i] = static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))); break;
        case Dtype::i16: {
            const auto s = static_cast<std::int16_t>(std::clamp(std::round(v), -32768.0, 32767.0));
            std::memcpy(dst + 2 * i, &s, 2);
            break;
        }
        case Dtype::f32: {
            const auto f = static_cast<float>(v);
            std::memcpy(dst + 4 * i, &f, 4);
            break;
        }
        }
    }
    std::ofstream out(p, std::ios::binary);
    if (!out)
        fail(p, "cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out)
        fail(p, "write failed");
}

// ---- MVOL ------------------------------------------------------------------

RawImage read_mvol(const fs::path& p) {
    const auto buf = slurp(p);
    std::size_t pos = 0;
    auto next_line = [&]() {
        const std::size_t start = pos;
        while (pos < buf.size() && buf[pos] != '\n')
            ++pos;
        if (pos >= buf.size())
            fail(p, "truncated MVOL header");
        std::string line(buf.data() + start, pos - start);
        ++pos;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        return line;
    };
    if (next_line() != "MVOL1")
        fail(p, "missing MVOL1 magic");
    RawImage img;
    auto triple = [&](const char* key, auto& dst) {
        std::istringstream is(next_line());
        std::string k;
        is >> k >> dst[0] >> dst[1] >> dst[2];
        if (k != key || !is)
            fail(p, std::string("malformed MVOL '") + key + "' line");
    };
    triple("dims", img.geom.dims);
    triple("spacing", img.geom.spacing);
    triple("origin", img.geom.origin);
    std::istringstream dl(next_line());
    std::string key, dtype;
    dl >> key >> dtype;
    if (key != "dtype" || (dtype != "f32" && dtype != "u8"))
        fail(p, "malformed MVOL dtype line");
    try {
        img.geom.validate();
    } catch (const std::invalid_argument& e) {
        fail(p, e.what());
    }
    const Dtype t = dtype == "u8" ? Dtype::u8 : Dtype::f32;
    const std::size_t n = img.geom.size();
    if (buf.size() < pos + n * dtype_bytes(t))
        fail(p, "truncated MVOL voxel data");
    decode_samples(p, buf.data() + pos, n, t, std::endian::native != std::endian::little, 1.0, 0.0, img.data);
    return img;
}

void write_mvol(const fs::path& p, const RawImage& img, Dtype t) {
    std::ostringstream hdr;
    hdr.precision(17);
    const auto& g = img.geom;
    hdr << "MVOL1\n"
        << "dims " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n'
        << "spacing " << g.spacing[0] << ' ' << g.spacing[1] << ' ' << g.spacing[2] << '\n'
        << "origin " << g.origin[0] << ' ' << g.origin[1] << ' ' << g.origin[2] << '\n'
        << "dtype " << (t == Dtype::u8 ? "u8" : "f32") << '\n';
    const std::string h = hdr.str();
    std::vector<char> buf(h.begin(), h.end());
    const std::size_t off = buf.size();
    buf.resize(off + img.data.size() * dtype_bytes(t));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        if (t == Dtype::u8)
            buf[off + i] = static_cast<char>(static_cast<unsigned char>(std::clamp(img.data[i], 0.0, 255.0)));
        else
            store<float>(buf, off + 4 * i, static_cast<float>(img.data[i]));
    }
    std::ofstream out(p, std::ios::binary);
    if (!out)
        fail(p, "cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out)
        fail(p, "write failed");
}

RawImage read_raw(const fs::path& p) {
    if (has_ext(p, ".nii"))
        return read_nifti(p);
    if (has_ext(p, ".mvol"))
        return read_mvol(p);
    fail(p, "unknown volume format (expected .nii or .mvol)");
}

void write_raw(const fs::path& p, const RawImage& img, Dtype t) {
    if (has_ext(p, ".nii"))
        write_nifti(p, img, t);
    else if (has_ext(p, ".mvol"))
        write_mvol(p, img, t);
    else
        fail(p, "unknown volume format (expected .nii or .mvol)");
}

RawImage scalar_only(RawImage img, const fs::path& p) {
    if (img.components != 1)
        fail(p, "expected a scalar volume");
    return img;
}

}  // namespace

Volume read_volume(const fs::path& path) {
    RawImage img = scalar_only(read_raw(path), path);
    return Volume(img.geom, std::move(img.data));
}

LabelMap read_labels(const fs::path& path) {
    const RawImage img = scalar_only(read_raw(path), path);
    LabelMap out(img.geom);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = img.data[i] != 0.0;
    return out;
}

void write_volume(const fs::path& path, const Volume& vol) {
    RawImage img{vol.geometry(), 1, vol.storage()};
    write_raw(path, img, Dtype::f32);
}

void write_labels(const fs::path& path, const LabelMap& lab) {
    RawImage img{lab.geometry(), 1, std::vector<double>(lab.data().begin(), lab.data().end())};
    write_raw(path, img, Dtype::u8);
}

AffineTransform read_affine(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        fail(path, "cannot open for reading");
    std::array<double, 16> m{};
    for (int r = 0; r < 4; ++r) {
        std::string line;
        do {
            if (!std::getline(in, line))
                fail(path, "expected 4 rows of 4 numbers");
        } while (line.find_first_not_of(" \t\r") == std::string::npos);
        std::istringstream is(line);
        for (int c = 0; c < 4; ++c)
            if (!(is >> m[4 * r + c]))
                fail(path, "expected 4 numbers on row " + std::to_string(r + 1));
    }
    try {
        return AffineTransform(m);
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

void write_affine(const fs::path& path, const AffineTransform& xform) {
    std::ofstream out(path);
    if (!out)
        fail(path, "cannot open for writing");
    out.precision(17);
    for (int r = 0; r < 4; ++r)
        out << xform(r, 0) << ' ' << xform(r, 1) << ' ' << xform(r, 2) << ' ' << xform(r, 3) << '\n';
}

DisplacementField read_displacement(const fs::path& path) {
    DisplacementField f;
    if (has_ext(path, ".nii")) {
        const RawImage img = read_nifti(path);
        if (img.components != 3)
            fail(path, "displacement field needs dim[5] = 3");
        f = DisplacementField(img.geom);
        const std::size_t n = img.geom.size();
        for (std::size_t i = 0; i < n; ++i)
            f.displacement[i] = {img.data[i], img.data[n + i], img.data[2 * n + i]};
    } else {
        const char* suffix[3] = {".dx", ".dy", ".dz"};
        for (int c = 0; c < 3; ++c) {
            const fs::path part = path.string() + suffix[c];
            const RawImage img = scalar_only(read_mvol(part), part);
            if (c == 0)
                f = DisplacementField(img.geom);
            else if (!(img.geom == f.geometry))
                fail(part, "component geometry differs from .dx");
            for (std::size_t i = 0; i < img.data.size(); ++i)
                f.displacement[i][c] = img.data[i];
        }
    }
    f.validate();
    return f;
}

void write_displacement(const fs::path& path, const DisplacementField& field) {
    field.validate();
    const std::size_t n = field.geometry.size();
    if (has_ext(path, ".nii")) {
        RawImage img{field.geometry, 3, std::vector<double>(3 * n)};
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c)
                img.data[c * n + i] = field.displacement[i][c];
        write_nifti(path, img, Dtype::f32);
    } else {
        const char* suffix[3] = {".dx", ".dy", ".dz"};
        for (int c = 0; c < 3; ++c) {
            RawImage img{field.geometry, 1, std::vector<double>(n)};
            for (std::size_t i = 0; i < n; ++i)
                img.data[i] = field.displacement[i][c];
            write_mvol(path.string() + suffix[c], img, Dtype::f32);
        }
    }
}

}  // namespace mafuse::io
