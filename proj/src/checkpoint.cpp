#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "virlab/classifier.hpp"
#include "virlab/error.hpp"

namespace virlab {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

constexpr std::size_t kMagicSize = 8;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    void bytes(void* p, std::size_t n, const char* what) {
        if (n > in_.size() - pos_)
            throw IoError(std::string("checkpoint truncated while reading ") + what);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint64_t u64(const char* what) {
        std::uint64_t v;
        bytes(&v, sizeof v, what);
        return v;
    }
    std::string str(const char* what) {
        const auto n = u64(what);
        if (n > in_.size() - pos_) throw IoError(std::string("checkpoint truncated while reading ") + what);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; checkpoints stay far below 4 GiB.
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Classifier& model, std::int64_t epoch,
                                            const std::string& rng_state) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["arch"] = {{"activation", "relu"}, {"widths", model.arch().widths}};
    header["epoch"] = epoch;
    header["rng_state"] = rng_state;
    header["num_parameters"] = model.parameters().size();

    Writer w;
    w.bytes(kCheckpointMagic, kMagicSize);
    w.str(header.dump());
    for (const auto& p : model.parameters()) {
        w.str(p.name);
        w.u64(p.value.rank());
        for (auto d : p.value.shape()) w.u64(d);
        auto data = p.value.data();
        w.bytes(data.data(), data.size() * sizeof(double));
    }
    w.u32(crc32_of(w.buffer()));
    return std::move(w.buffer());
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path, std::int64_t epoch,
                     const std::string& rng_state) {
    const auto bytes = encode_checkpoint(model, epoch, rng_state);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagicSize + sizeof(std::uint32_t)) throw IoError("checkpoint too short");
    if (std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize - 1) != 0) throw IoError("not a checkpoint (bad magic)");
    if (bytes[kMagicSize - 1] != static_cast<std::uint8_t>('0' + kCheckpointVersion))
        throw IoError(std::string("unsupported checkpoint format version '") +
                      static_cast<char>(bytes[kMagicSize - 1]) + "'");

    const auto body = bytes.first(bytes.size() - sizeof(std::uint32_t));
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);
    if (stored != crc32_of(body)) throw IoError("checkpoint checksum mismatch (corrupt or truncated file)");

    Reader r(body.subspan(kMagicSize));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str("header"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (header.value("format_version", -1) != kCheckpointVersion)
        throw IoError("unsupported checkpoint format version in header");

    Architecture arch;
    std::size_t count = 0;
    std::int64_t epoch = 0;
    std::string rng_state;
    try {
        arch.widths = header.at("arch").at("widths").get<std::vector<std::size_t>>();
        count = header.at("num_parameters").get<std::size_t>();
        epoch = header.at("epoch").get<std::int64_t>();
        rng_state = header.at("rng_state").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt checkpoint header: ") + e.what());
    }

    std::vector<NamedParameter> params;
    for (std::size_t i = 0; i < count; ++i) {
        auto name = r.str("parameter name");
        const auto rank = r.u64("rank");
        if (rank > 8) throw IoError("implausible rank for parameter '" + name + "'");
        Shape shape(rank);
        for (auto& d : shape) d = r.u64("dims");
        const auto n = shape_numel(shape);
        if (n > r.remaining() / sizeof(double)) throw IoError("checkpoint truncated in payload of '" + name + "'");
        std::vector<double> values(n);
        r.bytes(values.data(), n * sizeof(double), "payload");
        params.push_back({std::move(name), Tensor(std::move(shape), std::move(values), true)});
    }
    if (r.remaining() != 0) throw IoError("trailing bytes in checkpoint");
    try {
        return Checkpoint{Classifier(std::move(arch), std::move(params)), epoch, std::move(rng_state)};
    } catch (const Error& e) {
        throw IoError(std::string("checkpoint does not describe a valid classifier: ") + e.what());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace virlab
