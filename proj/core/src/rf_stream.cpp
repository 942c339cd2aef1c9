#include "upwave/rf_stream.hpp"

#include <bit>
#include <cstring>

#include "upwave/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "RF capture I/O assumes a little-endian host");

namespace upwave {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_header(const RfStreamHeader& h) {
    std::vector<std::uint8_t> out;
    out.reserve(kRfHeaderBytes);
    for (char c : kRfMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_u16(out, h.version);
    out.push_back(h.n_channels);
    put_u32(out, h.rf_rate_hz);
    put_u32(out, h.prf_hz);
    put_u32(out, h.samples_per_frame);
    put_u32(out, h.element_spacing_um);
    put_u32(out, h.speed_of_sound_mmps);
    return out;
}

RfStreamHeader decode_header(std::span<const std::uint8_t> b) {
    if (b.size() < kRfHeaderBytes) throw Error("unexpected end of stream");
    if (std::memcmp(b.data(), kRfMagic, 4) != 0) throw Error("bad magic, not an RF capture");
    RfStreamHeader h;
    h.version = get_u16(b, 4);
    if (h.version != 1) throw Error("unsupported RF capture version");
    h.n_channels = b[6];
    h.rf_rate_hz = get_u32(b, 7);
    h.prf_hz = get_u32(b, 11);
    h.samples_per_frame = get_u32(b, 15);
    h.element_spacing_um = get_u32(b, 19);
    h.speed_of_sound_mmps = get_u32(b, 23);
    if (h.n_channels == 0 || h.samples_per_frame == 0 || h.rf_rate_hz == 0 || h.prf_hz == 0 ||
        h.speed_of_sound_mmps == 0)
        throw Error("degenerate RF capture header");
    return h;
}

void write_rf(const std::filesystem::path& path, const RfStream& stream) {
    RfFileWriter w(path, stream.header);
    const std::size_t per_tick = stream.header.tick_samples();
    for (std::int64_t t = 0; t < stream.ticks(); ++t) {
        w.append_tick({stream.samples.data() + static_cast<std::size_t>(t) * per_tick, per_tick});
    }
    w.close();
}

RfStream read_rf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open RF capture: " + path.string());
    std::vector<std::uint8_t> hdr(kRfHeaderBytes);
    in.read(reinterpret_cast<char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
    if (in.gcount() != static_cast<std::streamsize>(hdr.size()))
        throw Error("unexpected end of stream");
    RfStream s;
    s.header = decode_header(hdr);

    in.seekg(0, std::ios::end);
    const auto end = static_cast<std::uint64_t>(in.tellg());
    const std::uint64_t payload = end - kRfHeaderBytes;
    const std::uint64_t tick_bytes = s.header.tick_samples() * sizeof(std::int16_t);
    if (payload % tick_bytes != 0) throw Error("unexpected end of stream");
    s.samples.resize(payload / sizeof(std::int16_t));
    in.seekg(kRfHeaderBytes, std::ios::beg);
    in.read(reinterpret_cast<char*>(s.samples.data()), static_cast<std::streamsize>(payload));
    if (in.gcount() != static_cast<std::streamsize>(payload))
        throw Error("unexpected end of stream");
    return s;
}

RfFileWriter::RfFileWriter(const std::filesystem::path& path, const RfStreamHeader& header)
    : out_(path, std::ios::binary), header_(header) {
    if (!out_) throw Error("cannot create RF capture: " + path.string());
    const auto hdr = encode_header(header_);
    out_.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
}

void RfFileWriter::append_tick(std::span<const std::int16_t> tick) {
    if (tick.size() != header_.tick_samples())
        throw Error("tick sample count does not match header");
    out_.write(reinterpret_cast<const char*>(tick.data()),
               static_cast<std::streamsize>(tick.size() * sizeof(std::int16_t)));
    if (!out_) throw Error("short write on RF capture");
}

void RfFileWriter::close() {
    out_.flush();
    if (!out_) throw Error("short write on RF capture");
    out_.close();
}

FileSource::FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open RF capture: " + path.string());
    std::vector<std::uint8_t> hdr(kRfHeaderBytes);
    in_.read(reinterpret_cast<char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
    if (in_.gcount() != static_cast<std::streamsize>(hdr.size()))
        throw Error("unexpected end of stream");
    header_ = decode_header(hdr);
    in_.seekg(0, std::ios::end);
    const auto end = static_cast<std::uint64_t>(in_.tellg());
    const std::uint64_t payload = end - kRfHeaderBytes;
    const std::uint64_t tick_bytes = header_.tick_samples() * sizeof(std::int16_t);
    if (payload % tick_bytes != 0) throw Error("unexpected end of stream");
    ticks_ = static_cast<std::int64_t>(payload / tick_bytes);
    cache_.resize(header_.tick_samples());
}

std::span<const std::int16_t> FileSource::frame(std::int64_t tick, int channel) {
    if (tick < 0 || tick >= ticks_) throw Error("unexpected end of stream");
    if (tick != cached_tick_) {
        const std::uint64_t tick_bytes = header_.tick_samples() * sizeof(std::int16_t);
        in_.seekg(static_cast<std::streamoff>(kRfHeaderBytes +
                                              static_cast<std::uint64_t>(tick) * tick_bytes),
                  std::ios::beg);
        in_.read(reinterpret_cast<char*>(cache_.data()),
                 static_cast<std::streamsize>(tick_bytes));
        if (in_.gcount() != static_cast<std::streamsize>(tick_bytes))
            throw Error("unexpected end of stream");
        cached_tick_ = tick;
    }
    return {cache_.data() + static_cast<std::size_t>(channel) * header_.samples_per_frame,
            header_.samples_per_frame};
}

std::unique_ptr<FrameSource> open_rf(const std::filesystem::path& path,
                                     std::size_t max_resident_bytes) {
    const auto size = std::filesystem::file_size(path);
    if (size <= max_resident_bytes) {
        return std::make_unique<MemorySource>(read_rf(path));
    }
    return std::make_unique<FileSource>(path);
}

}  // namespace upwave
