#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <vector>

namespace upwave {

/// Fixed 27-byte little-endian header of the RF capture format:
/// magic "UPRF", u16 version, u8 n_channels, then u32 rf_rate_hz, prf_hz,
/// samples_per_frame, element_spacing_um, speed_of_sound_mmps. Frames of
/// int16 samples follow, channel-major within each PRF tick.
struct RfStreamHeader {
    std::uint16_t version = 1;
    std::uint8_t n_channels = 3;
    std::uint32_t rf_rate_hz = 80'000'000;
    std::uint32_t prf_hz = 2'000;
    std::uint32_t samples_per_frame = 3'200;
    std::uint32_t element_spacing_um = 18'000;
    std::uint32_t speed_of_sound_mmps = 1'480'000;

    std::size_t tick_samples() const {
        return static_cast<std::size_t>(n_channels) * samples_per_frame;
    }
    double element_spacing_m() const { return element_spacing_um * 1e-6; }
    double speed_of_sound_mps() const { return speed_of_sound_mmps * 1e-3; }
};

inline constexpr char kRfMagic[4] = {'U', 'P', 'R', 'F'};
inline constexpr std::size_t kRfHeaderBytes = 27;

/// A whole capture held in memory, samples laid out [tick][channel][sample].
struct RfStream {
    RfStreamHeader header;
    std::vector<std::int16_t> samples;

    std::int64_t ticks() const {
        return header.tick_samples() == 0
                   ? 0
                   : static_cast<std::int64_t>(samples.size() / header.tick_samples());
    }
    std::span<const std::int16_t> frame(std::int64_t tick, int channel) const {
        const std::size_t off = static_cast<std::size_t>(tick) * header.tick_samples() +
                                static_cast<std::size_t>(channel) * header.samples_per_frame;
        return {samples.data() + off, header.samples_per_frame};
    }
};

std::vector<std::uint8_t> encode_header(const RfStreamHeader& h);
RfStreamHeader decode_header(std::span<const std::uint8_t> bytes);

void write_rf(const std::filesystem::path& path, const RfStream& stream);
RfStream read_rf(const std::filesystem::path& path);

/// Incremental writer so long captures never have to sit in memory.
class RfFileWriter {
  public:
    RfFileWriter(const std::filesystem::path& path, const RfStreamHeader& header);
    /// One PRF tick: all channels back to back, n_channels*samples_per_frame.
    void append_tick(std::span<const std::int16_t> tick);
    void close();

  private:
    std::ofstream out_;
    RfStreamHeader header_;
};

/// Random access to the frames of a capture. Implementations may reuse an
/// internal buffer, so a returned span is valid only until the next frame()
/// call on the same object; use one source per thread.
class FrameSource {
  public:
    virtual ~FrameSource() = default;
    virtual const RfStreamHeader& header() const = 0;
    virtual std::int64_t ticks() const = 0;
    virtual std::span<const std::int16_t> frame(std::int64_t tick, int channel) = 0;
};

class MemorySource final : public FrameSource {
  public:
    explicit MemorySource(RfStream stream) : stream_(std::move(stream)) {}
    const RfStreamHeader& header() const override { return stream_.header; }
    std::int64_t ticks() const override { return stream_.ticks(); }
    std::span<const std::int16_t> frame(std::int64_t tick, int channel) override {
        return stream_.frame(tick, channel);
    }
    const RfStream& stream() const { return stream_; }

  private:
    RfStream stream_;
};

/// Seekable file-backed source; caches the most recently read tick so the
/// usual scan order (all channels of a tick, then the next tick) costs one
/// read per tick.
class FileSource final : public FrameSource {
  public:
    explicit FileSource(const std::filesystem::path& path);
    const RfStreamHeader& header() const override { return header_; }
    std::int64_t ticks() const override { return ticks_; }
    std::span<const std::int16_t> frame(std::int64_t tick, int channel) override;

  private:
    std::ifstream in_;
    RfStreamHeader header_;
    std::int64_t ticks_ = 0;
    std::int64_t cached_tick_ = -1;
    std::vector<std::int16_t> cache_;
};

/// Opens a capture for reading; memory-resident if its payload fits
/// max_resident_bytes, streamed from disk otherwise.
std::unique_ptr<FrameSource> open_rf(const std::filesystem::path& path,
                                     std::size_t max_resident_bytes = 256u << 20);

}  // namespace upwave
