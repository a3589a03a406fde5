#include "bespoke/wav.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "bespoke/error.hpp"
#include "bespoke/resample.hpp"

namespace bespoke {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      fail(Errc::unsupported_format,
           "malformed WAV: truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::string tag() {
    need(4);
    std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Format {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const std::uint8_t* p, const Format& f) {
  if (f.tag == kFormatFloat) {
    std::uint32_t bits = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
  }
  if (f.bits == 16) {
    const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
    return v / 32767.0;
  }
  // 24-bit, sign-extended through the top byte.
  std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
  if (v & 0x800000) v |= ~0xFFFFFF;
  return v / 8388607.0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 12 || r.tag() != "RIFF") {
    fail(Errc::unsupported_format, "not a RIFF file");
  }
  r.u32();
  if (r.tag() != "WAVE") fail(Errc::unsupported_format, "RIFF file is not WAVE");

  std::optional<Format> fmt;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  while (r.remaining() >= 8 && !(fmt && have_data)) {
    const std::string id = r.tag();
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) fail(Errc::unsupported_format, "malformed WAV: short fmt chunk");
      Reader chunk(r.take(size));
      Format f;
      f.tag = chunk.u16();
      f.channels = chunk.u16();
      f.rate = chunk.u32();
      chunk.u32();  // byte rate
      chunk.u16();  // block align
      f.bits = chunk.u16();
      if (f.tag == kFormatExtensible) {
        if (size < 40) fail(Errc::unsupported_format, "malformed WAV: short extensible fmt");
        chunk.u16();  // cbSize
        chunk.u16();  // valid bits
        chunk.u32();  // channel mask
        f.tag = chunk.u16();  // leading two bytes of the subformat GUID
      }
      fmt = f;
    } else if (id == "data") {
      // Some writers leave the data size at 0 or oversize it when streaming.
      const std::size_t n = std::min<std::size_t>(size, r.remaining());
      data = r.take(n);
      have_data = true;
    } else {
      r.skip(std::min<std::size_t>(size, r.remaining()));
    }
    if ((size & 1) && r.remaining() > 0) r.skip(1);
  }
  if (!fmt) fail(Errc::unsupported_format, "malformed WAV: missing fmt chunk");
  if (!have_data) fail(Errc::unsupported_format, "malformed WAV: missing data chunk");

  const Format& f = *fmt;
  const bool pcm_ok = f.tag == kFormatPcm && (f.bits == 16 || f.bits == 24);
  const bool float_ok = f.tag == kFormatFloat && f.bits == 32;
  if (!pcm_ok && !float_ok) {
    fail(Errc::unsupported_format, "unsupported WAV codec (format tag " + std::to_string(f.tag) +
                                       ", " + std::to_string(f.bits) + " bits)");
  }
  if (f.channels == 0 || f.rate == 0) fail(Errc::unsupported_format, "malformed WAV: zero channels or rate");

  const std::size_t width = f.bits / 8;
  const std::size_t frame = width * f.channels;
  const std::size_t frames = data.size() / frame;
  AudioClip clip = AudioClip::zeros(frames, static_cast<int>(f.rate));
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < f.channels; ++c) {
      acc += decode_sample(data.data() + i * frame + c * width, f);
    }
    clip.samples[i] = f.channels == 1 ? acc : acc / f.channels;
  }
  validate(clip);
  return clip;
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding) {
  validate(clip);
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : encoding == WavEncoding::pcm24 ? 24 : 32;
  const std::uint16_t tag = encoding == WavEncoding::float32 ? kFormatFloat : kFormatPcm;
  const std::uint32_t width = bits / 8;
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.size() * width);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size + 1);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size + (data_size & 1));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * width);
  put_u16(out, static_cast<std::uint16_t>(width));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);

  for (std::size_t i = 0; i < clip.size(); ++i) {
    const double x = clip.samples[i];
    if (encoding == WavEncoding::float32) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
      continue;
    }
    if (std::abs(x) > 1.0) {
      fail(Errc::out_of_range, "sample " + std::to_string(i) + " (" + std::to_string(x) +
                                   ") exceeds full scale for integer PCM");
    }
    const double full = encoding == WavEncoding::pcm16 ? 32767.0 : 8388607.0;
    const auto q = static_cast<std::int32_t>(std::lround(x * full));
    out.push_back(q & 0xFF);
    out.push_back((q >> 8) & 0xFF);
    if (encoding == WavEncoding::pcm24) out.push_back((q >> 16) & 0xFF);
  }
  if (data_size & 1) out.push_back(0);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "short write to " + path.string());
}

AudioClip read_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  write_file(path, encode_wav(clip, encoding));
}

AudioClip load_audio(const std::filesystem::path& path, int project_rate) {
  AudioClip clip = read_wav(path);
  if (clip.sample_rate != project_rate) clip = resample(clip, project_rate);
  return clip;
}

}  // namespace bespoke
