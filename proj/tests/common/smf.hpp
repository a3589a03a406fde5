#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace testing_support {

// Hand-assembled Standard MIDI File bytes, written independently of the
// library's encoder so parser tests do not trust the code under test.
class Smf {
 public:
  using Bytes = std::vector<std::uint8_t>;

  static void vlq(Bytes& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = v & 0x7F;
    while (v >>= 7) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7F));
    while (n) out.push_back(buf[--n]);
  }

  // Track body builder; every event is preceded by its delta time.
  struct Track {
    Bytes data;
    Track& delta(std::uint32_t d) {
      vlq(data, d);
      return *this;
    }
    Track& raw(std::initializer_list<int> bytes) {
      for (int b : bytes) data.push_back(static_cast<std::uint8_t>(b));
      return *this;
    }
    Track& on(std::uint32_t d, int ch, int pitch, int vel) { return delta(d).raw({0x90 | ch, pitch, vel}); }
    Track& off(std::uint32_t d, int ch, int pitch) { return delta(d).raw({0x80 | ch, pitch, 64}); }
    Track& tempo(std::uint32_t d, std::uint32_t us) {
      return delta(d).raw({0xFF, 0x51, 0x03, static_cast<int>(us >> 16), static_cast<int>((us >> 8) & 0xFF),
                           static_cast<int>(us & 0xFF)});
    }
    Track& name(const std::string& n) {
      delta(0).raw({0xFF, 0x03});
      vlq(data, static_cast<std::uint32_t>(n.size()));
      data.insert(data.end(), n.begin(), n.end());
      return *this;
    }
    Track& end(std::uint32_t d = 0) { return delta(d).raw({0xFF, 0x2F, 0x00}); }
  };

  static void u16(Bytes& out, int v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  static void u32(Bytes& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
  }

  static Bytes file(int format, int division, const std::vector<Track>& tracks) {
    Bytes out{'M', 'T', 'h', 'd'};
    u32(out, 6);
    u16(out, format);
    u16(out, static_cast<int>(tracks.size()));
    u16(out, division);
    for (const Track& t : tracks) chunk(out, "MTrk", t.data);
    return out;
  }

  static void chunk(Bytes& out, const char* id, const Bytes& body) {
    out.insert(out.end(), id, id + 4);
    u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
  }
};

}  // namespace testing_support
