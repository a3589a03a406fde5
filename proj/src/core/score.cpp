#include "bespoke/score.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <deque>
#include <optional>
#include <map>
#include <set>
#include <tuple>

#include "bespoke/error.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace {

constexpr std::uint32_t kDefaultTempo = 500000;

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::size_t base) : bytes_(bytes), base_(base) {}

  std::size_t offset() const { return base_ + pos_; }
  bool done() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8(const char* what) {
    if (done()) throw ParseError(std::string("truncated data reading ") + what, offset());
    return bytes_[pos_++];
  }
  std::uint8_t peek(const char* what) const {
    if (done()) throw ParseError(std::string("truncated data reading ") + what, offset());
    return bytes_[pos_];
  }
  std::uint32_t be(int width, const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | u8(what);
    return v;
  }
  std::uint32_t varlen(const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8(what);
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw ParseError(std::string("variable-length quantity longer than 4 bytes in ") + what, offset());
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n) throw ParseError(std::string("truncated data reading ") + what, offset());
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

struct RawNote {
  std::uint64_t on_tick = 0;
  std::uint64_t off_tick = 0;
  int pitch = 0;
  int velocity = 0;
  int channel = 0;
  std::size_t sequence = 0;  // arrival order of the note-on
};

struct RawTrack {
  std::string name;
  bool named = false;
  std::vector<RawNote> notes;
  std::set<int> channels;
};

struct TempoEvent {
  std::uint64_t tick;
  std::size_t order;
  std::uint32_t tempo;
};

RawTrack parse_track(ByteReader& r, std::size_t track_number, std::vector<TempoEvent>& tempos, Score& score) {
  RawTrack track;
  std::map<std::pair<int, int>, std::deque<std::pair<std::uint64_t, RawNote>>> pending;
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  std::size_t sequence = 0;
  std::size_t stray_offs = 0;
  bool ended = false;

  while (!r.done() && !ended) {
    tick += r.varlen("delta time");
    std::uint8_t status = r.peek("status byte");
    if (status & 0x80) {
      r.u8("status byte");
    } else {
      if (running == 0) throw ParseError("data byte without running status", r.offset());
      status = running;
    }

    if (status >= 0x80 && status <= 0xEF) {
      running = status;
      const int kind = status & 0xF0;
      const int channel = status & 0x0F;
      const std::uint8_t d1 = r.u8("channel message");
      const std::uint8_t d2 = (kind == 0xC0 || kind == 0xD0) ? 0 : r.u8("channel message");
      if ((d1 | d2) & 0x80) throw ParseError("data byte with high bit set", r.offset() - 1);
      const bool on = kind == 0x90 && d2 > 0;
      const bool off = kind == 0x80 || (kind == 0x90 && d2 == 0);
      if (on) {
        RawNote note;
        note.on_tick = tick;
        note.pitch = d1;
        note.velocity = d2;
        note.channel = channel;
        note.sequence = sequence++;
        pending[{channel, d1}].emplace_back(tick, note);
        track.channels.insert(channel);
      } else if (off) {
        auto it = pending.find({channel, d1});
        if (it == pending.end() || it->second.empty()) {
          ++stray_offs;
          continue;
        }
        RawNote note = it->second.front().second;
        it->second.pop_front();
        note.off_tick = tick;
        track.notes.push_back(note);
      } else {
        ++score.ignored_events;
      }
    } else if (status == 0xF0 || status == 0xF7) {
      running = 0;
      r.take(r.varlen("sysex length"), "sysex payload");
    } else if (status == 0xFF) {
      running = 0;
      const std::uint8_t type = r.u8("meta type");
      const auto payload = r.take(r.varlen("meta length"), "meta payload");
      if (type == 0x2F) {
        ended = true;
      } else if (type == 0x51) {
        if (payload.size() != 3) throw ParseError("tempo meta event must carry 3 bytes", r.offset());
        const std::uint32_t tempo = (payload[0] << 16) | (payload[1] << 8) | payload[2];
        if (tempo == 0) throw ParseError("zero tempo", r.offset());
        tempos.push_back({tick, tempos.size(), tempo});
      } else if (type == 0x03 && !track.named) {
        track.name.assign(payload.begin(), payload.end());
        track.named = true;
      }
    } else {
      throw ParseError("invalid status byte in track data", r.offset() - 1);
    }
  }

  std::size_t unmatched = 0;
  for (auto& [key, queue] : pending) {
    for (auto& [on_tick, note] : queue) {
      note.off_tick = tick;
      track.notes.push_back(note);
      ++unmatched;
    }
  }
  if (unmatched > 0) {
    score.warnings.push_back("track " + std::to_string(track_number) + ": " + std::to_string(unmatched) +
                             " note-on(s) without note-off closed at end of track");
  }
  if (stray_offs > 0) {
    score.warnings.push_back("track " + std::to_string(track_number) + ": " + std::to_string(stray_offs) +
                             " note-off(s) without matching note-on ignored");
  }
  std::sort(track.notes.begin(), track.notes.end(),
            [](const RawNote& a, const RawNote& b) { return a.sequence < b.sequence; });
  return track;
}

Track to_track(const RawTrack& raw, const Score& score, std::size_t index, std::string name,
               std::optional<int> channel_filter) {
  Track track;
  track.name = std::move(name);
  for (const RawNote& n : raw.notes) {
    if (channel_filter && n.channel != *channel_filter) continue;
    NoteEvent e;
    e.onset = score.tick_to_seconds(n.on_tick);
    e.duration = std::max(score.tick_to_seconds(n.off_tick) - e.onset, kMinNoteDuration);
    e.pitch = n.pitch;
    e.velocity = n.velocity;
    e.channel = n.channel;
    e.track_index = index;
    track.events.push_back(e);
  }
  std::stable_sort(track.events.begin(), track.events.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
  return track;
}

}  // namespace

double Score::tick_to_seconds(std::uint64_t tick) const {
  double seconds = 0.0;
  for (std::size_t i = 0; i < tempo_map.size(); ++i) {
    const std::uint64_t start = tempo_map[i].tick;
    if (start >= tick) break;
    const std::uint64_t end = i + 1 < tempo_map.size() ? std::min(tempo_map[i + 1].tick, tick) : tick;
    seconds += static_cast<double>(end - start) * tempo_map[i].micros_per_quarter /
               (static_cast<double>(ticks_per_quarter) * 1e6);
  }
  return seconds;
}

std::uint64_t Score::seconds_to_tick(double seconds) const {
  require(seconds >= 0.0, "seconds_to_tick: negative time");
  double elapsed = 0.0;
  for (std::size_t i = 0; i < tempo_map.size(); ++i) {
    const double per_tick = tempo_map[i].micros_per_quarter / (static_cast<double>(ticks_per_quarter) * 1e6);
    const bool last = i + 1 == tempo_map.size();
    const double span = last ? 0.0 : static_cast<double>(tempo_map[i + 1].tick - tempo_map[i].tick) * per_tick;
    if (last || seconds < elapsed + span) {
      return tempo_map[i].tick + static_cast<std::uint64_t>(std::llround((seconds - elapsed) / per_tick));
    }
    elapsed += span;
  }
  return 0;
}

Score parse_midi(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, 0);
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "MThd") {
    throw ParseError("missing MThd header", 0);
  }
  r.take(4, "header tag");
  const std::uint32_t header_len = r.be(4, "header length");
  if (header_len < 6) throw ParseError("header chunk shorter than 6 bytes", r.offset());
  auto header = r.take(header_len, "header chunk");
  const int format = (header[0] << 8) | header[1];
  const int declared_tracks = (header[2] << 8) | header[3];
  const int division = (header[4] << 8) | header[5];
  if (format == 2) fail(Errc::unsupported_format, "SMF format 2 (independent sequences) is not supported");
  if (format > 2) fail(Errc::unsupported_format, "unknown SMF format " + std::to_string(format));
  if (division & 0x8000) fail(Errc::unsupported_format, "SMPTE time division is not supported");
  if (division == 0) throw ParseError("zero ticks per quarter note", 12);

  Score score;
  score.ticks_per_quarter = division;
  std::vector<TempoEvent> tempos;
  std::vector<RawTrack> raw;
  while (static_cast<int>(raw.size()) < declared_tracks) {
    if (r.done()) {
      throw ParseError("file ends after " + std::to_string(raw.size()) + " of " +
                           std::to_string(declared_tracks) + " tracks",
                       r.offset());
    }
    const std::size_t chunk_start = r.offset();
    const auto tag = r.take(4, "chunk tag");
    const std::uint32_t len = r.be(4, "chunk length");
    if (r.remaining() < len) {
      throw ParseError("truncated chunk: declares " + std::to_string(len) + " bytes, " +
                           std::to_string(r.remaining()) + " available",
                       chunk_start);
    }
    const std::size_t body_offset = r.offset();
    auto body = r.take(len, "chunk body");
    if (std::string(tag.begin(), tag.end()) != "MTrk") continue;  // alien chunk
    ByteReader tr(body, body_offset);
    raw.push_back(parse_track(tr, raw.size(), tempos, score));
  }

  std::stable_sort(tempos.begin(), tempos.end(),
                   [](const TempoEvent& a, const TempoEvent& b) { return a.tick < b.tick; });
  for (const TempoEvent& t : tempos) {
    if (!score.tempo_map.empty() && score.tempo_map.back().tick == t.tick) {
      score.tempo_map.back().micros_per_quarter = t.tempo;
    } else {
      score.tempo_map.push_back({t.tick, t.tempo});
    }
  }
  if (score.tempo_map.empty() || score.tempo_map.front().tick != 0) {
    score.tempo_map.insert(score.tempo_map.begin(), {0, kDefaultTempo});
  }
  if (score.ignored_events > 0) {
    score.warnings.push_back(std::to_string(score.ignored_events) +
                             " controller/pitch-bend/program events ignored");
  }

  for (std::size_t i = 0; i < raw.size(); ++i) {
    const RawTrack& t = raw[i];
    const std::string base = t.named ? t.name : "track-" + std::to_string(i);
    if (format == 0 && t.channels.size() > 1) {
      for (int ch : t.channels) {
        const std::string name = t.named ? t.name + " ch" + std::to_string(ch) : "channel-" + std::to_string(ch);
        score.tracks.push_back(to_track(t, score, score.tracks.size(), name, ch));
      }
    } else {
      score.tracks.push_back(to_track(t, score, score.tracks.size(), base, std::nullopt));
    }
  }
  return score;
}

Score read_midi(const std::filesystem::path& path) { return parse_midi(read_file(path)); }

namespace {

void put_varlen(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back((v >> (8 * i)) & 0xFF);
}

struct WireEvent {
  std::uint64_t tick;
  int priority;  // offs before ons at the same tick
  std::vector<std::uint8_t> data;
};

void put_track(std::vector<std::uint8_t>& out, std::vector<WireEvent> events) {
  std::stable_sort(events.begin(), events.end(), [](const WireEvent& a, const WireEvent& b) {
    return std::tie(a.tick, a.priority) < std::tie(b.tick, b.priority);
  });
  std::vector<std::uint8_t> body;
  std::uint64_t last = 0;
  for (const WireEvent& e : events) {
    put_varlen(body, static_cast<std::uint32_t>(e.tick - last));
    body.insert(body.end(), e.data.begin(), e.data.end());
    last = e.tick;
  }
  put_varlen(body, 0);
  body.insert(body.end(), {0xFF, 0x2F, 0x00});
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_be(out, static_cast<std::uint32_t>(body.size()), 4);
  out.insert(out.end(), body.begin(), body.end());
}

}  // namespace

std::vector<std::uint8_t> encode_midi(const Score& score) {
  require(score.ticks_per_quarter > 0 && score.ticks_per_quarter < 0x8000, "encode_midi: bad ticks_per_quarter");
  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_be(out, 6, 4);
  put_be(out, 1, 2);
  put_be(out, static_cast<std::uint32_t>(score.tracks.size() + 1), 2);
  put_be(out, static_cast<std::uint32_t>(score.ticks_per_quarter), 2);

  std::vector<WireEvent> conductor;
  for (const TempoChange& t : score.tempo_map) {
    conductor.push_back({t.tick, 0,
                         {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(t.micros_per_quarter >> 16),
                          static_cast<std::uint8_t>(t.micros_per_quarter >> 8),
                          static_cast<std::uint8_t>(t.micros_per_quarter)}});
  }
  put_track(out, conductor);

  for (const Track& track : score.tracks) {
    std::vector<WireEvent> events;
    std::vector<std::uint8_t> name{0xFF, 0x03};
    put_varlen(name, static_cast<std::uint32_t>(track.name.size()));
    name.insert(name.end(), track.name.begin(), track.name.end());
    events.push_back({0, -1, name});
    for (const NoteEvent& e : track.events) {
      const auto ch = static_cast<std::uint8_t>(e.channel & 0x0F);
      const std::uint64_t on = score.seconds_to_tick(e.onset);
      const std::uint64_t off = std::max(on + 1, score.seconds_to_tick(e.onset + e.duration));
      events.push_back({on, 1,
                        {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(e.pitch),
                         static_cast<std::uint8_t>(e.velocity)}});
      events.push_back({off, 0, {static_cast<std::uint8_t>(0x80 | ch), static_cast<std::uint8_t>(e.pitch), 0}});
    }
    put_track(out, std::move(events));
  }
  return out;
}

TrackSelector parse_selector(const std::string& text) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return static_cast<std::size_t>(std::stoull(text));
  }
  return text;
}

Partition select_target(const Score& score, const TrackSelector& selector) {
  std::string listing;
  for (std::size_t i = 0; i < score.tracks.size(); ++i) {
    listing += (i ? ", " : "") + std::to_string(i) + ":\"" + score.tracks[i].name + "\"";
  }
  const std::string available = " (available tracks: " + (listing.empty() ? std::string("none") : listing) + ")";

  std::size_t index = 0;
  if (const auto* i = std::get_if<std::size_t>(&selector)) {
    if (*i >= score.tracks.size()) fail(Errc::selector, "track index " + std::to_string(*i) + " out of range" + available);
    index = *i;
  } else {
    const auto& name = std::get<std::string>(selector);
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < score.tracks.size(); ++i) {
      if (score.tracks[i].name == name) hits.push_back(i);
    }
    if (hits.empty()) fail(Errc::selector, "no track named \"" + name + "\"" + available);
    if (hits.size() > 1) fail(Errc::selector, "track name \"" + name + "\" is ambiguous" + available);
    index = hits.front();
  }

  Partition p;
  p.target_track = index;
  for (std::size_t i = 0; i < score.tracks.size(); ++i) {
    auto& dest = i == index ? p.target : p.accompaniment;
    dest.insert(dest.end(), score.tracks[i].events.begin(), score.tracks[i].events.end());
  }
  std::stable_sort(p.accompaniment.begin(), p.accompaniment.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
  return p;
}

std::vector<NoteEvent> time_scale(std::span<const NoteEvent> events, double factor) {
  require(factor >= 0.5 && factor <= 2.0, "time_scale: factor " + std::to_string(factor) + " outside [0.5, 2.0]");
  std::vector<NoteEvent> out(events.begin(), events.end());
  for (NoteEvent& e : out) {
    e.onset *= factor;
    e.duration *= factor;
  }
  return out;
}

std::map<std::size_t, std::vector<NoteEvent>> group_by_track(std::span<const NoteEvent> events) {
  std::map<std::size_t, std::vector<NoteEvent>> out;
  for (const NoteEvent& e : events) out[e.track_index].push_back(e);
  return out;
}

}  // namespace bespoke
