#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bespoke {

struct NoteEvent {
  double onset = 0.0;     // seconds
  double duration = 0.0;  // seconds, > 0
  int pitch = 60;
  int velocity = 100;
  std::size_t track_index = 0;
  int channel = 0;

  bool operator==(const NoteEvent&) const = default;
};

struct Track {
  std::string name;
  std::vector<NoteEvent> events;  // sorted by onset
};

struct TempoChange {
  std::uint64_t tick = 0;
  std::uint32_t micros_per_quarter = 500000;
};

struct Score {
  std::vector<Track> tracks;
  int ticks_per_quarter = 480;
  std::vector<TempoChange> tempo_map;  // sorted, always defined at tick 0
  std::vector<std::string> warnings;
  std::size_t ignored_events = 0;  // pitch bend, CC, aftertouch, program change

  // Seconds at `tick` by integrating the piecewise-constant tempo map.
  double tick_to_seconds(std::uint64_t tick) const;
  // Inverse of tick_to_seconds, rounded to the nearest tick.
  std::uint64_t seconds_to_tick(double seconds) const;
};

// Minimum duration given to notes whose note-off lands on the note-on tick.
inline constexpr double kMinNoteDuration = 0.010;

// Standard MIDI File, format 0 or 1. Format 0 files are split into one track
// per used channel so a target part can still be selected.
Score parse_midi(std::span<const std::uint8_t> bytes);
Score read_midi(const std::filesystem::path& path);

// Format 1 writer; used for bundled fixtures and external renderers.
std::vector<std::uint8_t> encode_midi(const Score& score);

using TrackSelector = std::variant<std::size_t, std::string>;

// Parses "3" as an index and anything else as a track name.
TrackSelector parse_selector(const std::string& text);

struct Partition {
  std::size_t target_track = 0;
  std::vector<NoteEvent> target;
  std::vector<NoteEvent> accompaniment;  // each event keeps its track_index
};

Partition select_target(const Score& score, const TrackSelector& selector);

// Onsets and durations multiplied by `factor` in [0.5, 2.0].
std::vector<NoteEvent> time_scale(std::span<const NoteEvent> events, double factor);

// Groups events by track_index, preserving order within each group.
std::map<std::size_t, std::vector<NoteEvent>> group_by_track(std::span<const NoteEvent> events);

}  // namespace bespoke
