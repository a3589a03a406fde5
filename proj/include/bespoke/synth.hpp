#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bespoke/audio.hpp"
#include "bespoke/score.hpp"

namespace bespoke {

enum class Waveform { sine, sawtooth, square, triangle };

struct Adsr {
  double attack = 0.01;  // seconds
  double decay = 0.05;
  double sustain = 0.8;  // level in [0, 1]
  double release = 0.05;
};

struct Vibrato {
  double rate_hz = 0.0;
  double depth_cents = 0.0;
};

struct Patch {
  Waveform waveform = Waveform::sawtooth;
  Adsr adsr;
  double detune_cents = 0.0;
  Vibrato vibrato;
  double gain_db = 0.0;  // -infinity mutes the patch

  void validate() const;
};

// instrument name -> alternative patches for that instrument
struct PatchBank {
  std::map<std::string, std::vector<Patch>> instruments;

  void validate() const;
  const Patch& at(const std::string& instrument, std::size_t index) const;
};

struct PatchChoice {
  std::string instrument;
  std::size_t index = 0;
};

double midi_pitch_to_hz(int pitch, double detune_cents = 0.0);

// ADSR gain at time t (seconds since onset) for a note released at `hold`.
double envelope_at(const Adsr& adsr, double t, double hold);

AudioClip render_note(const NoteEvent& note, const Patch& patch, int sample_rate);

// Notes summed at their onsets; the clip is not normalized.
AudioClip render_events(std::span<const NoteEvent> events, const Patch& patch, int sample_rate);

// Each track rendered with its assigned patch and summed at unity gain.
AudioClip render_accompaniment(const std::map<std::size_t, std::vector<NoteEvent>>& tracks, const PatchBank& bank,
                               const std::map<std::size_t, PatchChoice>& assignment, int sample_rate);

// Shells out to a user-supplied renderer. `command` may reference {midi} and
// {wav}; the process must exit 0 and leave a WAV at {wav}.
class ExternalRenderer {
 public:
  explicit ExternalRenderer(std::string command) : command_(std::move(command)) {}

  AudioClip render(const Score& score, const std::filesystem::path& work_dir, int sample_rate) const;

 private:
  std::string command_;
};

}  // namespace bespoke
