#include "bespoke/synth.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "bespoke/error.hpp"
#include "bespoke/resample.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace {

std::vector<double> partial_weights(Waveform waveform, int count) {
  using std::numbers::pi;
  std::vector<double> w(static_cast<std::size_t>(count) + 1, 0.0);
  for (int k = 1; k <= count; ++k) {
    const bool odd = k % 2 == 1;
    switch (waveform) {
      case Waveform::sine:
        w[k] = k == 1 ? 1.0 : 0.0;
        break;
      case Waveform::sawtooth:
        w[k] = (odd ? 2.0 : -2.0) / (pi * k);
        break;
      case Waveform::square:
        w[k] = odd ? 4.0 / (pi * k) : 0.0;
        break;
      case Waveform::triangle:
        w[k] = odd ? (((k - 1) / 2) % 2 == 0 ? 1.0 : -1.0) * 8.0 / (pi * pi * k * k) : 0.0;
        break;
    }
  }
  return w;
}

double patch_gain(const Patch& patch) {
  if (std::isinf(patch.gain_db) && patch.gain_db < 0) return 0.0;
  return db_to_gain(patch.gain_db);
}

}  // namespace

void Patch::validate() const {
  require(adsr.attack >= 0 && adsr.decay >= 0 && adsr.release >= 0, "patch: ADSR times must be non-negative");
  require(adsr.sustain >= 0 && adsr.sustain <= 1, "patch: sustain level must lie in [0, 1]");
  require(std::abs(detune_cents) <= 100, "patch: |detune| must not exceed 100 cents");
  require(vibrato.rate_hz >= 0 && vibrato.depth_cents >= 0, "patch: vibrato rate and depth must be non-negative");
  require(std::isfinite(gain_db) || gain_db < 0, "patch: gain must be finite or -infinity");
}

void PatchBank::validate() const {
  for (const auto& [name, patches] : instruments) {
    if (patches.empty()) fail(Errc::configuration, "patch bank: instrument \"" + name + "\" has no patches");
    for (const Patch& p : patches) p.validate();
  }
}

const Patch& PatchBank::at(const std::string& instrument, std::size_t index) const {
  auto it = instruments.find(instrument);
  if (it == instruments.end()) fail(Errc::configuration, "patch bank has no instrument \"" + instrument + "\"");
  if (index >= it->second.size()) {
    fail(Errc::configuration, "instrument \"" + instrument + "\" has no patch " + std::to_string(index));
  }
  return it->second[index];
}

double midi_pitch_to_hz(int pitch, double detune_cents) {
  require(pitch >= 0 && pitch <= 127, "MIDI pitch " + std::to_string(pitch) + " outside [0, 127]");
  return 440.0 * std::pow(2.0, (pitch - 69 + detune_cents / 100.0) / 12.0);
}

double envelope_at(const Adsr& adsr, double t, double hold) {
  const auto sustained = [&](double u) {
    if (u < adsr.attack) return u / adsr.attack;
    if (u < adsr.attack + adsr.decay) return 1.0 - (1.0 - adsr.sustain) * (u - adsr.attack) / adsr.decay;
    return adsr.sustain;
  };
  if (t < hold) return sustained(t);
  if (adsr.release <= 0) return 0.0;
  return sustained(hold) * std::max(0.0, 1.0 - (t - hold) / adsr.release);
}

AudioClip render_note(const NoteEvent& note, const Patch& patch, int sample_rate) {
  require(sample_rate > 0, "render_note: sample rate must be positive");
  require(note.duration > 0, "render_note: duration must be positive");
  require(note.velocity >= 1 && note.velocity <= 127, "render_note: velocity outside [1, 127]");
  patch.validate();

  const double f0 = midi_pitch_to_hz(note.pitch, patch.detune_cents);
  const double nyquist = sample_rate / 2.0;
  const double f_max = f0 * std::pow(2.0, patch.vibrato.depth_cents / 1200.0);
  const int partials = f_max >= nyquist ? 0 : static_cast<int>(std::ceil(nyquist / f_max)) - 1;
  const auto weights = partial_weights(patch.waveform, partials);

  const std::size_t length =
      std::max<std::size_t>(1, seconds_to_samples(note.duration + patch.adsr.release, sample_rate));
  AudioClip out = AudioClip::zeros(length, sample_rate);
  const double amplitude = note.velocity / 127.0 * patch_gain(patch);
  if (amplitude == 0.0 || partials == 0) return out;

  const double two_pi = 2.0 * std::numbers::pi;
  const bool vibrato = patch.vibrato.depth_cents > 0 && patch.vibrato.rate_hz > 0;
  double phase = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double t = static_cast<double>(n) / sample_rate;
    // sin(k*phase) by the Chebyshev recurrence.
    const double s1 = std::sin(phase);
    const double c2 = 2.0 * std::cos(phase);
    double prev = 0.0;
    double cur = s1;
    double acc = weights[1] * s1;
    for (int k = 2; k <= partials; ++k) {
      const double next = c2 * cur - prev;
      prev = cur;
      cur = next;
      acc += weights[k] * cur;
    }
    out.samples[n] = amplitude * envelope_at(patch.adsr, t, note.duration) * acc;

    double f = f0;
    if (vibrato) {
      f *= std::pow(2.0, patch.vibrato.depth_cents / 1200.0 * std::sin(two_pi * patch.vibrato.rate_hz * t));
    }
    phase += two_pi * f / sample_rate;
    if (phase >= two_pi) phase -= two_pi;
  }
  return out;
}

AudioClip render_events(std::span<const NoteEvent> events, const Patch& patch, int sample_rate) {
  if (events.empty()) fail(Errc::empty_score, "render_events: no note events to render");
  std::vector<std::pair<std::size_t, AudioClip>> notes;
  notes.reserve(events.size());
  std::size_t length = 0;
  for (const NoteEvent& e : events) {
    require(e.onset >= 0, "render_events: negative onset");
    const std::size_t start = seconds_to_samples(e.onset, sample_rate);
    AudioClip clip = render_note(e, patch, sample_rate);
    length = std::max(length, start + clip.size());
    notes.emplace_back(start, std::move(clip));
  }
  AudioClip out = AudioClip::zeros(length, sample_rate);
  for (const auto& [start, clip] : notes) {
    for (std::size_t i = 0; i < clip.size(); ++i) out.samples[start + i] += clip.samples[i];
  }
  return out;
}

AudioClip render_accompaniment(const std::map<std::size_t, std::vector<NoteEvent>>& tracks, const PatchBank& bank,
                               const std::map<std::size_t, PatchChoice>& assignment, int sample_rate) {
  AudioClip out = AudioClip::zeros(0, sample_rate);
  for (const auto& [track, events] : tracks) {
    auto it = assignment.find(track);
    if (it == assignment.end()) {
      fail(Errc::configuration, "no patch assigned to accompaniment track " + std::to_string(track));
    }
    if (events.empty()) continue;
    out = add(out, render_events(events, bank.at(it->second.instrument, it->second.index), sample_rate));
  }
  return out;
}

AudioClip ExternalRenderer::render(const Score& score, const std::filesystem::path& work_dir, int sample_rate) const {
  std::filesystem::create_directories(work_dir);
  const auto midi = work_dir / "render-input.mid";
  const auto wav = work_dir / "render-output.wav";
  write_file(midi, encode_midi(score));
  std::filesystem::remove(wav);

  std::string cmd = command_;
  const auto substitute = [&cmd](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = cmd.find(key)) != std::string::npos;) cmd.replace(pos, key.size(), value);
  };
  substitute("{midi}", "'" + midi.string() + "'");
  substitute("{wav}", "'" + wav.string() + "'");
  const int status = std::system(cmd.c_str());
  if (status != 0) fail(Errc::runtime, "external renderer exited with status " + std::to_string(status));
  return load_audio(wav, sample_rate);
}

}  // namespace bespoke
