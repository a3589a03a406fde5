// Regenerates the quickstart song: an unaligned transcription (song.mid), the
// mixture to separate (mixture.wav) and its true target stem (target.wav).
#include <cstdio>
#include <filesystem>
#include <string>

#include "bespoke/benchmark.hpp"
#include "bespoke/error.hpp"
#include "bespoke/wav.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s SONG_SPEC.json OUT_DIR\n", argv[0]);
    return 2;
  }
  try {
    const auto bytes = bespoke::read_file(argv[1]);
    const auto spec_json = bespoke::Json::parse(bytes.begin(), bytes.end());
    // Reuse the benchmark schema: a one-song benchmark file.
    const bespoke::BenchConfig config = bespoke::parse_bench_config(spec_json.dump());
    const bespoke::SongSpec& spec = config.songs.at(0);
    const bespoke::SyntheticSong song = bespoke::generate_song(spec, config.sample_rate);

    const std::filesystem::path out = argv[2];
    std::filesystem::create_directories(out);
    const auto midi = bespoke::encode_midi(song.transcription);
    bespoke::write_file(out / "song.mid", midi);
    bespoke::write_wav(out / "mixture.wav", song.mixture, bespoke::WavEncoding::pcm16);
    bespoke::write_wav(out / "target.wav", song.target, bespoke::WavEncoding::pcm16);
    std::printf("wrote %s (%.2f s)\n", out.string().c_str(), song.mixture.duration());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
