#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bespoke/audio.hpp"

namespace bespoke {

enum class WavEncoding { pcm16, pcm24, float32 };

// Decodes a RIFF/WAVE byte buffer. 16/24-bit PCM and 32-bit float, any channel
// count; multichannel input is averaged down to mono.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding);

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::float32);

// read_wav followed by resampling to `project_rate` when the rates differ.
AudioClip load_audio(const std::filesystem::path& path, int project_rate);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace bespoke
