#include "bespoke/surrogate.hpp"

#include <algorithm>

#include "bespoke/error.hpp"

namespace bespoke {

TargetRenderFn make_target_renderer(std::vector<NoteEvent> target, std::vector<Patch> patches, int sample_rate) {
  if (target.empty()) fail(Errc::empty_score, "target track has no notes");
  require(!patches.empty(), "target renderer needs at least one patch");
  return [target = std::move(target), patches = std::move(patches), sample_rate](std::size_t index, double factor) {
    require(index < patches.size(), "target patch index out of range");
    const auto events = factor == 1.0 ? target : time_scale(target, factor);
    return render_events(events, patches[index], sample_rate);
  };
}

BackgroundSource synthesize_background(const std::map<std::size_t, std::vector<NoteEvent>>& tracks,
                                       const PatchBank& bank, const std::map<std::size_t, std::string>& instruments,
                                       int variants, int sample_rate) {
  require(variants >= 1, "background needs at least one variant");
  if (tracks.empty()) fail(Errc::empty_score, "no accompaniment notes to synthesize");
  std::size_t distinct = 1;
  for (const auto& [track, _] : tracks) {
    auto it = instruments.find(track);
    if (it == instruments.end())
      fail(Errc::configuration, "accompaniment track " + std::to_string(track) + " has no instrument assignment");
    auto inst = bank.instruments.find(it->second);
    if (inst == bank.instruments.end())
      fail(Errc::configuration, "instrument \"" + it->second + "\" is not in the patch bank");
    distinct = std::max(distinct, inst->second.size());
  }
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(variants), distinct);

  BackgroundSource out;
  out.strategy = BackgroundStrategy::synthesized_accompaniment;
  for (std::size_t v = 0; v < count; ++v) {
    std::map<std::size_t, PatchChoice> assignment;
    for (const auto& [track, _] : tracks) {
      const std::string& name = instruments.at(track);
      assignment[track] = PatchChoice{name, v % bank.instruments.at(name).size()};
    }
    AudioClip clip = render_accompaniment(tracks, bank, assignment, sample_rate);
    if (v == 0) out.payload = std::move(clip);
    else out.alternates.push_back(std::move(clip));
  }
  // Variants can differ in length by a release tail; pad to a common length
  // so crops are drawn from one range.
  std::size_t len = out.payload.size();
  for (const auto& a : out.alternates) len = std::max(len, a.size());
  out.payload.samples.resize(len, 0.0);
  for (auto& a : out.alternates) a.samples.resize(len, 0.0);
  return out;
}

SeedPlan plan_seeds(std::uint64_t global, std::uint64_t salt) {
  auto rng = derive_rng(global, salt);
  SeedPlan p;
  p.global = global;
  p.stream = rng();
  p.init = rng();
  p.train = rng();
  return p;
}

}  // namespace bespoke
