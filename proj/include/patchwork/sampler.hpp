#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "patchwork/augment.hpp"
#include "patchwork/image.hpp"

namespace patchwork {

struct Patch {
    std::string subject_id;
    Coords corner; // start index in the source grid (may be negative: padding)
    Coords size;
    std::int64_t channels = 1;
    std::vector<real_t> values;      // channels x product(size), channel-planar
    std::vector<real_t> mask_values; // product(size) when a mask is present
    double scalar_target = 0;
    bool has_mask = false;
};

enum class PadPolicy { zero, reflect };

// Copy a sub-grid; out-of-bounds samples are zero-filled or mirrored.
// Reflection requires every sampled index to be one mirror away at most.
Patch extract_patch(const Image& image, const Coords& corner, const Coords& size, PadPolicy pad);

struct LoadedSubject {
    std::string subject_id;
    Image image;
    std::optional<Image> mask;
    double scalar_target = 0;
};

struct QueueSpec {
    std::int64_t samples_per_volume = 1;
    std::int64_t max_queue_length = 32;
    std::int64_t workers = 1;
    bool shuffle = true;

    void validate() const;
};

struct SamplerPolicy {
    bool foreground_biased = false;
    double foreground_ratio = 0.5; // fraction of draws centered on mask voxels
    PadPolicy pad = PadPolicy::zero;
};

// Bounded producer/consumer patch stream. Worker threads prefetch patches but
// the consumer always sees the single-worker order: patch content is a pure
// function of (seed, epoch, slot), and slots are emitted sequentially.
class PatchQueue {
  public:
    PatchQueue(const std::vector<LoadedSubject>& subjects, Coords patch_size, QueueSpec spec,
               SamplerPolicy policy, const AugmentationPlan* augment, std::uint64_t seed,
               std::function<void(const std::string&)> warn = {});
    ~PatchQueue();

    PatchQueue(const PatchQueue&) = delete;
    PatchQueue& operator=(const PatchQueue&) = delete;

    void begin_epoch(std::int64_t epoch);
    std::optional<Patch> next(); // nullopt once the epoch is exhausted
    std::int64_t epoch_size() const;
    std::int64_t buffered_high_water() const { return high_water_; }

  private:
    Patch make_patch(std::int64_t slot, std::int64_t epoch) const;
    void worker_loop();
    void stop_workers();

    const std::vector<LoadedSubject>& subjects_;
    Coords patch_size_;
    QueueSpec spec_;
    SamplerPolicy policy_;
    const AugmentationPlan* augment_;
    std::uint64_t seed_;
    std::function<void(const std::string&)> warn_;
    std::vector<std::vector<std::int64_t>> foreground_; // flat nonzero-mask indices per subject

    std::int64_t epoch_ = 0;
    std::vector<std::int64_t> order_; // ticket -> slot permutation for this epoch

    std::vector<std::thread> threads_;
    mutable std::mutex mu_;
    std::condition_variable can_produce_, can_consume_;
    std::map<std::int64_t, Patch> buffer_;
    std::int64_t next_ticket_ = 0, next_emit_ = 0, reserved_ = 0;
    std::int64_t high_water_ = 0;
    bool stopping_ = false;
    std::exception_ptr failure_;
};

} // namespace patchwork
