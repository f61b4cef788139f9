#include "patchwork/sampler.hpp"

#include <algorithm>
#include <iostream>

#include "patchwork/ndindex.hpp"
#include "patchwork/rng.hpp"

namespace patchwork {

namespace {

std::int64_t mirror_index(std::int64_t i, std::int64_t extent) {
    if (i < 0) return -i;
    if (i >= extent) return 2 * extent - 2 - i;
    return i;
}

} // namespace

Patch extract_patch(const Image& image, const Coords& corner, const Coords& size, PadPolicy pad) {
    image.validate();
    const auto rank = image.extents.size();
    if (corner.size() != rank || size.size() != rank)
        throw DimensionError("patch corner/size rank does not match image rank " +
                             std::to_string(rank));
    for (std::size_t k = 0; k < rank; ++k) {
        if (size[k] < 1) throw DimensionError("patch size must be positive on axis " + std::to_string(k));
        if (pad == PadPolicy::reflect) {
            const auto e = image.extents[k];
            if (corner[k] < -(e - 1) || corner[k] + size[k] - 1 > 2 * e - 2)
                throw DimensionError("patch on axis " + std::to_string(k) +
                                     " reaches past the maximal reflection padding");
        }
    }

    Patch patch;
    patch.corner = corner;
    patch.size = size;
    patch.channels = image.channels;
    const auto n = product(size);
    patch.values.assign(static_cast<std::size_t>(image.channels * n), real_t(0));
    const auto strides = row_major_strides(image.extents);

    Coords idx(rank, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t flat = 0;
        bool inside = true;
        for (std::size_t k = 0; k < rank && inside; ++k) {
            auto src = corner[k] + idx[k];
            if (src < 0 || src >= image.extents[k]) {
                if (pad == PadPolicy::zero) {
                    inside = false;
                    break;
                }
                src = mirror_index(src, image.extents[k]);
            }
            flat += src * strides[k];
        }
        if (inside)
            for (std::int64_t c = 0; c < image.channels; ++c)
                patch.values[static_cast<std::size_t>(c * n + i)] =
                    image.channel(c)[static_cast<std::size_t>(flat)];
        advance(idx, size);
    }
    return patch;
}

void QueueSpec::validate() const {
    if (samples_per_volume < 1)
        throw ConfigError("q_samples_per_volume must be >= 1, got " + std::to_string(samples_per_volume));
    if (max_queue_length < 1)
        throw ConfigError("q_max_length must be >= 1, got " + std::to_string(max_queue_length));
    if (workers < 1) throw ConfigError("q_num_workers must be >= 1, got " + std::to_string(workers));
}

PatchQueue::PatchQueue(const std::vector<LoadedSubject>& subjects, Coords patch_size, QueueSpec spec,
                       SamplerPolicy policy, const AugmentationPlan* augment, std::uint64_t seed,
                       std::function<void(const std::string&)> warn)
    : subjects_(subjects),
      patch_size_(std::move(patch_size)),
      spec_(spec),
      policy_(policy),
      augment_(augment),
      seed_(seed),
      warn_(std::move(warn)) {
    spec_.validate();
    if (subjects_.empty()) throw ConfigError("patch queue needs at least one subject");
    if (!warn_) warn_ = [](const std::string& msg) { std::cerr << msg << "\n"; };
    if (policy_.foreground_biased &&
        (policy_.foreground_ratio < 0 || policy_.foreground_ratio > 1))
        throw ConfigError("foreground ratio must lie in [0,1], got " +
                          std::to_string(policy_.foreground_ratio));

    for (const auto& s : subjects_) {
        s.image.validate();
        if (s.image.extents.size() != patch_size_.size())
            throw DimensionError("patch size rank " + std::to_string(patch_size_.size()) +
                                 " does not match subject " + s.subject_id + " rank " +
                                 std::to_string(s.image.extents.size()));
        if (s.mask && s.mask->extents != s.image.extents)
            throw DimensionError("subject " + s.subject_id + " mask extents mismatch");
        foreground_.emplace_back();
        if (policy_.foreground_biased && s.mask) {
            auto& fg = foreground_.back();
            const auto n = s.mask->plane_size();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t c = 0; c < s.mask->channels; ++c)
                    if (s.mask->channel(c)[static_cast<std::size_t>(i)] != real_t(0)) {
                        fg.push_back(i);
                        break;
                    }
            if (fg.empty())
                warn_("subject " + s.subject_id +
                      " has an empty mask; foreground sampling falls back to uniform");
        }
    }
    for (auto p : patch_size_)
        if (p < 1) throw ConfigError("patch_size entries must be >= 1");
    if (augment_) augment_->validate(patch_size_.size());
}

PatchQueue::~PatchQueue() { stop_workers(); }

std::int64_t PatchQueue::epoch_size() const {
    return static_cast<std::int64_t>(subjects_.size()) * spec_.samples_per_volume;
}

Patch PatchQueue::make_patch(std::int64_t slot, std::int64_t epoch) const {
    const auto spv = spec_.samples_per_volume;
    const auto subject_idx = static_cast<std::size_t>(slot / spv);
    const auto& subject = subjects_[subject_idx];
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch * epoch_size() + slot)));

    const auto& ext = subject.image.extents;
    const auto rank = ext.size();
    const auto& fg = foreground_[subject_idx];
    Coords center(rank);
    bool use_fg = policy_.foreground_biased && !fg.empty() && rng.uniform() < policy_.foreground_ratio;
    if (use_fg) {
        const auto flat = fg[static_cast<std::size_t>(rng.uniform_index(fg.size()))];
        center = unflatten(flat, ext);
    } else {
        for (std::size_t k = 0; k < rank; ++k)
            center[k] = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(ext[k])));
    }

    Coords corner(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        if (ext[k] >= patch_size_[k])
            corner[k] = std::clamp<std::int64_t>(center[k] - patch_size_[k] / 2, 0,
                                                 ext[k] - patch_size_[k]);
        else
            corner[k] = (ext[k] - patch_size_[k]) / 2; // patch larger than image: center it
    }

    Patch patch = extract_patch(subject.image, corner, patch_size_, policy_.pad);
    patch.subject_id = subject.subject_id;
    patch.scalar_target = subject.scalar_target;
    if (subject.mask) {
        auto mp = extract_patch(*subject.mask, corner, patch_size_, PadPolicy::zero);
        patch.mask_values = std::move(mp.values);
        patch.has_mask = true;
    }

    if (augment_ && !augment_->entries.empty()) {
        Sample sample;
        sample.image = make_image(patch_size_, patch.channels);
        sample.image.values = patch.values;
        if (patch.has_mask) {
            sample.mask = make_image(patch_size_, 1);
            sample.mask->values = patch.mask_values;
        }
        Sample out = compose(*augment_, sample, rng);
        patch.values = std::move(out.image.values);
        if (patch.has_mask) patch.mask_values = std::move(out.mask->values);
    }
    return patch;
}

void PatchQueue::begin_epoch(std::int64_t epoch) {
    stop_workers();
    std::lock_guard lk(mu_);
    epoch_ = epoch;
    const auto n = epoch_size();
    order_.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
    if (spec_.shuffle) {
        Rng rng(derive_seed(seed_, 0x5157u) ^ static_cast<std::uint64_t>(epoch + 1));
        rng.shuffle(order_);
    }
    buffer_.clear();
    next_ticket_ = next_emit_ = reserved_ = 0;
    stopping_ = false;
    failure_ = nullptr;
    const auto n_threads = std::min<std::int64_t>(spec_.workers, n);
    for (std::int64_t i = 0; i < n_threads; ++i)
        threads_.emplace_back([this] { worker_loop(); });
}

void PatchQueue::worker_loop() {
    while (true) {
        std::int64_t ticket;
        {
            std::unique_lock lk(mu_);
            can_produce_.wait(lk, [&] { return stopping_ || reserved_ < spec_.max_queue_length; });
            if (stopping_ || next_ticket_ >= epoch_size()) return;
            ticket = next_ticket_++;
            ++reserved_;
            high_water_ = std::max(high_water_, reserved_);
        }
        try {
            Patch p = make_patch(order_[static_cast<std::size_t>(ticket)], epoch_);
            std::lock_guard lk(mu_);
            buffer_.emplace(ticket, std::move(p));
            can_consume_.notify_all();
        } catch (...) {
            std::lock_guard lk(mu_);
            if (!failure_) failure_ = std::current_exception();
            stopping_ = true;
            can_consume_.notify_all();
            can_produce_.notify_all();
            return;
        }
    }
}

std::optional<Patch> PatchQueue::next() {
    std::unique_lock lk(mu_);
    if (next_emit_ >= epoch_size()) {
        lk.unlock();
        stop_workers();
        return std::nullopt;
    }
    can_consume_.wait(lk, [&] { return failure_ || buffer_.count(next_emit_) > 0; });
    if (failure_) {
        auto err = failure_;
        lk.unlock();
        stop_workers();
        std::rethrow_exception(err);
    }
    auto node = buffer_.extract(next_emit_);
    ++next_emit_;
    --reserved_;
    can_produce_.notify_all();
    return std::move(node.mapped());
}

void PatchQueue::stop_workers() {
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
        can_produce_.notify_all();
        can_consume_.notify_all();
    }
    for (auto& t : threads_) t.join();
    threads_.clear();
}

} // namespace patchwork
