#ifndef BITSTAIN_TRAIN_TRAINER_HPP
#define BITSTAIN_TRAIN_TRAINER_HPP

#include <filesystem>
#include <optional>

#include "bitstain/image/image.hpp"
#include "bitstain/net/checkpoint.hpp"
#include "bitstain/net/mae.hpp"
#include "bitstain/train/config.hpp"

namespace bitstain::train {

using core::Tensor;

// Owns every piece of mutable training state: both generators, both
// discriminators, optimizers, the style prototype and the step counters.
// One logical stream drives updates; inference on frozen state is
// thread-safe.
class TrainerState {
public:
    explicit TrainerState(const TrainConfig& cfg);
    static TrainerState from_checkpoint(const std::filesystem::path& path);

    void save(const std::filesystem::path& path) const;
    // Copies matching generator parameters from a backbone checkpoint.
    void load_backbone(const std::filesystem::path& path);

    std::vector<Tensor> generator_params() const;
    std::vector<Tensor> discriminator_params() const;
    std::vector<Tensor> all_params() const;

    TrainConfig cfg;
    net::Generator g_b2h;
    net::Generator g_h2b;
    net::PatchDiscriminator d_bit;
    net::PatchDiscriminator d_he;
    net::Adam opt_g;
    net::Adam opt_d;
    style::StylePrototype proto;
    std::int64_t step = 0;        // adversarial steps completed
    int epochs_done = 0;
    std::int64_t total_steps = 0;  // fusion schedule period, fixed at train start
};

// The full per-step loss graph, exposed so tests can probe gradient routing
// on the exact graph the trainer optimizes.
struct StepGraph {
    Tensor fake_he, fake_bit, rec_bit, rec_he;
    Tensor s_he_real, s_he_fake;
    Tensor adv_b2h, adv_h2b;
    Tensor cycle_bit, cycle_he;
    Tensor idt_bit, idt_he;
    Tensor msc_bit, msc_he;
    Tensor style_loss;
    Tensor total;
    Tensor disc_bit_loss, disc_he_loss, disc_total;
};

// Executes pass order (reverse with prototype update, fused forward, cycles,
// identities) and assembles every loss term. Mutates the prototype.
StepGraph build_step_graph(TrainerState& state, const Tensor& batch_bit, const Tensor& batch_he,
                           double fusion_w);

// One optimization step: generator update, then discriminator update.
loss::LossReport train_step(TrainerState& state, const Tensor& batch_bit, const Tensor& batch_he);

// Tiles normalized to [-1, 1], shape [N, 3, S, S].
Tensor tiles_to_batch(const std::vector<image::BitTile>& tiles, const std::vector<std::size_t>& idx);
Tensor tiles_to_batch(const std::vector<image::HETile>& tiles, const std::vector<std::size_t>& idx);

struct TrainResult {
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path loss_log;
    int steps_per_epoch = 0;
    std::int64_t total_steps = 0;
};

// Optional masked-autoencoder pretraining followed by adversarial epochs;
// one checkpoint per epoch plus a JSON-lines loss log under run_dir.
TrainResult train(const TrainConfig& cfg, const std::vector<image::BitTile>& bit_tiles,
                  const std::vector<image::HETile>& he_tiles,
                  const std::filesystem::path& run_dir,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                  const std::optional<std::filesystem::path>& init_from = std::nullopt);

// Joint masked-autoencoder pretraining alone; saves a backbone checkpoint.
std::filesystem::path pretrain(const TrainConfig& cfg, const std::vector<image::BitTile>& bit_tiles,
                               const std::vector<image::HETile>& he_tiles,
                               const std::filesystem::path& run_dir);

struct StainOptions {
    int stride = 0;           // 0 -> tile size (no interior overlap)
    double fusion_weight = -1;  // negative -> config inference weight
};

// Slice-wise volumetric translation: tile, translate with the checkpointed
// prototype, feather-blend overlaps. Slice z of the output depends only on
// slice z of the input.
image::Volume8 stain_volume(const TrainerState& state, const image::Volume8& bit_volume,
                            const StainOptions& opts = {});

}  // namespace bitstain::train

#endif
