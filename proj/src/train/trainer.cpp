#include "bitstain/train/trainer.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "bitstain/image/preprocess.hpp"

namespace bitstain::train {

using loss::LossReport;
using nlohmann::json;

namespace {

std::vector<Tensor> concat_params(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    std::vector<Tensor> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

TrainerState::TrainerState(const TrainConfig& config)
    : cfg((config.validate(), config)),
      g_b2h(cfg.generator, "g_b2h", cfg.seed),
      g_h2b(cfg.generator, "g_h2b", cfg.seed),
      d_bit(3, cfg.disc_channels, "d_bit", cfg.seed),
      d_he(3, cfg.disc_channels, "d_he", cfg.seed),
      opt_g(concat_params(g_b2h.params().all(), g_h2b.params().all()), cfg.learning_rate),
      opt_d(concat_params(d_bit.params().all(), d_he.params().all()), cfg.learning_rate) {
    proto.alpha = cfg.ema_alpha;
}

std::vector<Tensor> TrainerState::generator_params() const {
    return concat_params(g_b2h.params().all(), g_h2b.params().all());
}

std::vector<Tensor> TrainerState::discriminator_params() const {
    return concat_params(d_bit.params().all(), d_he.params().all());
}

std::vector<Tensor> TrainerState::all_params() const {
    return concat_params(generator_params(), discriminator_params());
}

void TrainerState::save(const std::filesystem::path& path) const {
    net::CheckpointWriter w;
    for (const auto& t : all_params()) w.add(t.param_name(), t.shape(), t.values());
    auto add_optimizer = [&w](const char* tag, const net::Adam& opt) {
        auto& o = const_cast<net::Adam&>(opt);
        for (std::size_t i = 0; i < opt.params().size(); ++i) {
            const auto& p = opt.params()[i];
            w.add(std::string(tag) + ".m." + p.param_name(), p.shape(), o.slot_m(i));
            w.add(std::string(tag) + ".v." + p.param_name(), p.shape(), o.slot_v(i));
        }
    };
    add_optimizer("adam_g", opt_g);
    add_optimizer("adam_d", opt_d);
    if (proto.initialized) net::write_prototype(w, proto);
    w.meta()["kind"] = "train_bundle";
    w.meta()["config"] = cfg.to_json();
    w.meta()["step"] = step;
    w.meta()["epochs_done"] = epochs_done;
    w.meta()["total_steps"] = total_steps;
    w.meta()["adam_g_t"] = opt_g.t();
    w.meta()["adam_d_t"] = opt_d.t();
    w.save(path);
}

TrainerState TrainerState::from_checkpoint(const std::filesystem::path& path) {
    const auto c = net::Checkpoint::load(path);
    if (c.meta().value("kind", std::string()) != "train_bundle") {
        throw IoError("not a training checkpoint: " + path.string());
    }
    TrainerState st(TrainConfig::from_json(c.meta().at("config")));
    auto load_into = [&c](const std::vector<Tensor>& params, const std::string& prefix) {
        for (const auto& p : params) {
            const std::string name = prefix + p.param_name();
            if (c.shape(name) != p.shape()) throw IoError("checkpoint shape mismatch for " + name);
            p.raw_values() = c.data(name);
        }
    };
    load_into(st.all_params(), "");
    auto load_optimizer = [&c](const char* tag, net::Adam& opt) {
        for (std::size_t i = 0; i < opt.params().size(); ++i) {
            const auto& p = opt.params()[i];
            opt.slot_m(i) = c.data(std::string(tag) + ".m." + p.param_name());
            opt.slot_v(i) = c.data(std::string(tag) + ".v." + p.param_name());
        }
    };
    load_optimizer("adam_g", st.opt_g);
    load_optimizer("adam_d", st.opt_d);
    st.opt_g.set_t(c.meta().at("adam_g_t").get<std::int64_t>());
    st.opt_d.set_t(c.meta().at("adam_d_t").get<std::int64_t>());
    if (c.has(net::kPrototypeTensor)) st.proto = net::read_prototype(c);
    st.proto.alpha = st.cfg.ema_alpha;
    st.step = c.meta().at("step").get<std::int64_t>();
    st.epochs_done = c.meta().at("epochs_done").get<int>();
    st.total_steps = c.meta().at("total_steps").get<std::int64_t>();
    return st;
}

void TrainerState::load_backbone(const std::filesystem::path& path) {
    const auto c = net::Checkpoint::load(path);
    const std::string kind = c.meta().value("kind", std::string());
    if (kind != "mae_backbone" && kind != "train_bundle") {
        throw IoError("not a backbone or training checkpoint: " + path.string());
    }
    for (const auto& p : generator_params()) {
        if (!c.has(p.param_name())) continue;
        if (c.shape(p.param_name()) != p.shape()) {
            throw IoError("backbone shape mismatch for " + p.param_name());
        }
        p.raw_values() = c.data(p.param_name());
    }
}

namespace {

void check_normalized(const Tensor& batch, const char* which) {
    for (double v : batch.values()) {
        if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
            throw ValueError(std::string("train batch ") + which + " not normalized to [-1,1]");
        }
    }
}

Tensor pyramid_loss(const TrainerState& state, const net::FeaturePyramid& a,
                    const net::FeaturePyramid& b) {
    const auto subset = loss::ChannelSubset::make(state.cfg.generator, state.cfg.channel_subset);
    return loss::multiscale_content_loss(a, b, subset, loss::StopGradOn::B);
}

}  // namespace

StepGraph build_step_graph(TrainerState& state, const Tensor& batch_bit, const Tensor& batch_he,
                           double fusion_w) {
    check_normalized(batch_bit, "bit");
    check_normalized(batch_he, "he");
    StepGraph g;

    // (1) reverse pass on real target samples; observe style and update the
    //     running prototype before any fusion uses it
    auto rev = state.g_h2b.forward(batch_he);
    g.fake_bit = rev.output;
    g.s_he_real = rev.style;
    {
        const int n = g.s_he_real.shape()[0];
        const int d = g.s_he_real.shape()[1];
        for (int s = 0; s < n; ++s) {
            std::vector<double> token(g.s_he_real.values().begin() + static_cast<std::ptrdiff_t>(s) * d,
                                      g.s_he_real.values().begin() + static_cast<std::ptrdiff_t>(s + 1) * d);
            state.proto.update(token);
        }
    }

    // (2) fused forward translation
    auto enc_bit = state.g_b2h.encode(batch_bit);
    auto fwd = state.g_b2h.complete(
        enc_bit, style::apply_fusion_graph(enc_bit.style_raw, state.proto, fusion_w));
    g.fake_he = fwd.output;

    // (3) cycle reconstructions both directions
    auto cyc_a = state.g_h2b.forward(g.fake_he);  // fake H&E -> BIT
    g.rec_bit = cyc_a.output;
    g.s_he_fake = cyc_a.style;
    auto enc_fake_bit = state.g_b2h.encode(g.fake_bit);
    auto cyc_b = state.g_b2h.complete(
        enc_fake_bit, style::apply_fusion_graph(enc_fake_bit.style_raw, state.proto, fusion_w));
    g.rec_he = cyc_b.output;

    // identity passes
    auto enc_idt = state.g_b2h.encode(batch_he);
    auto idt_he_out = state.g_b2h.complete(
        enc_idt, style::apply_fusion_graph(enc_idt.style_raw, state.proto, fusion_w));
    auto idt_bit_out = state.g_h2b.forward(batch_bit);

    // (4) losses
    g.adv_b2h = loss::lsgan_generator_loss(state.d_he, g.fake_he);
    g.adv_h2b = loss::lsgan_generator_loss(state.d_bit, g.fake_bit);
    g.cycle_bit = loss::l1_loss(g.rec_bit, batch_bit);
    g.cycle_he = loss::l1_loss(g.rec_he, batch_he);
    g.idt_he = loss::l1_loss(idt_he_out.output, batch_he);
    g.idt_bit = loss::l1_loss(idt_bit_out.output, batch_bit);
    g.msc_bit = pyramid_loss(state, fwd.pyramid, cyc_a.pyramid);
    g.msc_he = pyramid_loss(state, rev.pyramid, cyc_b.pyramid);
    g.style_loss = loss::style_statistics_loss(g.s_he_fake, g.s_he_real);
    g.total = loss::total_generator_loss(g.adv_b2h, g.adv_h2b, g.cycle_bit, g.cycle_he, g.idt_bit,
                                         g.idt_he, g.msc_bit, g.msc_he, g.style_loss,
                                         state.cfg.weights());

    g.disc_he_loss = loss::lsgan_discriminator_loss(state.d_he, batch_he, g.fake_he.detach());
    g.disc_bit_loss = loss::lsgan_discriminator_loss(state.d_bit, batch_bit, g.fake_bit.detach());
    g.disc_total = core::add(g.disc_he_loss, g.disc_bit_loss);
    return g;
}

LossReport train_step(TrainerState& state, const Tensor& batch_bit, const Tensor& batch_he) {
    if (state.total_steps <= 0) throw StateError("train_step: total_steps not set");
    const style::FusionSchedule sched{state.cfg.fusion.w0, state.cfg.fusion.w_min,
                                      state.total_steps};
    const double w = style::fusion_weight(std::min(state.step, state.total_steps), sched);
    StepGraph g = build_step_graph(state, batch_bit, batch_he, w);

    LossReport report;
    report.adv_b2h = g.adv_b2h.item();
    report.adv_h2b = g.adv_h2b.item();
    report.cycle_bit = g.cycle_bit.item();
    report.cycle_he = g.cycle_he.item();
    report.idt_bit = g.idt_bit.item();
    report.idt_he = g.idt_he.item();
    report.msc_bit = g.msc_bit.item();
    report.msc_he = g.msc_he.item();
    report.msc_total = report.msc_bit + report.msc_he;
    report.style = g.style_loss.item();
    report.total = g.total.item();
    report.disc_bit = g.disc_bit_loss.item();
    report.disc_he = g.disc_he_loss.item();
    report.step = state.step;
    report.fusion_w = w;
    report.check_finite();

    // (5) generator update, then discriminator update
    const auto all = state.all_params();
    core::zero_grad(all);
    core::backward(g.total);
    state.opt_g.step();
    core::zero_grad(all);
    core::backward(g.disc_total);
    state.opt_d.step();
    ++state.step;
    return report;
}

namespace {

double to_unit(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

std::uint8_t from_unit(double v) {
    const double mapped = (std::clamp(v, -1.0, 1.0) + 1.0) * 127.5;
    return static_cast<std::uint8_t>(std::nearbyint(mapped));
}

template <typename TileT>
Tensor tiles_to_batch_impl(const std::vector<TileT>& tiles, const std::vector<std::size_t>& idx,
                           const image::Image8& (*image_of)(const TileT&)) {
    if (idx.empty()) throw ValueError("tiles_to_batch: empty index set");
    const auto& first = image_of(tiles.at(idx[0]));
    const int s = first.width;
    std::vector<double> data;
    data.reserve(idx.size() * 3 * static_cast<std::size_t>(s) * s);
    for (std::size_t i : idx) {
        const auto& img = image_of(tiles.at(i));
        if (img.width != s || img.height != s || img.channels != 3) {
            throw ShapeError("tiles_to_batch: inconsistent tile shapes");
        }
        for (std::uint8_t v : img.data) data.push_back(to_unit(v));
    }
    return Tensor::from({static_cast<int>(idx.size()), 3, s, s}, std::move(data));
}

const image::Image8& bit_image(const image::BitTile& t) { return t.channels; }
const image::Image8& he_image(const image::HETile& t) { return t.rgb; }

}  // namespace

Tensor tiles_to_batch(const std::vector<image::BitTile>& tiles, const std::vector<std::size_t>& idx) {
    return tiles_to_batch_impl(tiles, idx, +[](const image::BitTile& t) -> const image::Image8& { return bit_image(t); });
}

Tensor tiles_to_batch(const std::vector<image::HETile>& tiles, const std::vector<std::size_t>& idx) {
    return tiles_to_batch_impl(tiles, idx, +[](const image::HETile& t) -> const image::Image8& { return he_image(t); });
}

namespace {

std::vector<std::size_t> train_split(std::size_t n, double fraction, std::uint64_t seed,
                                     std::uint64_t stream) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    core::SeqRng rng(seed, stream);
    rng.shuffle(idx);
    const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(n)));
    idx.resize(std::min(keep, n));
    return idx;
}

std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& base, std::uint64_t seed,
                                     std::uint64_t stream, int epoch) {
    std::vector<std::size_t> order = base;
    core::SeqRng rng(seed, stream ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1)));
    rng.shuffle(order);
    return order;
}

void write_manifest(const std::filesystem::path& run_dir, const json& extra) {
    json manifest = extra;
    manifest["artifacts"] = json::array();
    for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
        manifest["artifacts"].push_back(e.path().filename().string());
    }
    std::ofstream out(run_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<image::BitTile>& bit_tiles,
                  const std::vector<image::HETile>& he_tiles,
                  const std::filesystem::path& run_dir,
                  const std::optional<std::filesystem::path>& resume_from,
                  const std::optional<std::filesystem::path>& init_from) {
    cfg.validate();
    if (bit_tiles.empty() || he_tiles.empty()) {
        throw ConfigError("train: empty dataset (need tiles in both domains)");
    }
    std::filesystem::create_directories(run_dir);
    {
        std::ofstream cfg_out(run_dir / "config.json");
        cfg_out << cfg.to_json().dump(2) << "\n";
    }

    const auto bit_train = train_split(bit_tiles.size(), cfg.train_fraction, cfg.seed,
                                       core::fnv1a("split_bit"));
    const auto he_train = train_split(he_tiles.size(), cfg.train_fraction, cfg.seed,
                                      core::fnv1a("split_he"));
    const int steps_per_epoch = static_cast<int>(
        std::min(bit_train.size(), he_train.size()) / static_cast<std::size_t>(cfg.batch_size));
    if (steps_per_epoch < 1) {
        throw ConfigError("train: dataset too small for the configured batch size");
    }

    TrainerState state = resume_from ? TrainerState::from_checkpoint(*resume_from)
                                     : TrainerState(cfg);
    if (resume_from && !(state.cfg.to_json() == cfg.to_json())) {
        throw ConfigError("train: config does not match the resume checkpoint");
    }
    if (init_from) {
        if (resume_from) throw ConfigError("train: resume and init-from are mutually exclusive");
        state.load_backbone(*init_from);
    }
    state.total_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs;

    TrainResult result;
    result.steps_per_epoch = steps_per_epoch;
    result.total_steps = state.total_steps;
    result.loss_log = run_dir / "loss_log.jsonl";
    std::ofstream log(result.loss_log, resume_from ? std::ios::app : std::ios::out);
    if (!log) throw IoError("cannot write loss log: " + result.loss_log.string());

    // optional joint masked-autoencoder warm start
    if (!resume_from && cfg.pretrain_epochs > 0) {
        net::Adam mae_opt(state.generator_params(), cfg.learning_rate);
        core::SeqRng mask_rng(cfg.seed, core::fnv1a("mae_mask"));
        std::ofstream mae_log(run_dir / "pretrain_log.jsonl");
        const std::size_t combined = bit_train.size() + he_train.size();
        const int mae_steps = static_cast<int>(combined / static_cast<std::size_t>(cfg.pretrain_batch_size));
        for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
            std::vector<std::size_t> order(combined);
            std::iota(order.begin(), order.end(), 0);
            core::SeqRng rng(cfg.seed, core::fnv1a("mae_epoch") ^ static_cast<std::uint64_t>(epoch));
            rng.shuffle(order);
            for (int s = 0; s < mae_steps; ++s) {
                std::vector<std::size_t> bit_idx, he_idx;
                for (int b = 0; b < cfg.pretrain_batch_size; ++b) {
                    const std::size_t pick = order[static_cast<std::size_t>(s) * cfg.pretrain_batch_size + b];
                    if (pick < bit_train.size()) {
                        bit_idx.push_back(bit_train[pick]);
                    } else {
                        he_idx.push_back(he_train[pick - bit_train.size()]);
                    }
                }
                // each generator reconstructs whatever the mixed batch holds
                double l_b2h = 0, l_h2b = 0;
                if (!bit_idx.empty()) {
                    const Tensor batch = tiles_to_batch(bit_tiles, bit_idx);
                    l_b2h += net::mae_pretrain_step(state.g_b2h, mae_opt, batch, cfg.mask_ratio, mask_rng);
                    l_h2b += net::mae_pretrain_step(state.g_h2b, mae_opt, batch, cfg.mask_ratio, mask_rng);
                }
                if (!he_idx.empty()) {
                    const Tensor batch = tiles_to_batch(he_tiles, he_idx);
                    l_b2h += net::mae_pretrain_step(state.g_b2h, mae_opt, batch, cfg.mask_ratio, mask_rng);
                    l_h2b += net::mae_pretrain_step(state.g_h2b, mae_opt, batch, cfg.mask_ratio, mask_rng);
                }
                mae_log << json{{"phase", "pretrain"}, {"epoch", epoch}, {"step", s},
                                {"mae_b2h", l_b2h}, {"mae_h2b", l_h2b}}
                               .dump()
                        << "\n";
            }
        }
    }

    for (int epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        const auto bit_order = epoch_order(bit_train, cfg.seed, core::fnv1a("epoch_bit"), epoch);
        const auto he_order = epoch_order(he_train, cfg.seed, core::fnv1a("epoch_he"), epoch);
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<std::size_t> bit_idx(bit_order.begin() + static_cast<std::ptrdiff_t>(s) * cfg.batch_size,
                                             bit_order.begin() + static_cast<std::ptrdiff_t>(s + 1) * cfg.batch_size);
            std::vector<std::size_t> he_idx(he_order.begin() + static_cast<std::ptrdiff_t>(s) * cfg.batch_size,
                                            he_order.begin() + static_cast<std::ptrdiff_t>(s + 1) * cfg.batch_size);
            const LossReport report = train_step(state, tiles_to_batch(bit_tiles, bit_idx),
                                                 tiles_to_batch(he_tiles, he_idx));
            log << report.to_json().dump() << "\n";
        }
        log.flush();
        state.epochs_done = epoch + 1;
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.bsck", epoch + 1);
        const auto ckpt_path = run_dir / name;
        state.save(ckpt_path);
        result.checkpoints.push_back(ckpt_path);
    }
    write_manifest(run_dir, {{"command", "train"}, {"steps_per_epoch", steps_per_epoch},
                             {"total_steps", state.total_steps}});
    return result;
}

std::filesystem::path pretrain(const TrainConfig& cfg, const std::vector<image::BitTile>& bit_tiles,
                               const std::vector<image::HETile>& he_tiles,
                               const std::filesystem::path& run_dir) {
    cfg.validate();
    if (cfg.pretrain_epochs < 1) throw ConfigError("pretrain: pretrain_epochs must be >= 1");
    if (bit_tiles.empty() || he_tiles.empty()) throw ConfigError("pretrain: empty dataset");
    std::filesystem::create_directories(run_dir);
    {
        std::ofstream cfg_out(run_dir / "config.json");
        cfg_out << cfg.to_json().dump(2) << "\n";
    }
    TrainerState state(cfg);
    net::Adam mae_opt(state.generator_params(), cfg.learning_rate);
    core::SeqRng mask_rng(cfg.seed, core::fnv1a("mae_mask"));
    std::ofstream log(run_dir / "pretrain_log.jsonl");
    std::vector<std::size_t> bit_all(bit_tiles.size()), he_all(he_tiles.size());
    std::iota(bit_all.begin(), bit_all.end(), 0);
    std::iota(he_all.begin(), he_all.end(), 0);
    const std::size_t combined = bit_all.size() + he_all.size();
    const int steps = static_cast<int>(combined / static_cast<std::size_t>(cfg.pretrain_batch_size));
    if (steps < 1) throw ConfigError("pretrain: dataset too small for the batch size");
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        std::vector<std::size_t> order(combined);
        std::iota(order.begin(), order.end(), 0);
        core::SeqRng rng(cfg.seed, core::fnv1a("mae_epoch") ^ static_cast<std::uint64_t>(epoch));
        rng.shuffle(order);
        for (int s = 0; s < steps; ++s) {
            std::vector<std::size_t> bit_idx, he_idx;
            for (int b = 0; b < cfg.pretrain_batch_size; ++b) {
                const std::size_t pick = order[static_cast<std::size_t>(s) * cfg.pretrain_batch_size + b];
                if (pick < bit_all.size()) {
                    bit_idx.push_back(bit_all[pick]);
                } else {
                    he_idx.push_back(he_all[pick - bit_all.size()]);
                }
            }
            double l_b2h = 0, l_h2b = 0;
            if (!bit_idx.empty()) {
                const Tensor batch = tiles_to_batch(bit_tiles, bit_idx);
                l_b2h += net::mae_pretrain_step(state.g_b2h, mae_opt, batch, cfg.mask_ratio, mask_rng);
                l_h2b += net::mae_pretrain_step(state.g_h2b, mae_opt, batch, cfg.mask_ratio, mask_rng);
            }
            if (!he_idx.empty()) {
                const Tensor batch = tiles_to_batch(he_tiles, he_idx);
                l_b2h += net::mae_pretrain_step(state.g_b2h, mae_opt, batch, cfg.mask_ratio, mask_rng);
                l_h2b += net::mae_pretrain_step(state.g_h2b, mae_opt, batch, cfg.mask_ratio, mask_rng);
            }
            log << json{{"phase", "pretrain"}, {"epoch", epoch}, {"step", s},
                        {"mae_b2h", l_b2h}, {"mae_h2b", l_h2b}}
                       .dump()
                << "\n";
        }
    }
    net::CheckpointWriter w;
    for (const auto& t : state.generator_params()) w.add(t.param_name(), t.shape(), t.values());
    w.meta()["kind"] = "mae_backbone";
    w.meta()["config"] = cfg.to_json();
    const auto path = run_dir / "mae_backbone.bsck";
    w.save(path);
    write_manifest(run_dir, {{"command", "pretrain"}});
    return path;
}

image::Volume8 stain_volume(const TrainerState& state, const image::Volume8& bit_volume,
                            const StainOptions& opts) {
    if (!state.proto.initialized) {
        throw StateError("stain_volume: checkpoint has no initialized style prototype");
    }
    bit_volume.meta.validate();
    const int tile = state.cfg.generator.input_size;
    const int stride = opts.stride > 0 ? opts.stride : tile;
    const double w = opts.fusion_weight >= 0 ? opts.fusion_weight
                                             : state.cfg.fusion.effective_inference_w();
    const int nx = bit_volume.meta.dims[0], ny = bit_volume.meta.dims[1], nz = bit_volume.meta.dims[2];
    for (const auto& slice : bit_volume.slices) {
        if (slice.channels != 1) throw ShapeError("stain_volume: expected single-channel source");
    }
    const auto origins = image::tile_origins(nx, ny, tile, stride);
    const int feather = stride < tile ? tile - stride : 1;

    image::Volume8 out;
    out.meta = {{nx, ny, nz}, bit_volume.meta.spacing_um, image::Modality::HE};
    out.slices.assign(static_cast<std::size_t>(nz), image::Image8());

    auto ramp = [feather, tile](int p) {
        return static_cast<double>(std::min({p + 1, tile - p, feather})) / feather;
    };

#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        const auto& slice = bit_volume.slices[static_cast<std::size_t>(z)];
        const image::BitTile full = image::make_three_channel(slice);
        std::vector<double> acc(static_cast<std::size_t>(3) * ny * nx, 0.0);
        std::vector<double> weight(static_cast<std::size_t>(ny) * nx, 0.0);
        for (const auto& [x0, y0] : origins) {
            image::Image8 tile_img = image::cut_tile(full.channels, x0, y0, tile);
            std::vector<double> data;
            data.reserve(static_cast<std::size_t>(3) * tile * tile);
            for (std::uint8_t v : tile_img.data) data.push_back(to_unit(v));
            const Tensor x = Tensor::from({1, 3, tile, tile}, std::move(data));
            const auto enc = state.g_b2h.encode(x);
            const auto res = state.g_b2h.complete(
                enc, style::apply_fusion_graph(enc.style_raw, state.proto, w));
            const auto& y = res.output.values();
            for (int ty = 0; ty < tile; ++ty)
                for (int tx = 0; tx < tile; ++tx) {
                    const double wgt = ramp(tx) * ramp(ty);
                    const std::size_t out_pix = static_cast<std::size_t>(y0 + ty) * nx + (x0 + tx);
                    weight[out_pix] += wgt;
                    for (int c = 0; c < 3; ++c) {
                        acc[static_cast<std::size_t>(c) * ny * nx + out_pix] +=
                            wgt * y[(static_cast<std::size_t>(c) * tile + ty) * tile + tx];
                    }
                }
        }
        image::Image8 stained(nx, ny, 3);
        for (int yy = 0; yy < ny; ++yy)
            for (int xx = 0; xx < nx; ++xx) {
                const std::size_t pix = static_cast<std::size_t>(yy) * nx + xx;
                for (int c = 0; c < 3; ++c) {
                    stained.at(c, yy, xx) = from_unit(acc[static_cast<std::size_t>(c) * ny * nx + pix] / weight[pix]);
                }
            }
        out.slices[static_cast<std::size_t>(z)] = std::move(stained);
    }
    return out;
}

}  // namespace bitstain::train
