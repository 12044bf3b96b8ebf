#include "bitstain/train/config.hpp"

#include <fstream>

namespace bitstain::train {

using nlohmann::json;

void require_known_keys(const json& j, const std::vector<std::string>& allowed,
                        const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(context + ": unknown key '" + key + "'");
        }
    }
}

void TrainConfig::validate() const {
    if (lambda_cycle < 0 || lambda_idt < 0 || lambda_msc < 0 || lambda_style < 0) {
        throw ConfigError("TrainConfig: loss weights must be non-negative");
    }
    if (!(learning_rate > 0)) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (pretrain_epochs < 0) throw ConfigError("TrainConfig: pretrain_epochs must be >= 0");
    if (pretrain_batch_size < 1) throw ConfigError("TrainConfig: pretrain_batch_size must be >= 1");
    if (!(mask_ratio > 0 && mask_ratio < 1)) throw ConfigError("TrainConfig: mask_ratio must be in (0,1)");
    if (!(ema_alpha > 0 && ema_alpha < 1)) throw ConfigError("TrainConfig: ema_alpha must be in (0,1)");
    if (!(train_fraction > 0 && train_fraction <= 1)) {
        throw ConfigError("TrainConfig: train_fraction must be in (0,1]");
    }
    if (disc_channels < 1) throw ConfigError("TrainConfig: disc_channels must be >= 1");
    if (!(fusion.w_min >= 0 && fusion.w_min <= fusion.w0 && fusion.w0 <= 1)) {
        throw ConfigError("TrainConfig: fusion weights must satisfy 0 <= w_min <= w0 <= 1");
    }
    try {
        generator.validate();
        if (channel_subset.n <= 0) throw ValueError("channel_subset.n must be positive");
    } catch (const Error& e) {
        throw ConfigError(std::string("TrainConfig: ") + e.what());
    }
}

json TrainConfig::to_json() const {
    const char* rule = channel_subset.rule == loss::ChannelSubsetConfig::Rule::FirstN
                           ? "first_n"
                           : "random_n";
    return {
        {"seed", seed},
        {"lambda_cycle", lambda_cycle},
        {"lambda_idt", lambda_idt},
        {"lambda_msc", lambda_msc},
        {"lambda_style", lambda_style},
        {"learning_rate", learning_rate},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"pretrain_epochs", pretrain_epochs},
        {"pretrain_batch_size", pretrain_batch_size},
        {"mask_ratio", mask_ratio},
        {"ema_alpha", ema_alpha},
        {"train_fraction", train_fraction},
        {"disc_channels", disc_channels},
        {"fusion", {{"w0", fusion.w0}, {"w_min", fusion.w_min}, {"inference_w", fusion.inference_w}}},
        {"generator",
         {{"input_size", generator.input_size},
          {"stage_channels", generator.stage_channels},
          {"scales", generator.scales},
          {"token_dim", generator.token_dim},
          {"vit_depth", generator.vit_depth},
          {"vit_heads", generator.vit_heads}}},
        {"channel_subset",
         {{"rule", rule}, {"n", channel_subset.n}, {"seed", channel_subset.seed}}},
    };
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    require_known_keys(j, {"seed", "lambda_cycle", "lambda_idt", "lambda_msc", "lambda_style",
                           "learning_rate", "batch_size", "epochs", "pretrain_epochs",
                           "pretrain_batch_size", "mask_ratio", "ema_alpha", "train_fraction",
                           "disc_channels", "fusion", "generator", "channel_subset"},
                       "config");
    c.seed = j.value("seed", c.seed);
    c.lambda_cycle = j.value("lambda_cycle", c.lambda_cycle);
    c.lambda_idt = j.value("lambda_idt", c.lambda_idt);
    c.lambda_msc = j.value("lambda_msc", c.lambda_msc);
    c.lambda_style = j.value("lambda_style", c.lambda_style);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.pretrain_batch_size = j.value("pretrain_batch_size", c.pretrain_batch_size);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    c.ema_alpha = j.value("ema_alpha", c.ema_alpha);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.disc_channels = j.value("disc_channels", c.disc_channels);
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        require_known_keys(f, {"w0", "w_min", "inference_w"}, "config.fusion");
        c.fusion.w0 = f.value("w0", c.fusion.w0);
        c.fusion.w_min = f.value("w_min", c.fusion.w_min);
        c.fusion.inference_w = f.value("inference_w", c.fusion.inference_w);
    }
    if (j.contains("generator")) {
        const auto& g = j.at("generator");
        require_known_keys(g, {"input_size", "stage_channels", "scales", "token_dim", "vit_depth",
                               "vit_heads"},
                           "config.generator");
        c.generator.input_size = g.value("input_size", c.generator.input_size);
        c.generator.stage_channels = g.value("stage_channels", c.generator.stage_channels);
        c.generator.scales = g.value("scales", c.generator.scales);
        c.generator.token_dim = g.value("token_dim", c.generator.token_dim);
        c.generator.vit_depth = g.value("vit_depth", c.generator.vit_depth);
        c.generator.vit_heads = g.value("vit_heads", c.generator.vit_heads);
    }
    if (j.contains("channel_subset")) {
        const auto& s = j.at("channel_subset");
        require_known_keys(s, {"rule", "n", "seed"}, "config.channel_subset");
        const std::string rule = s.value("rule", std::string("first_n"));
        if (rule == "first_n") {
            c.channel_subset.rule = loss::ChannelSubsetConfig::Rule::FirstN;
        } else if (rule == "random_n") {
            c.channel_subset.rule = loss::ChannelSubsetConfig::Rule::RandomN;
        } else {
            throw ConfigError("config.channel_subset.rule: unknown rule '" + rule + "'");
        }
        c.channel_subset.n = s.value("n", c.channel_subset.n);
        c.channel_subset.seed = s.value("seed", c.channel_subset.seed);
    }
    c.validate();
    return c;
}

void apply_override(json& config, const std::string& dotted_key_value) {
    const auto eq = dotted_key_value.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must be key=value: " + dotted_key_value);
    }
    const std::string dotted = dotted_key_value.substr(0, eq);
    const std::string raw = dotted_key_value.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string

    json* cur = &config;
    std::size_t pos = 0;
    while (true) {
        const auto dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (!cur->is_object() || !cur->contains(key)) {
            throw ConfigError("override names unknown key '" + dotted + "'");
        }
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

namespace {

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed JSON in " + path.string());
    return j;
}

}  // namespace

TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides) {
    // user file merges onto the full default schema so dotted overrides can
    // target any known key even when the file is partial
    json j = TrainConfig{}.to_json();
    j.update(load_json_file(path), /*merge_objects=*/true);
    for (const auto& o : overrides) apply_override(j, o);
    return TrainConfig::from_json(j);
}

json phantom_spec_to_json(const phantom::PhantomSpec& spec) {
    return {{"volume_dims", spec.volume_dims},
            {"voxel_spacing_um", spec.voxel_spacing_um},
            {"nuclei_count", spec.nuclei_count},
            {"radius_range_um", spec.radius_range_um},
            {"focal_plane_z", spec.focal_plane_z},
            {"contrast_amplitude", spec.contrast_amplitude},
            {"noise_sigma", spec.noise_sigma},
            {"seed", spec.seed}};
}

phantom::PhantomSpec phantom_spec_from_json(const json& j) {
    require_known_keys(j, {"volume_dims", "voxel_spacing_um", "nuclei_count", "radius_range_um",
                           "focal_plane_z", "contrast_amplitude", "noise_sigma", "seed"},
                       "phantom spec");
    phantom::PhantomSpec s;
    if (j.contains("volume_dims")) j.at("volume_dims").get_to(s.volume_dims);
    if (j.contains("voxel_spacing_um")) j.at("voxel_spacing_um").get_to(s.voxel_spacing_um);
    s.nuclei_count = j.value("nuclei_count", s.nuclei_count);
    if (j.contains("radius_range_um")) j.at("radius_range_um").get_to(s.radius_range_um);
    s.focal_plane_z = j.value("focal_plane_z", s.focal_plane_z);
    s.contrast_amplitude = j.value("contrast_amplitude", s.contrast_amplitude);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    try {
        s.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("phantom spec: ") + e.what());
    }
    return s;
}

phantom::PhantomSpec load_phantom_spec(const std::filesystem::path& path,
                                       const std::vector<std::string>& overrides) {
    json j = phantom_spec_to_json(phantom::PhantomSpec{});
    j.update(load_json_file(path), /*merge_objects=*/true);
    for (const auto& o : overrides) apply_override(j, o);
    return phantom_spec_from_json(j);
}

}  // namespace bitstain::train
