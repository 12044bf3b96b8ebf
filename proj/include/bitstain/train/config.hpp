#ifndef BITSTAIN_TRAIN_CONFIG_HPP
#define BITSTAIN_TRAIN_CONFIG_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bitstain/loss/losses.hpp"
#include "bitstain/net/generator.hpp"
#include "bitstain/phantom/phantom.hpp"
#include "bitstain/style/style.hpp"

namespace bitstain::train {

struct FusionConfig {
    double w0 = 1.0;
    double w_min = 0.0;
    // Inference-time injection weight; negative selects w_min.
    double inference_w = -1.0;

    double effective_inference_w() const { return inference_w >= 0 ? inference_w : w_min; }
};

struct TrainConfig {
    std::uint64_t seed = 1234;
    double lambda_cycle = 10.0;
    double lambda_idt = 0.5;
    double lambda_msc = 1.0;
    double lambda_style = 1.0;
    double learning_rate = 2e-4;
    int batch_size = 2;
    int epochs = 5;
    int pretrain_epochs = 0;
    int pretrain_batch_size = 4;
    double mask_ratio = 0.4;
    double ema_alpha = 0.99;
    double train_fraction = 0.6;
    int disc_channels = 32;
    FusionConfig fusion;
    net::GeneratorConfig generator;
    loss::ChannelSubsetConfig channel_subset;

    void validate() const;
    loss::LossWeights weights() const { return {lambda_cycle, lambda_idt, lambda_msc, lambda_style}; }

    nlohmann::json to_json() const;
    // Strict: unknown keys anywhere are fatal.
    static TrainConfig from_json(const nlohmann::json& j);
};

// Dotted-key overrides ("generator.input_size=32"); the key must already
// exist in the schema, values are parsed as JSON first, then as strings.
void apply_override(nlohmann::json& config, const std::string& dotted_key_value);

TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides = {});

nlohmann::json phantom_spec_to_json(const phantom::PhantomSpec& spec);
phantom::PhantomSpec phantom_spec_from_json(const nlohmann::json& j);  // strict
phantom::PhantomSpec load_phantom_spec(const std::filesystem::path& path,
                                       const std::vector<std::string>& overrides = {});

// Shared strict-JSON helper.
void require_known_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                        const std::string& context);

}  // namespace bitstain::train

#endif
