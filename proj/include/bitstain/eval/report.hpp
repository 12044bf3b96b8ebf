#ifndef BITSTAIN_EVAL_REPORT_HPP
#define BITSTAIN_EVAL_REPORT_HPP

#include <optional>
#include <string>

#include <json.hpp>

#include "bitstain/eval/distribution.hpp"
#include "bitstain/eval/metrics.hpp"

namespace bitstain::eval {

// A metric that may be undefined on the given inputs; absence carries a
// reason instead of poisoning the rest of the report.
struct MetricValue {
    std::optional<double> value;
    std::string absent_reason;

    static MetricValue of(double v) { return {v, {}}; }
    static MetricValue absent(std::string reason) { return {std::nullopt, std::move(reason)}; }
};

struct MetricsReport {
    MetricValue fid;
    MetricValue kid;
    MetricValue dice;
    MetricValue hd95_um;
    MetricValue mean_instance_volume_um3;     // prediction
    MetricValue gt_mean_instance_volume_um3;  // ground truth
    std::size_t pred_instances = 0;
    std::size_t gt_instances = 0;
    std::string extractor_tag;
    std::string pred_id;
    std::string gt_id;
    std::string segmentation_source;  // e.g. "greedy-iou-stacking", "threshold-detector"

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    std::string table() const;
};

struct EvaluateOptions {
    Hd95Variant hd95_variant = Hd95Variant::Pooled;
    const FeatureSet* feats_pred = nullptr;
    const FeatureSet* feats_real = nullptr;
};

// Assembles all metrics; each field fails independently with a reason.
MetricsReport evaluate_pair(const LabelVolume& pred, const LabelVolume& gt,
                            const EvaluateOptions& opts = {});

}  // namespace bitstain::eval

#endif
