#include "bitstain/eval/report.hpp"

#include <iomanip>
#include <sstream>

namespace bitstain::eval {

using nlohmann::json;

namespace {

json metric_json(const MetricValue& m) {
    if (m.value) return *m.value;
    return {{"absent", m.absent_reason.empty() ? "undefined" : m.absent_reason}};
}

MetricValue metric_from_json(const json& j) {
    if (j.is_number()) return MetricValue::of(j.get<double>());
    return MetricValue::absent(j.value("absent", "undefined"));
}

std::string cell(const MetricValue& m, int precision) {
    if (!m.value) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << *m.value;
    return os.str();
}

}  // namespace

json MetricsReport::to_json() const {
    return {{"fid", metric_json(fid)},
            {"kid", metric_json(kid)},
            {"dice3d", metric_json(dice)},
            {"hd95_um", metric_json(hd95_um)},
            {"mean_instance_volume_um3", metric_json(mean_instance_volume_um3)},
            {"gt_mean_instance_volume_um3", metric_json(gt_mean_instance_volume_um3)},
            {"pred_instances", pred_instances},
            {"gt_instances", gt_instances},
            {"extractor_tag", extractor_tag},
            {"pred_id", pred_id},
            {"gt_id", gt_id},
            {"segmentation_source", segmentation_source}};
}

MetricsReport MetricsReport::from_json(const json& j) {
    MetricsReport r;
    r.fid = metric_from_json(j.at("fid"));
    r.kid = metric_from_json(j.at("kid"));
    r.dice = metric_from_json(j.at("dice3d"));
    r.hd95_um = metric_from_json(j.at("hd95_um"));
    r.mean_instance_volume_um3 = metric_from_json(j.at("mean_instance_volume_um3"));
    r.gt_mean_instance_volume_um3 = metric_from_json(j.at("gt_mean_instance_volume_um3"));
    r.pred_instances = j.at("pred_instances").get<std::size_t>();
    r.gt_instances = j.at("gt_instances").get<std::size_t>();
    r.extractor_tag = j.at("extractor_tag").get<std::string>();
    r.pred_id = j.at("pred_id").get<std::string>();
    r.gt_id = j.at("gt_id").get<std::string>();
    r.segmentation_source = j.at("segmentation_source").get<std::string>();
    return r;
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    os << "model        | FID     | KID     | 3D DICE | Nuc. Volume (um^3) | HD95 (um)\n";
    os << "-------------+---------+---------+---------+--------------------+----------\n";
    os << std::left << std::setw(13) << (pred_id.empty() ? "pred" : pred_id) << "| "
       << std::setw(8) << cell(fid, 2) << "| " << std::setw(8) << cell(kid, 4) << "| "
       << std::setw(8) << cell(dice, 3) << "| " << std::setw(19)
       << cell(mean_instance_volume_um3, 1) << "| " << cell(hd95_um, 2) << "\n";
    os << "ground-truth nuclei volume: " << cell(gt_mean_instance_volume_um3, 1) << " um^3 ("
       << gt_instances << " instances vs " << pred_instances << " predicted)\n";
    if (!segmentation_source.empty()) os << "segmentation: " << segmentation_source << "\n";
    return os.str();
}

MetricsReport evaluate_pair(const LabelVolume& pred, const LabelVolume& gt,
                            const EvaluateOptions& opts) {
    MetricsReport r;
    r.pred_instances = count_instances(pred);
    r.gt_instances = count_instances(gt);
    try {
        r.dice = MetricValue::of(dice3d(pred, gt));
    } catch (const Error& e) {
        r.dice = MetricValue::absent(e.what());
    }
    try {
        r.hd95_um = MetricValue::of(hd95(pred, gt, opts.hd95_variant));
    } catch (const Error& e) {
        r.hd95_um = MetricValue::absent(e.what());
    }
    try {
        r.mean_instance_volume_um3 = MetricValue::of(mean_instance_volume(pred));
    } catch (const Error& e) {
        r.mean_instance_volume_um3 = MetricValue::absent(e.what());
    }
    try {
        r.gt_mean_instance_volume_um3 = MetricValue::of(mean_instance_volume(gt));
    } catch (const Error& e) {
        r.gt_mean_instance_volume_um3 = MetricValue::absent(e.what());
    }
    if (opts.feats_pred && opts.feats_real) {
        try {
            r.fid = MetricValue::of(fid(*opts.feats_pred, *opts.feats_real));
        } catch (const Error& e) {
            r.fid = MetricValue::absent(e.what());
        }
        try {
            r.kid = MetricValue::of(kid(*opts.feats_pred, *opts.feats_real));
        } catch (const Error& e) {
            r.kid = MetricValue::absent(e.what());
        }
        r.extractor_tag = opts.feats_pred->extractor;
    } else {
        r.fid = MetricValue::absent("no features");
        r.kid = MetricValue::absent("no features");
    }
    return r;
}

}  // namespace bitstain::eval
