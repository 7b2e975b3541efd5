#include "fieldseg/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "fieldseg/errors.hpp"
#include "fieldseg/geojson.hpp"
#include "fieldseg/loss_metrics.hpp"
#include "fieldseg/model_config.hpp"
#include "fieldseg/postprocess.hpp"
#include "fieldseg/raster_io.hpp"
#include "fieldseg/report.hpp"
#include "fieldseg/s1proc.hpp"
#include "fieldseg/synth.hpp"
#include "fieldseg/weights_io.hpp"

namespace fieldseg::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 ok, 1 unhandled, 2 DimensionError, 3 FormatError, 4 ConfigError,\n"
    "5 WeightError, 6 IoError, 7 RangeError, 8 TrainingError, 9 DegenerateBandError,\n"
    "10 DegenerateSampleError, 11 EmptyGeometryError";

DenseTensor take_band(const io::RasterContainer& rc, const std::string& wanted) {
    const Shape& d = rc.dims;
    if (d.size() != 3)
        throw FormatError("expected a [C,H,W] raster, got dims " + shape_to_string(d));
    std::size_t band = 0;
    if (d[0] > 1) {
        bool found = false;
        for (std::size_t i = 0; i < rc.band_names.size(); ++i)
            if (rc.band_names[i] == wanted) {
                band = i;
                found = true;
                break;
            }
        if (!found)
            throw FormatError("raster has no band named '" + wanted + "'");
    }
    const std::size_t plane = d[1] * d[2];
    std::vector<double> values(rc.data.data() + band * plane,
                               rc.data.data() + (band + 1) * plane);
    return DenseTensor(Shape{d[1], d[2]}, std::move(values));
}

io::RasterContainer ebd_raster(const MultitaskPrediction& pred,
                               const io::RasterContainer& like) {
    io::RasterContainer out;
    const std::size_t h = pred.extent.extent(0), w = pred.extent.extent(1);
    out.dims = {3, h, w};
    out.band_names = {"extent", "boundary", "distance"};
    out.geotransform = like.geotransform;
    out.crs = like.crs;
    std::vector<double> values;
    values.reserve(3 * h * w);
    for (const DenseTensor* layer : {&pred.extent, &pred.boundary, &pred.distance})
        values.insert(values.end(), layer->storage().begin(), layer->storage().end());
    out.data = DenseTensor(out.dims, std::move(values));
    return out;
}

// ---- synth-data ----

struct SynthArgs {
    std::uint64_t seed = 7;
    std::size_t size = 64;
    int fields = 5;
    int times = 4;
    double cloud_fraction = 0.0;
    double cloud_speed = 6.0;
    int speckle_looks = 4;
    std::string out_dir;
};

int cmd_synth_data(const SynthArgs& a) {
    synth::SceneSpec spec;
    spec.seed = a.seed;
    spec.height = spec.width = a.size;
    spec.n_fields = a.fields;
    spec.times = a.times;
    spec.cloud_fraction = a.cloud_fraction;
    spec.cloud_speed_px = a.cloud_speed;
    spec.speckle_looks = a.speckle_looks;

    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + a.out_dir);

    synth::FieldScene scene = synth::gen_fields(spec);
    synth::TimeSeries ts = synth::gen_timeseries(spec, scene);

    const std::array<double, 6> gt_transform{0.0, 10.0, 0.0, 0.0, 0.0, -10.0};
    const std::string crs = "local-meters";
    const auto t_count = static_cast<std::size_t>(spec.times);

    io::RasterContainer s2;
    s2.dims = {4, t_count, spec.height, spec.width};
    s2.band_names = {"blue", "green", "red", "nir"};
    s2.geotransform = gt_transform;
    s2.crs = crs;
    s2.data = ts.optical;
    s2.write((fs::path(a.out_dir) / "s2.fsr").string());

    io::RasterContainer s1;
    s1.dims = {5, t_count, spec.height, spec.width};
    s1.band_names = s1::kBandOrder;
    s1.geotransform = gt_transform;
    s1.crs = crs;
    s1.data = ts.sar;
    s1.write((fs::path(a.out_dir) / "s1.fsr").string());

    io::RasterContainer gt;
    gt.dims = {3, spec.height, spec.width};
    gt.band_names = {"extent", "boundary", "distance"};
    gt.geotransform = gt_transform;
    gt.crs = crs;
    {
        std::vector<double> values;
        values.reserve(3 * spec.height * spec.width);
        for (const DenseTensor* layer :
             {&scene.gt.extent, &scene.gt.boundary, &scene.gt.distance})
            values.insert(values.end(), layer->storage().begin(), layer->storage().end());
        gt.data = DenseTensor(gt.dims, std::move(values));
    }
    gt.write((fs::path(a.out_dir) / "gt.fsr").string());

    io::RasterContainer clouds;
    clouds.dims = {1, t_count, spec.height, spec.width};
    clouds.band_names = {"cloud"};
    clouds.geotransform = gt_transform;
    clouds.crs = crs;
    {
        std::vector<double> values;
        values.reserve(t_count * spec.height * spec.width);
        for (const BoolImage& m : ts.cloud_masks)
            for (auto v : m.data) values.push_back(v ? 1.0 : 0.0);
        clouds.data = DenseTensor(clouds.dims, std::move(values));
    }
    clouds.write((fs::path(a.out_dir) / "clouds.fsr").string());

    post::RasterMeta meta;
    meta.width = spec.width;
    meta.height = spec.height;
    meta.geotransform = gt_transform;
    meta.crs_tag = crs;
    PolygonSet polys =
        post::components_to_polygons(threshold_mask(scene.gt.extent, 0.5), meta);
    io::write_geojson(polys, (fs::path(a.out_dir) / "gt_polygons.geojson").string());
    return 0;
}

// ---- transform-s1 ----

int cmd_transform_s1(const std::string& in, const std::string& out) {
    io::RasterContainer rc = io::RasterContainer::read(in);
    if (rc.dims.size() != 4 || rc.dims[0] != 5)
        throw FormatError("transform-s1 expects a [5,T,H,W] raster");
    if (!rc.band_names.empty() && rc.band_names != s1::kBandOrder)
        throw FormatError("band order must be [alpha, anisotropy, entropy, vh, vv]");
    s1::S1Stack stack{rc.data, rc.transformed};
    s1::S1Stack transformed = s1::transform_s1(stack);
    rc.data = transformed.bands;
    rc.transformed = true;
    rc.write(out);
    return 0;
}

// ---- decompose-dualpol ----

int cmd_decompose(const std::string& in, const std::string& out) {
    io::RasterContainer rc = io::RasterContainer::read(in);
    if (rc.dims.empty() || rc.dims[0] != 8)
        throw FormatError("decompose-dualpol expects 8 channels "
                          "[re00,im00,re01,im01,re10,im10,re11,im11]");
    std::size_t plane = 1;
    for (std::size_t i = 1; i < rc.dims.size(); ++i) plane *= rc.dims[i];

    Shape out_dims = rc.dims;
    out_dims[0] = 3;
    std::vector<double> values(3 * plane);
    const double* d = rc.data.data();
    for (std::size_t i = 0; i < plane; ++i) {
        s1::DualPolSample j;
        j.j00 = {d[0 * plane + i], d[1 * plane + i]};
        j.j01 = {d[2 * plane + i], d[3 * plane + i]};
        j.j10 = {d[4 * plane + i], d[5 * plane + i]};
        j.j11 = {d[6 * plane + i], d[7 * plane + i]};
        s1::DualPolResult r = s1::dualpol_decompose(j);
        values[0 * plane + i] = r.alpha_bar2;
        values[1 * plane + i] = r.entropy2;
        values[2 * plane + i] = r.anisotropy;
    }
    io::RasterContainer res;
    res.dims = out_dims;
    res.band_names = {"alpha2", "entropy2", "anisotropy"};
    res.geotransform = rc.geotransform;
    res.crs = rc.crs;
    res.data = DenseTensor(out_dims, std::move(values));
    res.write(out);
    return 0;
}

// ---- predict ----

int cmd_predict(const std::string& cfg_path, const std::string& weights_path,
                const std::string& in, const std::string& in_s1, const std::string& out) {
    io::ModelConfig cfg = io::read_model_config(cfg_path);
    nn::ModelWeights w = io::read_weights(weights_path);
    io::RasterContainer rc = io::RasterContainer::read(in);
    if (rc.dims.size() != 4) throw FormatError("predict expects a [C,T,H,W] raster");

    MultitaskPrediction pred;
    if (std::holds_alternative<nn::UNet3DConfig>(cfg)) {
        pred = nn::unet3d_forward(rc.data, std::get<nn::UNet3DConfig>(cfg), w);
    } else {
        if (in_s1.empty()) throw ConfigError("fusion model requires --in-s1");
        io::RasterContainer rc_s1 = io::RasterContainer::read(in_s1);
        if (rc_s1.dims.size() != 4)
            throw FormatError("predict expects a [C,T,H,W] raster for --in-s1");
        pred = nn::fusion_forward(rc.data, rc_s1.data, std::get<nn::FusionConfig>(cfg), w);
    }
    io::RasterContainer flat = rc;
    flat.dims = {rc.dims[0], rc.dims[2], rc.dims[3]};  // carries geo info only
    flat.data = DenseTensor(flat.dims);
    flat.band_names.clear();
    ebd_raster(pred, flat).write(out);
    return 0;
}

// ---- metrics ----

int cmd_metrics(const std::string& pred_path, const std::string& truth_path,
                const std::string& report_path, double threshold) {
    io::RasterContainer pred = io::RasterContainer::read(pred_path);
    io::RasterContainer truth = io::RasterContainer::read(truth_path);
    DenseTensor pe = take_band(pred, "extent");
    DenseTensor te = take_band(truth, "extent");
    BoolImage pm = threshold_mask(pe, threshold);
    BoolImage tm = threshold_mask(te, threshold);
    if (pm.h != tm.h || pm.w != tm.w)
        throw DimensionError("prediction and truth extents differ");

    IntImage pl(pm.h, pm.w), tl(tm.h, tm.w);
    for (std::size_t i = 0; i < pm.data.size(); ++i) {
        pl.data[i] = pm.data[i] ? 1 : 0;
        tl.data[i] = tm.data[i] ? 1 : 0;
    }
    metrics::ConfusionMatrix cm = metrics::confusion(pl, tl, 2);
    const double iou = metrics::iou_binary(pm, tm);
    const auto mcc_v = metrics::mcc(cm);
    const auto kappa_v = metrics::cohens_kappa(cm);
    const auto fdr_v = metrics::fdr(pm, tm);
    const auto for_v = metrics::for_rate(pm, tm);

    std::string body = io::report_line(
        "raster", {{"id", "0"},
                   {"iou", io::format_value(iou)},
                   {"mcc", io::format_value(mcc_v.value)},
                   {"kappa", io::format_value(kappa_v.value)},
                   {"fdr", io::format_value(fdr_v.value)},
                   {"for", io::format_value(for_v.value)},
                   {"msd", "nan"},
                   {"hausdorff", "nan"}});
    io::write_atomic(report_path, body);
    return 0;
}

// ---- polygonize ----

int cmd_polygonize(const std::string& extent_path, const std::string& bounds_path, double tb,
                   double te, double min_area, double tolerance, const std::string& out) {
    io::RasterContainer er = io::RasterContainer::read(extent_path);
    io::RasterContainer br = io::RasterContainer::read(bounds_path);
    DenseTensor e = take_band(er, "extent");
    DenseTensor b = take_band(br, "boundary");
    post::ThresholdPair t{tb, te};
    BoolImage mask = post::refined_threshold(e, b, t);
    PolygonSet polys = post::components_to_polygons(mask, er.meta());
    polys = post::simplify_filter(polys, tolerance, min_area);
    io::write_geojson(polys, out);
    return 0;
}

// ---- match-polygons ----

int cmd_match(const std::string& pred_path, const std::string& truth_path, double iou_min,
              const std::string& report_path) {
    PolygonSet pred = io::read_geojson(pred_path);
    PolygonSet truth = io::read_geojson(truth_path);
    std::vector<post::PolygonMatch> matches = post::match_polygons(pred, truth, iou_min);
    std::string body;
    double sum_iou = 0.0, sum_h = 0.0, sum_m = 0.0;
    for (const post::PolygonMatch& m : matches) {
        body += io::report_line(
            "match", {{"pred", std::to_string(m.pred_id)},
                      {"truth", std::to_string(m.truth_id)},
                      {"iou", io::format_value(m.iou)},
                      {"mcc", "nan"},
                      {"kappa", "nan"},
                      {"fdr", "nan"},
                      {"for", "nan"},
                      {"msd", io::format_value(m.msd)},
                      {"hausdorff", io::format_value(m.hausdorff)}});
        sum_iou += m.iou;
        sum_h += m.hausdorff;
        sum_m += m.msd;
    }
    const double n = std::max<std::size_t>(1, matches.size());
    body += io::report_line("summary",
                            {{"matches", std::to_string(matches.size())},
                             {"mean_iou", io::format_value(sum_iou / n)},
                             {"mean_msd", io::format_value(sum_m / n)},
                             {"mean_hausdorff", io::format_value(sum_h / n)}});
    io::write_atomic(report_path, body);
    return 0;
}

// ---- tune-thresholds ----

int cmd_tune(const std::string& extent_path, const std::string& bounds_path,
             const std::string& truth_path, double grid_step, const std::string& report_path,
             int jobs) {
    io::RasterContainer er = io::RasterContainer::read(extent_path);
    io::RasterContainer br = io::RasterContainer::read(bounds_path);
    io::RasterContainer tr = io::RasterContainer::read(truth_path);
    DenseTensor e = take_band(er, "extent");
    DenseTensor b = take_band(br, "boundary");
    BoolImage truth_mask = threshold_mask(take_band(tr, "extent"), 0.5);
    const int truth_count = post::label_components(truth_mask).count;

    post::TuneResult res = post::tune_thresholds(e, b, truth_mask, truth_count,
                                                 post::default_threshold_grid(grid_step), jobs);
    std::string body;
    for (const post::TuneCandidate& c : res.candidates) {
        body += io::report_line(
            "candidate", {{"tb", io::format_value(c.thresholds.t_b)},
                          {"te", io::format_value(c.thresholds.t_e)},
                          {"one_minus_iou", io::format_value(c.objectives[0])},
                          {"fdr", io::format_value(c.objectives[1])},
                          {"for", io::format_value(c.objectives[2])},
                          {"dn", io::format_value(c.objectives[3])},
                          {"on_front", c.on_front ? "1" : "0"}});
    }
    body += io::report_line("best", {{"tb", io::format_value(res.best.t_b)},
                                     {"te", io::format_value(res.best.t_e)},
                                     {"truth_count", std::to_string(truth_count)}});
    io::write_atomic(report_path, body);
    return 0;
}

// ---- fit-toy ----

int cmd_fit_toy(std::uint64_t seed, int steps, double lr, const std::string& out_weights,
                const std::string& trace_path, const std::string& out_cfg) {
    nn::UNet3DConfig cfg = toy_model_config();
    std::vector<nn::ToySample> data = toy_dataset(seed);
    nn::FitResult res = nn::fit_toy(cfg, data, steps, lr, seed);
    io::write_weights(res.weights, out_weights);
    if (!trace_path.empty()) {
        std::string body;
        for (std::size_t i = 0; i < res.loss_trace.size(); ++i)
            body += io::report_line("step", {{"index", std::to_string(i)},
                                             {"loss", io::format_value(res.loss_trace[i])}});
        io::write_atomic(trace_path, body);
    }
    if (!out_cfg.empty()) io::write_model_config(cfg, out_cfg);
    return 0;
}

} // namespace

nn::UNet3DConfig toy_model_config() {
    nn::UNet3DConfig cfg;
    cfg.stage_repeats = {1};  // bridge only; the pre-compaction stage makes two
    cfg.init_features = 8;
    cfg.in_channels = 4;
    cfg.patch = PatchSpec{2, 4, 4};
    cfg.mbconv_expansion = 2;
    cfg.se_reduction = 4;
    cfg.ffn_expansion = 2;
    cfg.compaction = nn::Compaction::mean_time;
    return cfg;
}

std::vector<nn::ToySample> toy_dataset(std::uint64_t seed, int n_scenes, int times,
                                       std::size_t size) {
    std::vector<nn::ToySample> data;
    for (int i = 0; i < n_scenes; ++i) {
        synth::SceneSpec spec;
        spec.seed = seed + static_cast<std::uint64_t>(i);
        spec.height = spec.width = size;
        spec.n_fields = 5;
        spec.times = times;
        spec.cloud_fraction = (i % 2 == 1) ? 0.2 : 0.0;  // half cloudy
        synth::FieldScene scene = synth::gen_fields(spec);
        synth::TimeSeries ts = synth::gen_timeseries(spec, scene);
        nn::ToySample sample;
        sample.input = s1::standardize(ts.optical).data;
        sample.target = scene.gt;
        data.push_back(std::move(sample));
    }
    return data;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"fieldseg: field-boundary delineation pipeline on synthetic rasters"};
    app.footer(kExitCodeHelp);
    app.require_subcommand(1);

    // synth-data
    SynthArgs sa;
    CLI::App* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic scene");
    synth_cmd->add_option("--seed", sa.seed);
    synth_cmd->add_option("--size", sa.size);
    synth_cmd->add_option("--fields", sa.fields);
    synth_cmd->add_option("--times", sa.times);
    synth_cmd->add_option("--cloud-fraction", sa.cloud_fraction);
    synth_cmd->add_option("--cloud-speed", sa.cloud_speed);
    synth_cmd->add_option("--speckle-looks", sa.speckle_looks);
    synth_cmd->add_option("--out-dir", sa.out_dir)->required();

    // transform-s1
    std::string ts_in, ts_out;
    CLI::App* ts_cmd = app.add_subcommand("transform-s1", "angle to radians, symlog VH/VV");
    ts_cmd->add_option("--in", ts_in)->required();
    ts_cmd->add_option("--out", ts_out)->required();

    // decompose-dualpol
    std::string dp_in, dp_out;
    CLI::App* dp_cmd =
        app.add_subcommand("decompose-dualpol", "entropy/alpha over 2x2 coherency rasters");
    dp_cmd->add_option("--in-j", dp_in)->required();
    dp_cmd->add_option("--out", dp_out)->required();

    // predict
    std::string pr_cfg, pr_weights, pr_in, pr_in_s1, pr_out;
    CLI::App* pr_cmd = app.add_subcommand("predict", "run a model forward pass");
    pr_cmd->add_option("--model-cfg", pr_cfg)->required();
    pr_cmd->add_option("--weights", pr_weights)->required();
    pr_cmd->add_option("--in", pr_in)->required();
    pr_cmd->add_option("--in-s1", pr_in_s1);
    pr_cmd->add_option("--out", pr_out)->required();

    // metrics
    std::string me_pred, me_truth, me_report;
    double me_threshold = 0.5;
    CLI::App* me_cmd = app.add_subcommand("metrics", "raster metric suite");
    me_cmd->add_option("--pred", me_pred)->required();
    me_cmd->add_option("--truth", me_truth)->required();
    me_cmd->add_option("--report", me_report)->required();
    me_cmd->add_option("--threshold", me_threshold);

    // polygonize
    std::string po_extent, po_bounds, po_out;
    double po_tb = 0.2, po_te = 0.4, po_min_area = 100.0, po_tolerance = 10.0;
    CLI::App* po_cmd = app.add_subcommand("polygonize", "refined threshold to GeoJSON fields");
    po_cmd->add_option("--extent", po_extent)->required();
    po_cmd->add_option("--bounds", po_bounds)->required();
    po_cmd->add_option("--tb", po_tb);
    po_cmd->add_option("--te", po_te);
    po_cmd->add_option("--min-area", po_min_area);
    po_cmd->add_option("--tolerance", po_tolerance);
    po_cmd->add_option("--out-geojson", po_out)->required();

    // match-polygons
    std::string ma_pred, ma_truth, ma_report;
    double ma_iou_min = 0.001;
    CLI::App* ma_cmd = app.add_subcommand("match-polygons", "greedy best-IoU matching");
    ma_cmd->add_option("--pred", ma_pred)->required();
    ma_cmd->add_option("--truth", ma_truth)->required();
    ma_cmd->add_option("--iou-min", ma_iou_min);
    ma_cmd->add_option("--report", ma_report)->required();

    // tune-thresholds
    std::string tu_extent, tu_bounds, tu_truth, tu_report;
    double tu_step = 0.05;
    int tu_jobs = 1;
    CLI::App* tu_cmd = app.add_subcommand("tune-thresholds", "Pareto grid search over (tb,te)");
    tu_cmd->add_option("--extent", tu_extent)->required();
    tu_cmd->add_option("--bounds", tu_bounds)->required();
    tu_cmd->add_option("--truth", tu_truth)->required();
    tu_cmd->add_option("--grid-step", tu_step);
    tu_cmd->add_option("--report", tu_report)->required();
    tu_cmd->add_option("--jobs", tu_jobs);

    // fit-toy
    std::uint64_t ft_seed = 7;
    int ft_steps = 60;
    double ft_lr = 0.2;
    std::string ft_weights, ft_trace, ft_cfg;
    CLI::App* ft_cmd = app.add_subcommand("fit-toy", "train the reduced model on synthetic data");
    ft_cmd->add_option("--seed", ft_seed);
    ft_cmd->add_option("--steps", ft_steps);
    ft_cmd->add_option("--lr", ft_lr);
    ft_cmd->add_option("--out-weights", ft_weights)->required();
    ft_cmd->add_option("--trace", ft_trace);
    ft_cmd->add_option("--out-cfg", ft_cfg);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth_data(sa);
        if (ts_cmd->parsed()) return cmd_transform_s1(ts_in, ts_out);
        if (dp_cmd->parsed()) return cmd_decompose(dp_in, dp_out);
        if (pr_cmd->parsed()) return cmd_predict(pr_cfg, pr_weights, pr_in, pr_in_s1, pr_out);
        if (me_cmd->parsed()) return cmd_metrics(me_pred, me_truth, me_report, me_threshold);
        if (po_cmd->parsed())
            return cmd_polygonize(po_extent, po_bounds, po_tb, po_te, po_min_area,
                                  po_tolerance, po_out);
        if (ma_cmd->parsed()) return cmd_match(ma_pred, ma_truth, ma_iou_min, ma_report);
        if (tu_cmd->parsed())
            return cmd_tune(tu_extent, tu_bounds, tu_truth, tu_step, tu_report, tu_jobs);
        if (ft_cmd->parsed())
            return cmd_fit_toy(ft_seed, ft_steps, ft_lr, ft_weights, ft_trace, ft_cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: Unhandled: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace fieldseg::cli
