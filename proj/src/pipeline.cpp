#include "embreg/pipeline.hpp"

#include <chrono>
#include <fstream>

#include "embreg/affine.hpp"
#include "embreg/io.hpp"
#include "embreg/optimize.hpp"
#include "embreg/slices.hpp"

namespace embreg {

const StageReport* RunReport::find(Stage s) const {
    for (const auto& r : stages)
        if (r.stage == s) return &r;
    return nullptr;
}

PipelineInputs load_inputs(const PipelineConfig& cfg) {
    PipelineInputs in;
    try {
        in.fixed = load_volume(cfg.fixed);
        in.moving = load_volume(cfg.moving);
        if (cfg.has_labels()) {
            in.fixed_labels = load_labels(cfg.fixed_labels);
            in.moving_labels = load_labels(cfg.moving_labels);
        }
        if (cfg.embeddings == "file") {
            in.fixed_embedding = load_embedding(cfg.fixed_embedding);
            in.moving_embedding = load_embedding(cfg.moving_embedding);
        }
    } catch (const std::exception& e) {
        throw StageError("load", e.what());
    }
    return in;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

DisplacementField with_geometry(const DisplacementField& f, const Volume& like) {
    return DisplacementField(like.dims(), like.spacing(), like.origin(),
                             std::vector<float>(f.data().begin(), f.data().end()));
}

bool same_grid(const Dims& d, const Vec3& sp, const Vec3& org, const Dims& d2, const Vec3& sp2, const Vec3& org2) {
    return d == d2 && sp == sp2 && org == org2;
}

struct Prepared {
    Volume fixed, moving;  // windowed to [-1, 1], same grid
    std::optional<LabelVolume> fixed_labels, moving_labels;
    BodyMask mask;
};

Prepared preprocess(const PipelineConfig& cfg, const PipelineInputs& in) {
    Volume f = in.fixed, m = in.moving;
    std::optional<LabelVolume> fl = in.fixed_labels, ml = in.moving_labels;
    if (fl && fl->dims() != f.dims()) throw std::invalid_argument("fixed labels do not match the fixed image grid");
    if (ml && ml->dims() != m.dims()) throw std::invalid_argument("moving labels do not match the moving image grid");
    if (cfg.crop) {
        f = crop(f, *cfg.crop);
        m = crop(m, *cfg.crop);
        if (fl) fl = crop(*fl, *cfg.crop);
        if (ml) ml = crop(*ml, *cfg.crop);
    }
    if (cfg.target_spacing > 0.0) {
        const Vec3 iso{cfg.target_spacing, cfg.target_spacing, cfg.target_spacing};
        if (f.spacing() != iso) {
            f = resample_isotropic(f, cfg.target_spacing);
            if (fl) fl = resample_labels_isotropic(*fl, cfg.target_spacing);
        }
        if (m.spacing() != iso) {
            m = resample_isotropic(m, cfg.target_spacing);
            if (ml) ml = resample_labels_isotropic(*ml, cfg.target_spacing);
        }
    }
    if (!same_grid(f.dims(), f.spacing(), f.origin(), m.dims(), m.spacing(), m.origin())) {
        m = reframe(m, f.dims(), f.spacing(), f.origin());
        if (ml) ml = reframe_labels(*ml, f.dims(), f.spacing(), f.origin());
    }
    Prepared p;
    p.fixed = window_normalize(f, cfg.hu_lo, cfg.hu_hi);
    p.moving = window_normalize(m, cfg.hu_lo, cfg.hu_hi);
    p.fixed_labels = fl;
    p.moving_labels = ml;
    p.mask = compute_body_mask(p.fixed, cfg.body_threshold);
    return p;
}

EmbeddingVolume prepare_embedding(const std::optional<EmbeddingVolume>& external, const Volume& image, int channels,
                                  const char* which) {
    if (!external) return synth_descriptors(image, channels);
    if (external->dims() != image.dims())
        throw std::invalid_argument(std::string(which) + " embedding dims " + to_string(external->dims()) +
                                    " do not match the preprocessed image " + to_string(image.dims()));
    return external->normalized() ? *external : normalize_embedding(*external);
}

}  // namespace

nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j;
    j["preprocess_seconds"] = r.preprocess_seconds;
    j["embedding_seconds"] = r.embedding_seconds;
    if (r.initial_metrics) j["initial_metrics"] = to_json(*r.initial_metrics);
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : r.stages) {
        nlohmann::json js;
        js["stage"] = stage_name(s.stage);
        js["seconds"] = s.seconds;
        js["warped"] = s.warped.string();
        js["field"] = s.field.string();
        js["total_field"] = s.total_field.string();
        if (!s.embedding.empty()) js["embedding"] = s.embedding.string();
        if (s.metrics) js["metrics"] = to_json(*s.metrics);
        if (s.stage == Stage::Affine) {
            js["k"] = r.affine_k;
            js["candidates"] = r.affine_candidates;
            js["residual_rms"] = r.affine_residual_rms;
            js["affine"] = r.affine_file.string();
        } else if (s.stage == Stage::Coarse) {
            js["k"] = r.coarse_k;
        } else {
            js["loss_history"] = r.loss_history.string();
            js["diverged"] = r.deform_diverged;
        }
        stages.push_back(js);
    }
    j["stages"] = stages;
    j["total_field"] = r.total_field.string();
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& p : r.slices) slices.push_back(p.string());
    j["slices"] = slices;
    return j;
}

RunReport run_pipeline(const PipelineConfig& cfg, const PipelineInputs& in) {
    try {
        validate(cfg);
    } catch (const ConfigError& e) {
        throw StageError("config", e.what());
    }
    const auto& out = cfg.output_dir;
    std::filesystem::create_directories(out);
    RunReport report;

    auto t0 = Clock::now();
    Prepared p;
    try {
        p = preprocess(cfg, in);
    } catch (const std::exception& e) {
        throw StageError("preprocess", e.what());
    }
    report.preprocess_seconds = seconds_since(t0);

    const bool synth = !in.fixed_embedding;
    t0 = Clock::now();
    EmbeddingVolume sf, sm;
    try {
        if (synth != !in.moving_embedding) throw std::invalid_argument("both embeddings or neither must be given");
        sf = prepare_embedding(in.fixed_embedding, p.fixed, cfg.synth_channels, "fixed");
        sm = prepare_embedding(in.moving_embedding, p.moving, cfg.synth_channels, "moving");
    } catch (const std::exception& e) {
        throw StageError("embedding", e.what());
    }
    report.embedding_seconds = seconds_since(t0);

    auto metrics_for = [&](const DisplacementField* total) -> std::optional<MetricsReport> {
        if (!p.fixed_labels) return std::nullopt;
        const LabelVolume warped = total ? warp_labels_by_field(*p.moving_labels, *total) : *p.moving_labels;
        return compute_metrics(*p.fixed_labels, warped, total, total ? &p.mask : nullptr, cfg.with_asd);
    };
    report.initial_metrics = metrics_for(nullptr);
    if (report.initial_metrics) write_metrics_json(*report.initial_metrics, out / "metrics_initial.json");

    const GridMatchParams gm{cfg.grid_stride, cfg.theta, cfg.search_stride};
    std::optional<DisplacementField> total;
    Volume current = p.moving;
    EmbeddingVolume current_embedding = sm;
    std::vector<std::pair<std::string, Volume>> panels;
    std::vector<std::optional<LabelVolume>> panel_labels;

    for (Stage stage : cfg.stages) {
        const std::string name = stage_name(stage);
        StageReport sr;
        sr.stage = stage;
        t0 = Clock::now();
        try {
            DisplacementField step;
            if (stage == Stage::Affine) {
                MatchSet matches;
                try {
                    matches = grid_match(sf, current_embedding, p.mask, gm);
                } catch (const NoCorrespondenceError& e) {
                    throw std::runtime_error(std::string(e.what()) + "; try lowering theta");
                }
                const AffineFit fit = fit_affine(matches);
                if (!fit.transform.invertible()) throw std::runtime_error("estimated affine is singular");
                report.affine_k = fit.k;
                report.affine_candidates = matches.candidates;
                report.affine_residual_rms = fit.residual_rms;
                report.affine_file = out / "affine.aff";
                save_affine(fit.transform, report.affine_file);
                step = affine_to_field(fit.transform, p.fixed.dims());
            } else if (stage == Stage::Coarse) {
                const MatchSet matches = grid_match(sf, current_embedding, p.mask, gm);
                report.coarse_k = matches.size();
                step = build_coarse_field(matches, p.fixed.dims(), cfg.grid_stride);
            } else {
                const OptResult r = optimize_field(p.fixed, current, sf, current_embedding, p.mask, cfg.opt);
                report.deform_diverged = r.diverged;
                report.loss_history = out / "loss_history.csv";
                write_loss_history_csv(r.history, report.loss_history);
                step = r.field;
            }
            step = with_geometry(step, p.fixed);
            total = total ? with_geometry(compose_fields(*total, step), p.fixed) : step;

            // Warp the original moving inputs once by the cumulative field.
            current = warp_by_field(p.moving, *total);
            current_embedding = synth ? synth_descriptors(current, cfg.synth_channels)
                                      : warp_embedding_by_field(sm, *total);
            sr.seconds = seconds_since(t0);

            sr.field = out / ("field_" + name + ".evol");
            sr.total_field = out / ("total_field_" + name + ".evol");
            sr.warped = out / ("warped_" + name + ".evol");
            save_field(step, sr.field);
            save_field(*total, sr.total_field);
            save_volume(current, sr.warped);
            if (cfg.write_embeddings) {
                sr.embedding = out / ("embedding_" + name + ".evol");
                save_embedding(current_embedding, sr.embedding);
            }
            sr.metrics = metrics_for(&*total);
            if (sr.metrics) {
                write_metrics_json(*sr.metrics, out / ("metrics_" + name + ".json"));
                write_metrics_csv(*sr.metrics, out / ("metrics_" + name + ".csv"));
            }
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        if (cfg.write_slices) {
            panels.emplace_back("warped_" + name, current);
            panel_labels.push_back(p.moving_labels ? std::optional(warp_labels_by_field(*p.moving_labels, *total))
                                                   : std::nullopt);
        }
        report.stages.push_back(sr);
    }

    report.total_field = out / "total_field.evol";
    try {
        save_field(*total, report.total_field);
        if (cfg.write_slices) {
            std::vector<SlicePanel> sp;
            sp.push_back({"fixed", &p.fixed, p.fixed_labels ? &*p.fixed_labels : nullptr});
            sp.push_back({"moving", &p.moving, p.moving_labels ? &*p.moving_labels : nullptr});
            for (std::size_t i = 0; i < panels.size(); ++i)
                sp.push_back({panels[i].first, &panels[i].second, panel_labels[i] ? &*panel_labels[i] : nullptr});
            const Dims& d = p.fixed.dims();
            const int depth = cfg.slice_axis == SliceAxis::Z ? d.d : (cfg.slice_axis == SliceAxis::Y ? d.h : d.w);
            const int index = cfg.slice_index < 0 ? depth / 2 : cfg.slice_index;
            report.slices = emit_slices(sp, cfg.slice_axis, index, out / "slices");
        }
        report.report_json = out / "run_report.json";
        std::ofstream os(report.report_json, std::ios::trunc);
        os << to_json(report).dump(2) << "\n";
        if (!os) throw IoError("write failed: " + report.report_json.string());
    } catch (const std::exception& e) {
        throw StageError("report", e.what());
    }
    return report;
}

RunReport run_pipeline(const PipelineConfig& cfg) {
    try {
        validate(cfg);
        validate_paths(cfg);
    } catch (const ConfigError& e) {
        throw StageError("config", e.what());
    }
    return run_pipeline(cfg, load_inputs(cfg));
}

}  // namespace embreg
