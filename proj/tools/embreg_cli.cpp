// embreg command-line front end.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "embreg/affine.hpp"
#include "embreg/config.hpp"
#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/io.hpp"
#include "embreg/losses.hpp"
#include "embreg/metrics.hpp"
#include "embreg/optimize.hpp"
#include "embreg/phantom.hpp"
#include "embreg/pipeline.hpp"
#include "embreg/slices.hpp"

using namespace embreg;
namespace fs = std::filesystem;

namespace {

// matches CSV: fz,fy,fx,mz,my,mx,similarity
void write_matches(const MatchSet& m, const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "fz,fy,fx,mz,my,mx,similarity\n";
    os.precision(9);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto& f = m.fixed_points[i];
        const auto& v = m.moving_points[i];
        os << f[0] << ',' << f[1] << ',' << f[2] << ',' << v[0] << ',' << v[1] << ',' << v[2] << ','
           << m.similarities[i] << '\n';
    }
}

MatchSet read_matches(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    MatchSet m;
    std::string line;
    std::getline(is, line);
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        std::array<int, 3> f{}, v{};
        double s = 0.0;
        if (!(ls >> f[0] >> f[1] >> f[2] >> v[0] >> v[1] >> v[2] >> s))
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed match row");
        m.fixed_points.push_back(f);
        m.moving_points.push_back(v);
        m.similarities.push_back(s);
    }
    m.candidates = m.size();
    return m;
}

BodyMask mask_for(const fs::path& volume, const Dims& dims, double lo, double hi, double threshold) {
    if (volume.empty()) return BodyMask::full(dims);
    const Volume v = window_normalize(load_volume(volume), lo, hi);
    if (v.dims() != dims) throw std::invalid_argument("mask volume dims differ from the data grid");
    return compute_body_mask(v, threshold);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embedding-guided 3D image registration"};
    app.require_subcommand(1);

    // register
    auto* reg = app.add_subcommand("register", "Run the affine -> coarse -> deform cascade");
    std::string config_path;
    std::vector<std::string> overrides;
    bool print_config = false;
    reg->add_option("-c,--config", config_path, "key = value config file");
    reg->add_option("-s,--set", overrides, "Override, key=value (repeatable)");
    reg->add_flag("--print-config", print_config, "Print the effective config and exit");

    // embed synth
    auto* embed = app.add_subcommand("embed", "Embedding utilities");
    embed->require_subcommand(1);
    auto* synth = embed->add_subcommand("synth", "Synthetic descriptors for a volume");
    std::string synth_in, synth_out;
    int synth_channels = kSynthFeatureChannels;
    double win_lo = -800, win_hi = 400;
    bool no_window = false;
    synth->add_option("input", synth_in, "Input volume (.mhd/.evol)")->required();
    synth->add_option("output", synth_out, "Output embedding (.evol)")->required();
    synth->add_option("-C,--channels", synth_channels, "Channel count")->capture_default_str();
    synth->add_option("--hu-lo", win_lo)->capture_default_str();
    synth->add_option("--hu-hi", win_hi)->capture_default_str();
    synth->add_flag("--no-window", no_window, "Input is already normalised to [-1, 1]");

    // match
    auto* match = app.add_subcommand("match", "Grid matching between two embeddings");
    std::string mfix, mmov, mout, mmask;
    GridMatchParams gp;
    double body_threshold = -0.5;
    match->add_option("fixed", mfix, "Fixed embedding (.evol)")->required();
    match->add_option("moving", mmov, "Moving embedding (.evol)")->required();
    match->add_option("-o,--output", mout, "Matches CSV")->required();
    match->add_option("--mask-from", mmask, "Fixed volume (HU) used to derive the body mask");
    match->add_option("--grid-stride", gp.grid_stride)->capture_default_str();
    match->add_option("--theta", gp.threshold)->capture_default_str();
    match->add_option("--search-stride", gp.search_stride)->capture_default_str();
    match->add_option("--body-threshold", body_threshold)->capture_default_str();

    // fit-affine
    auto* fit = app.add_subcommand("fit-affine", "Least-squares affine from a matches CSV");
    std::string fit_in, fit_out;
    fit->add_option("matches", fit_in, "Matches CSV")->required();
    fit->add_option("-o,--output", fit_out, "Output .aff")->required();

    // warp
    auto* warp = app.add_subcommand("warp", "Warp a volume, labels or embedding");
    std::string w_in, w_out, w_field, w_affine, w_kind = "volume";
    warp->add_option("input", w_in)->required();
    warp->add_option("output", w_out)->required();
    auto* wf = warp->add_option("--field", w_field, "Displacement field (.evol)");
    auto* wa = warp->add_option("--affine", w_affine, "Affine matrix (.aff)");
    wf->excludes(wa);
    warp->add_option("--kind", w_kind, "volume, labels or embedding")
        ->check(CLI::IsMember({"volume", "labels", "embedding"}))
        ->capture_default_str();

    // metrics
    auto* met = app.add_subcommand("metrics", "Dice, surface distance and Jacobian statistics");
    std::string m_fixed, m_warped, m_field, m_mask, m_json, m_csv;
    bool no_asd = false;
    met->add_option("fixed_labels", m_fixed)->required();
    met->add_option("warped_labels", m_warped)->required();
    met->add_option("--field", m_field, "Total field for Jacobian statistics");
    met->add_option("--mask-from", m_mask, "Fixed volume (HU) for the body mask; full grid otherwise");
    met->add_option("--json", m_json);
    met->add_option("--csv", m_csv);
    met->add_flag("--no-asd", no_asd);

    // slices
    auto* sl = app.add_subcommand("slices", "PNG slice panels");
    std::vector<std::string> s_vols, s_labels;
    std::string s_axis = "z", s_out = "slices";
    int s_index = -1;
    bool s_hu = false;
    sl->add_option("volumes", s_vols, "Volumes, normalised to [-1, 1] unless --hu")->required();
    sl->add_option("--labels", s_labels, "Label maps, one per volume (optional)");
    sl->add_option("--axis", s_axis)->check(CLI::IsMember({"z", "y", "x"}))->capture_default_str();
    sl->add_option("--index", s_index, "Slice index; middle slice when omitted");
    sl->add_option("-o,--out-dir", s_out)->capture_default_str();
    sl->add_flag("--hu", s_hu, "Apply the (-800, 400) HU window before rendering");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Analytic vs finite-difference loss gradients");
    std::string g_term = "total";
    int g_size = 12, g_samples = 50;
    std::uint64_t g_seed = 1;
    double g_h = 1e-3;
    gc->add_option("--term", g_term)->check(CLI::IsMember({"ncc", "sam", "smooth", "total"}))->capture_default_str();
    gc->add_option("--size", g_size, "Edge length of the random problem")->capture_default_str();
    gc->add_option("--samples", g_samples)->capture_default_str();
    gc->add_option("--seed", g_seed)->capture_default_str();
    gc->add_option("--step", g_h, "Finite-difference step (voxels)")->capture_default_str();

    // phantom
    auto* ph = app.add_subcommand("phantom", "Write the synthetic benchmark pair (fixed affine + smooth random field) with labels");
    std::string p_out = "phantom";
    int p_size = 96;
    std::uint64_t p_seed = 7;
    double p_field = 6;
    ph->add_option("-o,--out-dir", p_out)->capture_default_str();
    ph->add_option("--size", p_size)->capture_default_str();
    ph->add_option("--seed", p_seed)->capture_default_str();
    ph->add_option("--field", p_field, "Max smooth displacement (voxels)")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    const char* stage = "cli";
    try {
        if (*reg) {
            PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
            for (const auto& o : overrides) apply_override(cfg, o);
            if (print_config) {
                std::cout << to_text(cfg);
                return 0;
            }
            const RunReport r = run_pipeline(cfg);
            for (const auto& s : r.stages) {
                std::cout << stage_name(s.stage) << ": " << s.seconds << " s";
                if (s.metrics) std::cout << ", mean Dice " << s.metrics->dice.mean;
                std::cout << "\n";
            }
            if (r.find(Stage::Affine))
                std::cout << "affine: k=" << r.affine_k << " residual_rms=" << r.affine_residual_rms << "\n";
            std::cout << "report: " << r.report_json.string() << "\n";
        } else if (*embed) {
            stage = "embed";
            Volume v = load_volume(synth_in);
            if (!no_window) v = window_normalize(v, win_lo, win_hi);
            save_embedding(synth_descriptors(v, synth_channels), synth_out);
        } else if (*match) {
            stage = "match";
            const auto f = load_embedding(mfix), m = load_embedding(mmov);
            const auto ms = grid_match(normalize_embedding(f), normalize_embedding(m),
                                       mask_for(mmask, f.dims(), -800, 400, body_threshold), gp);
            write_matches(ms, mout);
            std::cout << "k=" << ms.size() << " candidates=" << ms.candidates << "\n";
        } else if (*fit) {
            stage = "fit-affine";
            const AffineFit af = fit_affine(read_matches(fit_in));
            save_affine(af.transform, fit_out);
            std::cout << "k=" << af.k << " residual_rms=" << af.residual_rms << "\n";
        } else if (*warp) {
            stage = "warp";
            if (w_field.empty() == w_affine.empty()) throw std::invalid_argument("give exactly one of --field, --affine");
            auto field_for = [&](const Dims& d) {
                return w_field.empty() ? affine_to_field(load_affine(w_affine), d) : load_field(w_field);
            };
            if (w_kind == "volume") {
                const Volume v = load_volume(w_in);
                save_volume(warp_by_field(v, field_for(v.dims())), w_out);
            } else if (w_kind == "labels") {
                const LabelVolume l = load_labels(w_in);
                save_labels(warp_labels_by_field(l, field_for(l.dims())), w_out);
            } else {
                const EmbeddingVolume e = normalize_embedding(load_embedding(w_in));
                save_embedding(warp_embedding_by_field(e, field_for(e.dims())), w_out);
            }
        } else if (*met) {
            stage = "metrics";
            const LabelVolume a = load_labels(m_fixed), b = load_labels(m_warped);
            std::optional<DisplacementField> field;
            std::optional<BodyMask> mask;
            if (!m_field.empty()) {
                field = load_field(m_field);
                mask = mask_for(m_mask, field->dims(), -800, 400, -0.5);
            }
            const MetricsReport r =
                compute_metrics(a, b, field ? &*field : nullptr, mask ? &*mask : nullptr, !no_asd);
            if (!m_json.empty()) write_metrics_json(r, m_json);
            if (!m_csv.empty()) write_metrics_csv(r, m_csv);
            std::cout << to_json(r).dump(2) << "\n";
        } else if (*sl) {
            stage = "slices";
            if (!s_labels.empty() && s_labels.size() != s_vols.size())
                throw std::invalid_argument("--labels needs one label map per volume");
            std::vector<Volume> vols;
            std::vector<LabelVolume> labs;
            for (const auto& p : s_vols) {
                Volume v = load_volume(p);
                vols.push_back(s_hu ? window_normalize(v, -800, 400) : v);
            }
            for (const auto& p : s_labels) labs.push_back(load_labels(p));
            std::vector<SlicePanel> panels;
            for (std::size_t i = 0; i < vols.size(); ++i)
                panels.push_back({fs::path(s_vols[i]).stem().string(), &vols[i], labs.empty() ? nullptr : &labs[i]});
            const SliceAxis axis = parse_slice_axis(s_axis);
            const Dims& d = vols.front().dims();
            const int depth = axis == SliceAxis::Z ? d.d : (axis == SliceAxis::Y ? d.h : d.w);
            for (const auto& p : emit_slices(panels, axis, s_index < 0 ? depth / 2 : s_index, s_out))
                std::cout << p.string() << "\n";
        } else if (*gc) {
            stage = "gradcheck";
            Rng rng(g_seed);
            const Dims d{g_size, g_size, g_size};
            // Smooth random images so the NCC term is informative.
            const DisplacementField noise = random_smooth_field(rng, d, 1.0, 6, 0.25);
            Volume f(d), m(d);
            for (std::size_t i = 0; i < d.count(); ++i) {
                f[i] = noise(0, i);
                m[i] = noise(1, i) + 0.5f * noise(0, i);
            }
            const int C = 8;
            EmbeddingVolume ef(C, d), em(C, d);
            for (auto& x : ef.data()) x = static_cast<float>(rng.normal());
            for (auto& x : em.data()) x = static_cast<float>(rng.normal());
            const CompositeLoss loss(f, m, normalize_embedding(ef), normalize_embedding(em), BodyMask::full(d),
                                     LossConfig{2, 1.0, 0.5});
            const DisplacementField tau = random_smooth_field(rng, d, 1.5, 4, 0.3);
            const std::vector<double> t(tau.data().begin(), tau.data().end());
            const LossTerm term = g_term == "ncc"   ? LossTerm::Ncc
                                  : g_term == "sam" ? LossTerm::Sam
                                  : g_term == "smooth" ? LossTerm::Smooth
                                                       : LossTerm::Total;
            const double err = gradient_check(loss, term, t, g_samples, g_seed, g_h);
            std::cout << "term=" << g_term << " samples=" << g_samples << " max_relative_error=" << err << "\n";
        } else if (*ph) {
            stage = "phantom";
            const Benchmark bench = make_benchmark(BenchmarkOptions{p_size, p_seed, p_field});
            const SyntheticPair& pair = bench.pair;
            const AffineTransform& a = bench.affine;
            fs::create_directories(p_out);
            save_volume(pair.fixed_hu, fs::path(p_out) / "fixed.mhd");
            save_volume(pair.moving_hu, fs::path(p_out) / "moving.mhd");
            save_labels(pair.fixed_labels, fs::path(p_out) / "fixed_labels.mhd");
            save_labels(pair.moving_labels, fs::path(p_out) / "moving_labels.mhd");
            save_affine(a, fs::path(p_out) / "truth.aff");
            std::ofstream cfg(fs::path(p_out) / "register.cfg");
            cfg << "fixed = fixed.mhd\nmoving = moving.mhd\nfixed_labels = fixed_labels.mhd\n"
                   "moving_labels = moving_labels.mhd\noutput_dir = out\n";
            std::cout << "wrote " << p_out << "\n";
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: [" << stage << "] " << e.what() << "\n";
        return 1;
    }
    return 0;
}
