#include "embreg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace embreg {

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Affine: return "affine";
        case Stage::Coarse: return "coarse";
        case Stage::Deform: return "deform";
    }
    return "?";
}

Stage parse_stage(const std::string& s) {
    if (s == "affine") return Stage::Affine;
    if (s == "coarse") return Stage::Coarse;
    if (s == "deform") return Stage::Deform;
    throw ConfigError("unknown stage '" + s + "' (expected affine, coarse or deform)");
}

bool PipelineConfig::has_stage(Stage s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto path = [](std::filesystem::path PipelineConfig::*m) {
            return [m](PipelineConfig& c, const std::string&, const std::string& v) { c.*m = v; };
        };
        auto real = [](double PipelineConfig::*m) {
            return [m](PipelineConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); };
        };
        auto integer = [](int PipelineConfig::*m) {
            return [m](PipelineConfig& c, const std::string& k, const std::string& v) {
                c.*m = static_cast<int>(to_int(k, v));
            };
        };
        auto flag = [](bool PipelineConfig::*m) {
            return [m](PipelineConfig& c, const std::string& k, const std::string& v) { c.*m = to_bool(k, v); };
        };
        t["fixed"] = path(&PipelineConfig::fixed);
        t["moving"] = path(&PipelineConfig::moving);
        t["fixed_labels"] = path(&PipelineConfig::fixed_labels);
        t["moving_labels"] = path(&PipelineConfig::moving_labels);
        t["fixed_embedding"] = path(&PipelineConfig::fixed_embedding);
        t["moving_embedding"] = path(&PipelineConfig::moving_embedding);
        t["output_dir"] = path(&PipelineConfig::output_dir);
        t["embeddings"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            if (v != "synth" && v != "file") throw ConfigError("config key '" + k + "': expected synth or file");
            c.embeddings = v;
        };
        t["synth_channels"] = integer(&PipelineConfig::synth_channels);
        t["stages"] = [](PipelineConfig& c, const std::string&, const std::string& v) {
            c.stages.clear();
            for (const auto& s : split(v, ','))
                if (!s.empty()) c.stages.push_back(parse_stage(s));
        };
        t["hu_lo"] = real(&PipelineConfig::hu_lo);
        t["hu_hi"] = real(&PipelineConfig::hu_hi);
        t["target_spacing"] = real(&PipelineConfig::target_spacing);
        t["body_threshold"] = real(&PipelineConfig::body_threshold);
        t["crop"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            if (v.empty() || v == "none") {
                c.crop.reset();
                return;
            }
            const auto parts = split(v, ',');
            if (parts.size() != 6) throw ConfigError("config key 'crop': expected z0,z1,y0,y1,x0,x1");
            int b[6];
            for (int i = 0; i < 6; ++i) b[i] = static_cast<int>(to_int(k, parts[i]));
            c.crop = CropBox{b[0], b[1], b[2], b[3], b[4], b[5]};
        };
        t["theta"] = real(&PipelineConfig::theta);
        t["grid_stride"] = integer(&PipelineConfig::grid_stride);
        t["search_stride"] = integer(&PipelineConfig::search_stride);
        t["levels"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.levels = static_cast<int>(to_int(k, v));
        };
        t["iterations"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.iterations.clear();
            for (const auto& s : split(v, ',')) c.opt.iterations.push_back(static_cast<int>(to_int(k, s)));
        };
        t["lambda"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.opt.lambda = to_double(k, v); };
        t["gamma"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.opt.gamma = to_double(k, v); };
        t["ncc_radius_coarse"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.ncc_radius_coarse = static_cast<int>(to_int(k, v));
        };
        t["ncc_radius_fine"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.ncc_radius_fine = static_cast<int>(to_int(k, v));
        };
        t["momentum"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.momentum = to_double(k, v);
        };
        t["max_first_step"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.max_first_step = to_double(k, v);
        };
        t["tolerance"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.tolerance = to_double(k, v);
        };
        t["patience"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.patience = static_cast<int>(to_int(k, v));
        };
        t["seed_from_correlation"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.opt.seed_from_correlation = to_bool(k, v);
        };
        t["seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.seed = static_cast<std::uint64_t>(to_int(k, v));
        };
        t["write_embeddings"] = flag(&PipelineConfig::write_embeddings);
        t["write_slices"] = flag(&PipelineConfig::write_slices);
        t["with_asd"] = flag(&PipelineConfig::with_asd);
        t["slice_axis"] = [](PipelineConfig& c, const std::string&, const std::string& v) {
            try {
                c.slice_axis = parse_slice_axis(v);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        };
        t["slice_index"] = integer(&PipelineConfig::slice_index);
        return t;
    }();
    return table;
}

}  // namespace

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    PipelineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    const auto base = path.parent_path();
    for (auto* p : {&cfg.fixed, &cfg.moving, &cfg.fixed_labels, &cfg.moving_labels, &cfg.fixed_embedding,
                    &cfg.moving_embedding, &cfg.output_dir})
        if (!p->empty() && p->is_relative()) *p = base / *p;
    return cfg;
}

void validate(const PipelineConfig& cfg) {
    if (cfg.stages.empty()) throw ConfigError("no stages selected");
    for (std::size_t i = 1; i < cfg.stages.size(); ++i)
        if (static_cast<int>(cfg.stages[i]) <= static_cast<int>(cfg.stages[i - 1]))
            throw ConfigError("stages must be a subset of affine, coarse, deform in that order without repeats");
    if (cfg.has_stage(Stage::Coarse) && !cfg.has_stage(Stage::Affine))
        throw ConfigError("stage 'coarse' requires stage 'affine'");
    if (cfg.synth_channels < kSynthMinChannels)
        throw ConfigError("synth_channels must be >= " + std::to_string(kSynthMinChannels));
    if (!(cfg.hu_lo < cfg.hu_hi)) throw ConfigError("hu_lo must be below hu_hi");
    if (cfg.theta < -1.0 || cfg.theta > 1.0) throw ConfigError("theta must lie in [-1, 1]");
    if (cfg.grid_stride < 1 || cfg.search_stride < 1) throw ConfigError("strides must be >= 1");
    if (cfg.opt.levels < 1) throw ConfigError("levels must be >= 1");
    if (cfg.opt.iterations.empty() ||
        std::any_of(cfg.opt.iterations.begin(), cfg.opt.iterations.end(), [](int i) { return i < 0; }))
        throw ConfigError("iterations must be a non-empty list of non-negative counts");
    if (cfg.opt.lambda < 0.0 || cfg.opt.gamma < 0.0) throw ConfigError("lambda and gamma must be non-negative");
    if (cfg.opt.ncc_radius_coarse < 1 || cfg.opt.ncc_radius_fine < 1) throw ConfigError("NCC radii must be >= 1");
    if (cfg.opt.momentum < 0.0 || cfg.opt.momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (!(cfg.opt.max_first_step > 0.0)) throw ConfigError("max_first_step must be positive");
    if (cfg.opt.patience < 1) throw ConfigError("patience must be >= 1");
}

void validate_paths(const PipelineConfig& cfg) {
    if (cfg.fixed.empty() || cfg.moving.empty()) throw ConfigError("fixed and moving images are required");
    if (cfg.fixed_labels.empty() != cfg.moving_labels.empty())
        throw ConfigError("fixed_labels and moving_labels must be given together");
    if (cfg.embeddings == "file" && (cfg.fixed_embedding.empty() || cfg.moving_embedding.empty()))
        throw ConfigError("embeddings = file needs fixed_embedding and moving_embedding");
    std::vector<const std::filesystem::path*> inputs{&cfg.fixed, &cfg.moving};
    if (cfg.has_labels()) inputs.insert(inputs.end(), {&cfg.fixed_labels, &cfg.moving_labels});
    if (cfg.embeddings == "file") inputs.insert(inputs.end(), {&cfg.fixed_embedding, &cfg.moving_embedding});
    for (const auto* p : inputs)
        if (!std::filesystem::exists(*p)) throw ConfigError("input not found: " + p->string());
}

std::string to_text(const PipelineConfig& c) {
    std::ostringstream os;
    // shortest text that reads back to the same double
    auto num = [](double v) {
        char buf[32];
        return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    };
    auto stages = [&] {
        std::string s;
        for (auto st : c.stages) s += (s.empty() ? "" : ",") + stage_name(st);
        return s;
    };
    auto iters = [&] {
        std::string s;
        for (int i : c.opt.iterations) s += (s.empty() ? "" : ",") + std::to_string(i);
        return s;
    };
    const char* axis = c.slice_axis == SliceAxis::Z ? "z" : (c.slice_axis == SliceAxis::Y ? "y" : "x");
    os << "fixed = " << c.fixed.string() << "\n"
       << "moving = " << c.moving.string() << "\n"
       << "fixed_labels = " << c.fixed_labels.string() << "\n"
       << "moving_labels = " << c.moving_labels.string() << "\n"
       << "embeddings = " << c.embeddings << "\n"
       << "fixed_embedding = " << c.fixed_embedding.string() << "\n"
       << "moving_embedding = " << c.moving_embedding.string() << "\n"
       << "synth_channels = " << c.synth_channels << "\n"
       << "output_dir = " << c.output_dir.string() << "\n"
       << "stages = " << stages() << "\n"
       << "hu_lo = " << num(c.hu_lo) << "\n"
       << "hu_hi = " << num(c.hu_hi) << "\n"
       << "target_spacing = " << num(c.target_spacing) << "\n"
       << "body_threshold = " << num(c.body_threshold) << "\n";
    if (c.crop)
        os << "crop = " << c.crop->z0 << "," << c.crop->z1 << "," << c.crop->y0 << "," << c.crop->y1 << ","
           << c.crop->x0 << "," << c.crop->x1 << "\n";
    os << "theta = " << num(c.theta) << "\n"
       << "grid_stride = " << c.grid_stride << "\n"
       << "search_stride = " << c.search_stride << "\n"
       << "levels = " << c.opt.levels << "\n"
       << "iterations = " << iters() << "\n"
       << "lambda = " << num(c.opt.lambda) << "\n"
       << "gamma = " << num(c.opt.gamma) << "\n"
       << "ncc_radius_coarse = " << c.opt.ncc_radius_coarse << "\n"
       << "ncc_radius_fine = " << c.opt.ncc_radius_fine << "\n"
       << "momentum = " << num(c.opt.momentum) << "\n"
       << "max_first_step = " << num(c.opt.max_first_step) << "\n"
       << "tolerance = " << num(c.opt.tolerance) << "\n"
       << "patience = " << c.opt.patience << "\n"
       << "seed_from_correlation = " << (c.opt.seed_from_correlation ? "true" : "false") << "\n"
       << "seed = " << c.seed << "\n"
       << "write_embeddings = " << (c.write_embeddings ? "true" : "false") << "\n"
       << "write_slices = " << (c.write_slices ? "true" : "false") << "\n"
       << "with_asd = " << (c.with_asd ? "true" : "false") << "\n"
       << "slice_axis = " << axis << "\n"
       << "slice_index = " << c.slice_index << "\n";
    return os.str();
}

}  // namespace embreg
