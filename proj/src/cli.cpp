#include "imresnet/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "imresnet/errors.hpp"
#include "imresnet/svg.hpp"
#include "json.hpp"

namespace imresnet::cli {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

const char* scheme_color(stability::SchemeKind s) {
    switch (s) {
        case stability::SchemeKind::ForwardEuler: return "#d62728";
        case stability::SchemeKind::BackwardEuler: return "#1f77b4";
        case stability::SchemeKind::Trapezoidal: return "#2ca02c";
        case stability::SchemeKind::Verlet: return "#9467bd";
    }
    return "#000000";
}

// ---- strict JSON helpers -------------------------------------------------

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) throw InvalidArgument("config: unknown key '" + where + "." + key + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument("config: bad value for '" + where + "." + key + "'");
    }
}

template <typename E, typename Parse>
void read_enum(const json& obj, const char* key, E& dst, Parse parse, const std::string& where) {
    std::string name;
    read(obj, key, name, where);
    if (name.empty()) return;
    const auto v = parse(name);
    if (!v) throw InvalidArgument("config: unknown " + where + "." + key + " '" + name + "'");
    dst = *v;
}

}  // namespace

// ---- stability -----------------------------------------------------------

int cmd_stability(const StabilityOptions& opts, std::ostream& log) {
    using namespace stability;
    const TestSystem sys(opts.omega);
    if (!(opts.h > 0.0)) throw InvalidArgument("--h must be > 0");
    ensure_dir(opts.out_dir);

    for (SchemeKind scheme : opts.schemes) {
        const std::string name(scheme_name(scheme));
        const Trajectory traj = integrate(scheme, sys, opts.y0, opts.z0, opts.h, opts.steps);
        auto out = open_out(opts.out_dir / ("phase_" + name + ".csv"));
        out << "step,y,z,energy\n";
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            const State& s = traj.states[k];
            out << k << ',' << fmt17(s.y) << ',' << fmt17(s.z) << ',' << fmt17(energy(sys, s.y, s.z)) << '\n';
        }
        if (traj.divergent) out << "# diverged at step " << *traj.diverged_at << '\n';
        if (!out) throw IoError("write failed for phase_" + name + ".csv");
        log << name << ": " << traj.steps << " steps, h*omega=" << opts.h * opts.omega
            << (traj.divergent ? ", DIVERGED at step " + std::to_string(*traj.diverged_at) : "") << '\n';

        if (opts.svg) {
            svg::Series phase{name, {}, {}, scheme_color(scheme), false};
            for (const State& s : traj.states) {
                phase.xs.push_back(s.y);
                phase.ys.push_back(opts.omega * s.z);
            }
            svg::write(opts.out_dir / ("phase_" + name + ".svg"), {phase},
                       {"Phase diagram: " + name, "y", "omega * z", false, 480, 480});
        }
    }

    auto spectra = open_out(opts.out_dir / "spectra.csv");
    spectra << "h_omega,scheme,rho\n";
    std::vector<svg::Series> curves;
    for (SchemeKind scheme : kAllSchemes) {
        svg::Series curve{std::string(scheme_name(scheme)), {}, {}, scheme_color(scheme), false};
        for (std::size_t k = 0; k < kSpectraSamples; ++k) {
            const double hw = kSpectraMax * static_cast<double>(k) / static_cast<double>(kSpectraSamples - 1);
            const double rho = spectral_report(scheme, hw).spectral_radius;
            spectra << fmt17(hw) << ',' << scheme_name(scheme) << ',' << fmt17(rho) << '\n';
            curve.xs.push_back(hw);
            curve.ys.push_back(rho);
        }
        curves.push_back(std::move(curve));
    }
    if (!spectra) throw IoError("write failed for spectra.csv");
    if (opts.svg) {
        svg::write(opts.out_dir / "spectra.svg", curves, {"Spectral radius", "h*omega", "rho", false, 640, 480});
    }
    return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

GradcheckCase make_gradcheck_case(const GradcheckOptions& opts) {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_dim = opts.width;
    spec.output_dim = 1;
    spec.depth = opts.depth;
    spec.theta = opts.theta;
    spec.horizon = static_cast<double>(std::max<std::size_t>(opts.depth, 1));
    spec.activation = ActivationKind::Tanh;
    spec.output_activation = ActivationKind::Identity;
    spec.weight_mode = WeightMode::Raw;
    spec.reg_coeff = 0.1;
    // Tight solves keep the finite differences free of solver noise.
    spec.solver_tol = 1e-13;
    spec.solver_max_iter = 500;
    spec.paper_param_grad = opts.paper_param_grad;

    Rng rng(opts.seed);
    GradcheckCase c{Model::init(spec, rng), Vector(2), Vector(1)};
    const double h = spec.step();
    for (auto& block : c.model.blocks) {
        const double norm = norm_inf(block.a);
        const double limit = 0.5 / (h * std::max(opts.theta, 0.5));
        if (norm > limit) block.a = (limit / norm) * block.a;
        for (double& b : block.b.values()) b = rng.uniform(-0.5, 0.5);
    }
    for (double& b : c.model.lift.b.values()) b = rng.uniform(-0.5, 0.5);
    c.x = Vector{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    c.target = Vector{rng.uniform(3.0, 5.0)};
    return c;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& log) {
    const GradcheckCase c = make_gradcheck_case(opts);
    const GradcheckReport r = gradcheck(c.model, c.x, c.target, LossKind::SquaredError, opts.tol);
    log << "checked " << r.checked << " coordinates (theta=" << opts.theta << ", depth=" << opts.depth
        << ", width=" << opts.width << (opts.paper_param_grad ? ", paper_param_grad" : "") << ")\n";
    log << "max relative error: " << r.max_rel_error << " at " << r.worst_name << " (analytic "
        << r.worst_analytic << ", numeric " << r.worst_numeric << ")\n";
    log << "max relative error on block weights: " << r.max_rel_error_block_weights << '\n';
    log << (r.passed ? "PASS" : "FAIL") << " (tolerance " << opts.tol << ")\n";
    return r.passed ? kExitOk : kExitGradcheck;
}

// ---- experiment config -----------------------------------------------------

ExperimentConfig parse_experiment_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), 0);
    }
    reject_unknown(doc, {"model", "train", "data", "output"}, "config");

    ExperimentConfig cfg;
    bool input_dim_set = false;
    bool output_dim_set = false;
    if (doc.contains("model")) {
        const json& m = doc["model"];
        reject_unknown(m,
                       {"input_dim", "hidden_dim", "output_dim", "depth", "theta", "horizon", "activation",
                        "output_activation", "weight_mode", "reg_coeff", "solver_tol", "solver_max_iter"},
                       "model");
        input_dim_set = m.contains("input_dim");
        output_dim_set = m.contains("output_dim");
        ModelSpec& s = cfg.model;
        read(m, "input_dim", s.input_dim, "model");
        read(m, "hidden_dim", s.hidden_dim, "model");
        read(m, "output_dim", s.output_dim, "model");
        read(m, "depth", s.depth, "model");
        read(m, "theta", s.theta, "model");
        read(m, "horizon", s.horizon, "model");
        read_enum(m, "activation", s.activation, parse_activation, "model");
        read_enum(m, "output_activation", s.output_activation, parse_activation, "model");
        read_enum(m, "weight_mode", s.weight_mode, parse_weight_mode, "model");
        read(m, "reg_coeff", s.reg_coeff, "model");
        read(m, "solver_tol", s.solver_tol, "model");
        read(m, "solver_max_iter", s.solver_max_iter, "model");
    }
    if (doc.contains("train")) {
        const json& t = doc["train"];
        reject_unknown(t, {"learning_rate", "batch_size", "epochs", "seed", "loss", "reversible"}, "train");
        read(t, "learning_rate", cfg.train.learning_rate, "train");
        read(t, "batch_size", cfg.train.batch_size, "train");
        read(t, "epochs", cfg.train.epochs, "train");
        read(t, "seed", cfg.train.seed, "train");
        read_enum(t, "loss", cfg.train.loss, parse_loss, "train");
        read(t, "reversible", cfg.train.reversible, "train");
    }
    if (doc.contains("data")) {
        const json& d = doc["data"];
        reject_unknown(d, {"name", "seed", "n_train", "n_val", "n_total"}, "data");
        read(d, "name", cfg.data.name, "data");
        read(d, "seed", cfg.data.seed, "data");
        read(d, "n_train", cfg.data.n_train, "data");
        read(d, "n_val", cfg.data.n_val, "data");
        read(d, "n_total", cfg.data.n_total, "data");
    }
    if (doc.contains("output")) {
        const json& o = doc["output"];
        reject_unknown(o, {"directory", "svg", "grid"}, "output");
        std::string dir = cfg.output.directory.string();
        read(o, "directory", dir, "output");
        cfg.output.directory = dir;
        read(o, "svg", cfg.output.svg, "output");
        read(o, "grid", cfg.output.grid, "output");
    }

    if (cfg.data.name != "regression" && cfg.data.name != "spirals") {
        throw InvalidArgument("config: unknown data.name '" + cfg.data.name + "'");
    }
    const std::size_t in_dim = cfg.data.name == "spirals" ? 2 : 1;
    if (!input_dim_set) cfg.model.input_dim = in_dim;
    if (!output_dim_set) cfg.model.output_dim = 1;
    if (cfg.model.input_dim != in_dim || cfg.model.output_dim != 1) {
        throw InvalidArgument("config: model dimensions do not match dataset '" + cfg.data.name + "'");
    }
    if (cfg.train.batch_size < 1) throw InvalidArgument("config: train.batch_size must be >= 1");
    if (!(cfg.train.learning_rate >= 0.0)) throw InvalidArgument("config: train.learning_rate must be >= 0");
    if (cfg.output.grid < 2) throw InvalidArgument("config: output.grid must be >= 2");
    cfg.model.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment_config(buf.str());
}

SplitSets make_dataset(const DataConfig& data) {
    if (data.name == "regression") return make_regression(data.seed, data.n_train, data.n_val);
    if (data.name == "spirals") return make_spirals(data.n_total);
    throw InvalidArgument("unknown dataset '" + data.name + "'");
}

// ---- train ---------------------------------------------------------------

TrainOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    const SplitSets data = make_dataset(cfg.data);
    Rng init_rng(cfg.train.seed);
    Model model = Model::init(cfg.model, init_rng);

    TrainOutcome outcome;
    outcome.block_params = param_count(model, true);
    outcome.total_params = param_count(model, false);
    log << "block parameters: " << outcome.block_params << '\n';
    log << "total parameters: " << outcome.total_params << '\n';
    log << "depth " << cfg.model.depth << ", h = " << cfg.model.step() << ", theta = " << cfg.model.theta << '\n';

    outcome.record = train(model, data.train, data.val, cfg.train);
    const TrainRecord& rec = outcome.record;

    const auto& dir = cfg.output.directory;
    ensure_dir(dir);
    const bool with_acc = data.val.kind == SetKind::Binary;
    {
        auto out = open_out(dir / "history.csv");
        out << "epoch,train_loss,val_loss" << (with_acc ? ",val_accuracy" : "") << '\n';
        auto row = [&](std::size_t epoch, const EpochRecord& e) {
            out << epoch << ',' << fmt17(e.train_loss) << ',' << fmt17(e.val_loss);
            if (with_acc) out << ',' << fmt17(e.val_accuracy.value_or(NAN));
            out << '\n';
        };
        row(0, rec.initial);
        for (std::size_t k = 0; k < rec.epochs.size(); ++k) row(k + 1, rec.epochs[k]);
        if (!out) throw IoError("write failed for history.csv");
    }

    if (rec.diverged) {
        log << "training diverged after " << rec.epochs.size() << " epochs: " << rec.divergence_reason << '\n';
        outcome.exit_code = kExitDiverged;
        return outcome;
    }

    save_checkpoint(model, dir / "checkpoint.json");

    {
        auto out = open_out(dir / "predictions.csv");
        const std::size_t g = cfg.output.grid;
        if (cfg.data.name == "regression") {
            out << "x,prediction,target\n";
            for (std::size_t k = 0; k < g; ++k) {
                const double x = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(g - 1);
                out << fmt17(x) << ',' << fmt17(model_predict(model, Vector{x})[0]) << ','
                    << fmt17(regression_target(x)) << '\n';
            }
        } else {
            out << "x0,x1,probability\n";
            for (std::size_t i = 0; i < g; ++i) {
                for (std::size_t j = 0; j < g; ++j) {
                    const double x0 = -1.2 + 2.4 * static_cast<double>(i) / static_cast<double>(g - 1);
                    const double x1 = -1.2 + 2.4 * static_cast<double>(j) / static_cast<double>(g - 1);
                    out << fmt17(x0) << ',' << fmt17(x1) << ',' << fmt17(model_predict(model, Vector{x0, x1})[0])
                        << '\n';
                }
            }
        }
        if (!out) throw IoError("write failed for predictions.csv");
    }

    if (cfg.output.svg) {
        svg::Series tr{"train", {}, {}, "#1f77b4", false};
        svg::Series va{"validation", {}, {}, "#ff7f0e", false};
        tr.xs.push_back(0);
        tr.ys.push_back(rec.initial.train_loss);
        va.xs.push_back(0);
        va.ys.push_back(rec.initial.val_loss);
        for (std::size_t k = 0; k < rec.epochs.size(); ++k) {
            tr.xs.push_back(static_cast<double>(k + 1));
            tr.ys.push_back(rec.epochs[k].train_loss);
            va.xs.push_back(static_cast<double>(k + 1));
            va.ys.push_back(rec.epochs[k].val_loss);
        }
        svg::write(dir / "loss.svg", {tr, va}, {"Loss", "epoch", "loss", true, 640, 480});
    }

    const EpochRecord& last = rec.epochs.empty() ? rec.initial : rec.epochs.back();
    log << "final train_loss " << last.train_loss << ", val_loss " << last.val_loss;
    if (last.val_accuracy) log << ", val_accuracy " << *last.val_accuracy;
    log << '\n';
    outcome.exit_code = kExitOk;
    return outcome;
}

int cmd_train(const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& out_override,
              std::ostream& log) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (out_override) cfg.output.directory = *out_override;
    return run_experiment(cfg, log).exit_code;
}

// ---- dataset -------------------------------------------------------------

int cmd_dataset(const std::string& name, const std::filesystem::path& out_dir, std::uint64_t seed,
                std::ostream& log) {
    if (name != "regression" && name != "spirals") {
        log << "unknown dataset '" << name << "' (expected regression or spirals)\n";
        return kExitUsage;
    }
    DataConfig data;
    data.name = name;
    data.seed = seed;
    const SplitSets sets = make_dataset(data);
    ensure_dir(out_dir);
    to_csv(sets.train, out_dir / (name + "_train.csv"));
    to_csv(sets.val, out_dir / (name + "_val.csv"));
    log << name << ": " << sets.train.size() << " train + " << sets.val.size() << " validation rows\n";
    return kExitOk;
}

// ---- entry point ---------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Implicit residual networks: stability lab, gradient checks and experiments", "imresnet"};
    app.require_subcommand(1);

    StabilityOptions stab;
    std::string scheme = "all";
    std::string stab_out = ".";
    auto* stability_cmd = app.add_subcommand("stability", "Phase diagrams and spectral radii of four schemes");
    // --h is the step size here, so help is long-form only.
    stability_cmd->set_help_flag("--help", "Print this help message and exit");
    stability_cmd->add_option("--scheme", scheme, "forward-euler|backward-euler|trapezoidal|verlet|all")
        ->check(CLI::IsMember({"forward-euler", "backward-euler", "trapezoidal", "verlet", "all"}));
    stability_cmd->add_option("--omega", stab.omega, "Oscillator frequency")->check(CLI::PositiveNumber);
    stability_cmd->add_option("--h", stab.h, "Step size")->check(CLI::PositiveNumber);
    stability_cmd->add_option("--steps", stab.steps, "Number of steps")->check(CLI::PositiveNumber);
    stability_cmd->add_option("--y0", stab.y0, "Initial y");
    stability_cmd->add_option("--z0", stab.z0, "Initial z");
    stability_cmd->add_option("--out", stab_out, "Output directory");
    stability_cmd->add_flag("--svg", stab.svg, "Also write SVG plots");

    GradcheckOptions gc;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of model gradients");
    gradcheck_cmd->add_option("--seed", gc.seed, "Random seed");
    gradcheck_cmd->add_option("--theta", gc.theta, "Implicitness in [0,1]")->check(CLI::Range(0.0, 1.0));
    gradcheck_cmd->add_option("--depth", gc.depth, "Number of blocks");
    gradcheck_cmd->add_option("--width", gc.width, "Hidden width")->check(CLI::PositiveNumber);
    gradcheck_cmd->add_flag("--paper-param-grad", gc.paper_param_grad,
                            "Use the reduced parameter gradient without the theta*dF(y) term");

    std::string config_path;
    std::string train_out;
    auto* train_cmd = app.add_subcommand("train", "Run an experiment from a JSON config");
    train_cmd->add_option("config", config_path, "Experiment config (JSON)")->required();
    train_cmd->add_option("--out", train_out, "Override output.directory");

    std::string ds_name;
    std::string ds_out = ".";
    std::uint64_t ds_seed = 0;
    auto* dataset_cmd = app.add_subcommand("dataset", "Write train/validation CSVs for a benchmark dataset");
    dataset_cmd->add_option("--name", ds_name, "regression|spirals")->required();
    dataset_cmd->add_option("--out", ds_out, "Output directory");
    dataset_cmd->add_option("--seed", ds_seed, "Seed for sampled datasets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*stability_cmd) {
            if (scheme != "all") stab.schemes = {*stability::parse_scheme(scheme)};
            stab.out_dir = stab_out;
            return cmd_stability(stab, out);
        }
        if (*gradcheck_cmd) return cmd_gradcheck(gc, out);
        if (*train_cmd) {
            std::optional<std::filesystem::path> override;
            if (!train_out.empty()) override = train_out;
            return cmd_train(config_path, override, out);
        }
        if (*dataset_cmd) return cmd_dataset(ds_name, ds_out, ds_seed, err);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DimensionMismatch& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}

}  // namespace imresnet::cli
