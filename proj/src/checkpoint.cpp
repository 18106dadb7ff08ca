// Checkpoint format (JSON, version 1):
//
//   { "format": "imresnet-checkpoint", "version": 1,
//     "spec":   { ModelSpec fields, enums as strings },
//     "lift":   { "rows": r, "cols": c, "w": [row-major], "b": [...] },
//     "blocks": [ { "a": [row-major n*n], "b": [n] }, ... ],
//     "proj":   { "rows": r, "cols": c, "w": [...], "b": [...] } }
//
// Doubles are written in shortest round-trip form, so load(save(m)) == m.

#include <fstream>
#include <sstream>

#include "imresnet/errors.hpp"
#include "imresnet/network.hpp"
#include "json.hpp"

namespace imresnet {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "imresnet-checkpoint";
constexpr int kVersion = 1;

json affine_to_json(const Affine& a) {
    return json{{"rows", a.w.rows()},
                {"cols", a.w.cols()},
                {"w", std::vector<double>(a.w.values().begin(), a.w.values().end())},
                {"b", a.b.raw()}};
}

Affine affine_from_json(const json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto w = j.at("w").get<std::vector<double>>();
    const auto b = j.at("b").get<std::vector<double>>();
    if (w.size() != rows * cols || b.size() != rows) throw InvalidArgument("checkpoint: affine shape");
    Affine a{Matrix(rows, cols), Vector(b)};
    std::copy(w.begin(), w.end(), a.w.values().begin());
    return a;
}

template <typename T, typename Parse>
T parse_enum(const json& j, const char* key, Parse parse) {
    const auto name = j.at(key).get<std::string>();
    const auto v = parse(name);
    if (!v) throw InvalidArgument(std::string("checkpoint: bad ") + key + " '" + name + "'");
    return *v;
}

}  // namespace

std::string checkpoint_to_string(const Model& m) {
    m.validate();
    const ModelSpec& s = m.spec;
    json spec{{"input_dim", s.input_dim},
              {"hidden_dim", s.hidden_dim},
              {"output_dim", s.output_dim},
              {"depth", s.depth},
              {"theta", s.theta},
              {"horizon", s.horizon},
              {"activation", activation_name(s.activation)},
              {"output_activation", activation_name(s.output_activation)},
              {"weight_mode", weight_mode_name(s.weight_mode)},
              {"reg_coeff", s.reg_coeff},
              {"solver_tol", s.solver_tol},
              {"solver_max_iter", s.solver_max_iter},
              {"paper_param_grad", s.paper_param_grad}};
    json blocks = json::array();
    for (const auto& b : m.blocks) {
        blocks.push_back(json{{"a", std::vector<double>(b.a.values().begin(), b.a.values().end())},
                              {"b", b.b.raw()}});
    }
    json doc{{"format", kFormat},
             {"version", kVersion},
             {"spec", spec},
             {"lift", affine_to_json(m.lift)},
             {"blocks", blocks},
             {"proj", affine_to_json(m.proj)}};
    return doc.dump(1);
}

Model checkpoint_from_string(const std::string& text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("format").get<std::string>() != kFormat) throw InvalidArgument("checkpoint: wrong format tag");
        if (doc.at("version").get<int>() != kVersion) throw InvalidArgument("checkpoint: unsupported version");
        const json& js = doc.at("spec");
        Model m;
        ModelSpec& s = m.spec;
        s.input_dim = js.at("input_dim").get<std::size_t>();
        s.hidden_dim = js.at("hidden_dim").get<std::size_t>();
        s.output_dim = js.at("output_dim").get<std::size_t>();
        s.depth = js.at("depth").get<std::size_t>();
        s.theta = js.at("theta").get<double>();
        s.horizon = js.at("horizon").get<double>();
        s.activation = parse_enum<ActivationKind>(js, "activation", parse_activation);
        s.output_activation = parse_enum<ActivationKind>(js, "output_activation", parse_activation);
        s.weight_mode = parse_enum<WeightMode>(js, "weight_mode", parse_weight_mode);
        s.reg_coeff = js.at("reg_coeff").get<double>();
        s.solver_tol = js.at("solver_tol").get<double>();
        s.solver_max_iter = js.at("solver_max_iter").get<std::size_t>();
        s.paper_param_grad = js.at("paper_param_grad").get<bool>();

        m.lift = affine_from_json(doc.at("lift"));
        m.proj = affine_from_json(doc.at("proj"));
        const std::size_t n = s.hidden_dim;
        for (const auto& jb : doc.at("blocks")) {
            const auto a = jb.at("a").get<std::vector<double>>();
            const auto b = jb.at("b").get<std::vector<double>>();
            if (a.size() != n * n || b.size() != n) throw InvalidArgument("checkpoint: block shape");
            BlockParams p{Matrix(n, n), Vector(b), s.weight_mode};
            std::copy(a.begin(), a.end(), p.a.values().begin());
            m.blocks.push_back(std::move(p));
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 0);
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what(), 0);
    } catch (const DimensionMismatch& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 0);
    }
}

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << checkpoint_to_string(m) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_string(buf.str());
}

}  // namespace imresnet
