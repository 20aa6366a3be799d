#include "gridse/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <type_traits>

#include "gridse/errors.hpp"
#include "gridse/grid_model.hpp"

namespace gridse {

namespace {

constexpr const char* kMagic = "gridse-checkpoint v1";

template <class S>
const char* scalar_name() {
    return std::is_same_v<S, float> ? "float" : "double";
}

template <class S>
std::string fmt(S v) {
    if constexpr (std::is_same_v<S, float>)
        return format_float(v);
    else
        return format_double(v);
}

/// Tensor shapes are determined by (n, s): row count follows from the
/// element count once the column count (s for matrices, 1 for vectors) is
/// known.
std::pair<long, long> shape_of(long count, int s) {
    if (count > s && count % s == 0) return {count / s, s};
    return {count, 1};
}

const char* norm_name(Normalization n) {
    return n == Normalization::MeanBatch ? "mean_batch" : "off";
}

Normalization norm_from(const std::string& v) {
    if (v == "mean_batch") return Normalization::MeanBatch;
    if (v == "off") return Normalization::Off;
    throw ParseError("unknown normalization '" + v + "'");
}

std::string expect_token(std::istream& in, const char* what) {
    std::string tok;
    if (!(in >> tok)) throw ParseError(std::string("checkpoint truncated before ") + what);
    return tok;
}

template <class T>
T expect_value(std::istream& in, const char* what) {
    T v{};
    if (!(in >> v)) throw ParseError(std::string("checkpoint has a bad value for ") + what);
    return v;
}

void expect_keyword(std::istream& in, const char* kw) {
    const std::string tok = expect_token(in, kw);
    if (tok != kw) throw ParseError("expected '" + std::string(kw) + "', found '" + tok + "'");
}

} // namespace

template <class S>
void save_checkpoint(const GnnModel<S>& model, const std::string& path) {
    std::string out;
    out.reserve(1 << 22);
    out += kMagic;
    out += '\n';
    out += "scalar ";
    out += scalar_name<S>();
    out += '\n';
    out += "n " + std::to_string(model.n) + '\n';
    out += "graph " + model.graph_variant + '\n';
    const Hyperparams& h = model.hyper;
    out += "s " + std::to_string(h.s) + '\n';
    out += "layers " + std::to_string(h.layers) + '\n';
    out += "lr " + format_double(h.lr) + '\n';
    out += "batch " + std::to_string(h.batch) + '\n';
    out += "clip " + format_double(h.clip) + '\n';
    out += "epochs " + std::to_string(h.epochs) + '\n';
    out += "activation " + h.activation + '\n';
    out += "normalization " + std::string(norm_name(h.normalization)) + '\n';

    out += "bounds " + std::to_string(model.bound_min.size()) + '\n';
    for (long i = 0; i < model.bound_min.size(); ++i) {
        out += format_double(model.bound_min[i]);
        out += i + 1 == model.bound_min.size() ? '\n' : ' ';
    }
    for (long i = 0; i < model.bound_max.size(); ++i) {
        out += format_double(model.bound_max[i]);
        out += i + 1 == model.bound_max.size() ? '\n' : ' ';
    }

    model.params.for_each([&](const char* name, const S* p, long count) {
        const auto [rows, cols] = shape_of(count, h.s);
        out += "tensor ";
        out += name;
        out += ' ' + std::to_string(rows) + ' ' + std::to_string(cols) + '\n';
        for (long r = 0; r < rows; ++r) {
            for (long c = 0; c < cols; ++c) {
                out += fmt(p[r * cols + c]);
                out += c + 1 == cols ? '\n' : ' ';
            }
        }
    });

    out += "bn_mean " + std::to_string(model.bn_mean.size()) + ' ' + std::to_string(h.s) + '\n';
    for (const auto& v : model.bn_mean) {
        for (long j = 0; j < v.size(); ++j) {
            out += fmt(v[j]);
            out += j + 1 == v.size() ? '\n' : ' ';
        }
    }
    out += "end\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

template <class S>
GnnModel<S> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string magic;
    std::getline(f, magic);
    if (magic != kMagic) throw ParseError("not a checkpoint file (bad magic line)", 1);

    expect_keyword(f, "scalar");
    const std::string sc = expect_token(f, "scalar type");
    if (sc != scalar_name<S>())
        throw ValidationError("checkpoint holds " + sc + " parameters, not " +
                              scalar_name<S>());

    GnnModel<S> model;
    expect_keyword(f, "n");
    model.n = expect_value<int>(f, "n");
    expect_keyword(f, "graph");
    model.graph_variant = expect_token(f, "graph variant");
    Hyperparams& h = model.hyper;
    expect_keyword(f, "s");
    h.s = expect_value<int>(f, "s");
    expect_keyword(f, "layers");
    h.layers = expect_value<int>(f, "layers");
    expect_keyword(f, "lr");
    h.lr = expect_value<double>(f, "lr");
    expect_keyword(f, "batch");
    h.batch = expect_value<int>(f, "batch");
    expect_keyword(f, "clip");
    h.clip = expect_value<double>(f, "clip");
    expect_keyword(f, "epochs");
    h.epochs = expect_value<int>(f, "epochs");
    expect_keyword(f, "activation");
    h.activation = expect_token(f, "activation");
    expect_keyword(f, "normalization");
    h.normalization = norm_from(expect_token(f, "normalization"));
    validate_hyperparams(h);
    if (model.n < 1) throw ValidationError("checkpoint has a non-positive bus count");

    expect_keyword(f, "bounds");
    const long nb = expect_value<long>(f, "bounds size");
    if (nb < 0) throw ParseError("negative bounds size");
    model.bound_min.resize(nb);
    model.bound_max.resize(nb);
    for (long i = 0; i < nb; ++i) model.bound_min[i] = expect_value<double>(f, "bound min");
    for (long i = 0; i < nb; ++i) model.bound_max[i] = expect_value<double>(f, "bound max");

    model.params.setup(model.n, h.s);
    model.params.for_each([&](const char* name, S* p, long count) {
        expect_keyword(f, "tensor");
        const std::string got = expect_token(f, "tensor name");
        if (got != name)
            throw ValidationError("checkpoint tensor '" + got + "' where '" + name +
                                  "' was expected");
        const long rows = expect_value<long>(f, "tensor rows");
        const long cols = expect_value<long>(f, "tensor cols");
        const auto [erows, ecols] = shape_of(count, h.s);
        if (rows != erows || cols != ecols)
            throw ValidationError("tensor '" + got + "' has shape " + std::to_string(rows) +
                                  "x" + std::to_string(cols) + ", expected " +
                                  std::to_string(erows) + "x" + std::to_string(ecols));
        for (long i = 0; i < count; ++i)
            p[i] = static_cast<S>(expect_value<double>(f, "tensor value"));
    });

    expect_keyword(f, "bn_mean");
    const long bcount = expect_value<long>(f, "bn_mean count");
    const long bsize = expect_value<long>(f, "bn_mean size");
    const long expected =
        h.normalization == Normalization::MeanBatch ? long(h.layers) * kEdgeTypes : 0;
    if (bcount != expected || (bcount > 0 && bsize != h.s))
        throw ValidationError("bn_mean block has the wrong shape");
    model.bn_mean.assign(bcount, ColVec<S>::Zero(h.s));
    for (long i = 0; i < bcount; ++i)
        for (int j = 0; j < h.s; ++j)
            model.bn_mean[i][j] = static_cast<S>(expect_value<double>(f, "bn_mean value"));

    expect_keyword(f, "end");
    return model;
}

std::string checkpoint_scalar(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string magic;
    std::getline(f, magic);
    if (magic != kMagic) throw ParseError("not a checkpoint file (bad magic line)", 1);
    std::string kw, val;
    if (!(f >> kw >> val) || kw != "scalar") throw ParseError("checkpoint missing scalar line", 2);
    return val;
}

template void save_checkpoint<float>(const GnnModel<float>&, const std::string&);
template void save_checkpoint<double>(const GnnModel<double>&, const std::string&);
template GnnModel<float> load_checkpoint<float>(const std::string&);
template GnnModel<double> load_checkpoint<double>(const std::string&);

} // namespace gridse
