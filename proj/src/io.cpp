#include "costco/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace costco {

namespace {

class LineReader {
public:
    LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    // Next non-blank, non-comment line split on whitespace; false at EOF.
    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            tokens.clear();
            std::istringstream ss(line);
            for (std::string tok; ss >> tok;) tokens.push_back(tok);
            return true;
        }
        return false;
    }

    std::vector<std::string> expect(const char* what) {
        std::vector<std::string> tokens;
        if (!next(tokens)) fail(std::string("unexpected end of file, expected ") + what);
        return tokens;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(source_ + ":" + std::to_string(line_no_) + ": " + msg);
    }

    long long integer(const std::string& tok) const {
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("expected an integer, got '" + tok + "'");
        return v;
    }

    std::uint64_t unsigned_integer(const std::string& tok) const {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("expected an unsigned integer, got '" + tok + "'");
        return v;
    }

    double decimal(const std::string& tok) const {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
            fail("expected a finite decimal, got '" + tok + "'");
        return v;
    }

    Index positive(const std::string& tok) const {
        const long long v = integer(tok);
        if (v < 1) fail("expected a positive size, got '" + tok + "'");
        return static_cast<Index>(v);
    }

    int base(const std::string& tok) const {
        if (tok == "base=0") return 0;
        if (tok == "base=1") return 1;
        fail("expected base=0 or base=1, got '" + tok + "'");
    }

    void count(const std::vector<std::string>& tokens, std::size_t n, const char* what) const {
        if (tokens.size() != n)
            fail(std::string(what) + ": expected " + std::to_string(n) + " fields, got " + std::to_string(tokens.size()));
    }

    Eigen::VectorXd row(const std::vector<std::string>& tokens, std::size_t skip = 0) const {
        Eigen::VectorXd v(static_cast<Index>(tokens.size() - skip));
        for (std::size_t i = skip; i < tokens.size(); ++i) v[static_cast<Index>(i - skip)] = decimal(tokens[i]);
        return v;
    }

    Index coordinate(const std::string& tok, int base, Index size, Index mode) const {
        const long long v = integer(tok) - base;
        if (v < 0 || v >= size)
            fail("coordinate " + tok + " out of range for mode " + std::to_string(mode) + " of size " +
                 std::to_string(size));
        return static_cast<Index>(v);
    }

private:
    std::istream& in_;
    std::string source_;
    int line_no_ = 0;
};

struct Precise {
    explicit Precise(std::ostream& out) : out_(out), old_(out.precision(17)) {}
    ~Precise() { out_.precision(old_); }
    std::ostream& out_;
    std::streamsize old_;
};

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    for (Index j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
    out << '\n';
}

Eigen::MatrixXd read_block(LineReader& lr, Index rows, Index cols, const char* what) {
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto tokens = lr.expect(what);
        lr.count(tokens, static_cast<std::size_t>(cols), what);
        m.row(i) = lr.row(tokens).transpose();
    }
    return m;
}

template <typename Stream>
Stream open(const std::filesystem::path& p) {
    Stream s(p);
    if (!s) throw DataError("cannot open " + p.string());
    s.exceptions(std::ios::badbit);
    return s;
}

}  // namespace

ObservedTensord read_tensor(std::istream& in, const std::string& source) {
    LineReader lr(in, source);
    auto head = lr.expect("tensor header");
    if (head.empty() || head[0] != "tensor") lr.fail("expected 'tensor <K> <n1> ... <nK> base=<0|1>'");
    if (head.size() < 2) lr.fail("tensor header is missing the order");
    const Index K = lr.positive(head[1]);
    if (K < 2) lr.fail("tensor order must be at least 2");
    lr.count(head, static_cast<std::size_t>(K) + 3, "tensor header");
    std::vector<Index> sizes;
    for (Index k = 0; k < K; ++k) sizes.push_back(lr.positive(head[static_cast<std::size_t>(k) + 2]));
    const int base = lr.base(head.back());
    const Dims dims(sizes);

    std::vector<Coordinate> coords;
    std::vector<double> values;
    std::unordered_map<Index, std::size_t> seen;
    std::vector<std::string> tokens;
    while (lr.next(tokens)) {
        lr.count(tokens, static_cast<std::size_t>(K) + 1, "tensor entry");
        Coordinate c(static_cast<std::size_t>(K));
        for (Index k = 0; k < K; ++k)
            c[static_cast<std::size_t>(k)] = lr.coordinate(tokens[static_cast<std::size_t>(k)], base, dims[k], k);
        if (!seen.emplace(dims.linear(c), coords.size()).second) lr.fail("duplicate coordinate");
        values.push_back(lr.decimal(tokens.back()));
        coords.push_back(std::move(c));
    }
    return ObservedTensord::from_entries(dims, std::move(coords), std::move(values));
}

void write_tensor(std::ostream& out, const ObservedTensord& t, int base) {
    if (base != 0 && base != 1) throw DimensionError("index base must be 0 or 1");
    Precise p(out);
    out << "tensor " << t.order();
    for (Index k = 0; k < t.order(); ++k) out << ' ' << t.dims()[k];
    out << " base=" << base << '\n';
    for (Index e = 0; e < t.nnz(); ++e) {
        for (Index k = 0; k < t.order(); ++k) out << t.index(e, k) + base << ' ';
        out << t.values()[e] << '\n';
    }
}

MatrixData read_matrix(std::istream& in, const std::string& source) {
    LineReader lr(in, source);
    auto head = lr.expect("matrix header");
    MatrixData out;
    if (!head.empty() && head[0] == "matrix") {
        lr.count(head, 3, "matrix header");
        const Index rows = lr.positive(head[1]), cols = lr.positive(head[2]);
        out.values = read_block(lr, rows, cols, "matrix row");
        std::vector<std::string> extra;
        if (lr.next(extra)) lr.fail("trailing content after the last matrix row");
        return out;
    }
    if (head.empty() || head[0] != "matrix-coo") lr.fail("expected 'matrix <rows> <cols>' or 'matrix-coo <rows> <cols>'");
    if (head.size() != 3 && head.size() != 4) lr.fail("matrix-coo header: expected 3 or 4 fields");
    const Index rows = lr.positive(head[1]), cols = lr.positive(head[2]);
    const int base = head.size() == 4 ? lr.base(head[3]) : 0;
    out.values = Eigen::MatrixXd::Zero(rows, cols);
    MaskMatrix mask = MaskMatrix::Constant(rows, cols, false);
    std::vector<std::string> tokens;
    while (lr.next(tokens)) {
        lr.count(tokens, 3, "matrix-coo entry");
        const Index i = lr.coordinate(tokens[0], base, rows, 0);
        const Index j = lr.coordinate(tokens[1], base, cols, 1);
        if (mask(i, j)) lr.fail("duplicate coordinate");
        mask(i, j) = true;
        out.values(i, j) = lr.decimal(tokens[2]);
    }
    out.mask = std::move(mask);
    return out;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    Precise p(out);
    out << "matrix " << m.rows() << ' ' << m.cols() << '\n';
    for (Index i = 0; i < m.rows(); ++i) write_row(out, m.row(i));
}

void write_matrix_coo(std::ostream& out, const Eigen::MatrixXd& m, const MaskMatrix& mask, int base) {
    if (mask.rows() != m.rows() || mask.cols() != m.cols()) throw DimensionError("mask shape differs from matrix");
    if (base != 0 && base != 1) throw DimensionError("index base must be 0 or 1");
    Precise p(out);
    out << "matrix-coo " << m.rows() << ' ' << m.cols() << " base=" << base << '\n';
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            if (mask(i, j)) out << i + base << ' ' << j + base << ' ' << m(i, j) << '\n';
}

std::vector<Coordinate> read_coordinates(std::istream& in, const std::string& source) {
    LineReader lr(in, source);
    auto head = lr.expect("coordinates header");
    if (head.empty() || head[0] != "coordinates") lr.fail("expected 'coordinates <K> base=<0|1>'");
    lr.count(head, 3, "coordinates header");
    const Index K = lr.positive(head[1]);
    const int base = lr.base(head[2]);
    std::vector<Coordinate> coords;
    std::vector<std::string> tokens;
    while (lr.next(tokens)) {
        lr.count(tokens, static_cast<std::size_t>(K), "coordinate");
        Coordinate c;
        for (const auto& tok : tokens) {
            const long long v = lr.integer(tok) - base;
            if (v < 0) lr.fail("negative coordinate " + tok);
            c.push_back(static_cast<Index>(v));
        }
        coords.push_back(std::move(c));
    }
    return coords;
}

void write_coordinates(std::ostream& out, const std::vector<Coordinate>& coords, Index order, int base) {
    out << "coordinates " << order << " base=" << base << '\n';
    for (const auto& c : coords) {
        if (static_cast<Index>(c.size()) != order) throw DimensionError("coordinate order mismatch");
        for (std::size_t k = 0; k < c.size(); ++k) out << (k ? " " : "") << c[k] + base;
        out << '\n';
    }
}

ModelFile read_model(std::istream& in, const std::string& source) {
    LineReader lr(in, source);
    auto keyword = [&](const char* key, const char* what) {
        auto t = lr.expect(what);
        if (t.empty() || t[0] != key) lr.fail(std::string("expected '") + key + "'");
        return t;
    };
    auto magic = keyword("costco-model", "model header");
    lr.count(magic, 2, "model header");
    if (magic[1] != "1") lr.fail("unsupported model version " + magic[1]);

    auto t = keyword("rank", "rank");
    lr.count(t, 2, "rank");
    const Index R = lr.positive(t[1]);

    t = keyword("dims", "dims");
    if (t.size() < 2) lr.fail("dims: missing order");
    const Index K = lr.positive(t[1]);
    lr.count(t, static_cast<std::size_t>(K) + 2, "dims");
    std::vector<Index> sizes;
    for (Index k = 0; k < K; ++k) sizes.push_back(lr.positive(t[static_cast<std::size_t>(k) + 2]));

    t = keyword("coupling", "coupling");
    if (t.size() < 2) lr.fail("coupling: missing count");
    const long long C = lr.integer(t[1]);
    if (C < 0) lr.fail("coupling count must be nonnegative");
    lr.count(t, static_cast<std::size_t>(2 * C) + 2, "coupling");
    CouplingSpec coupling;
    for (long long c = 0; c < C; ++c) {
        const auto i = static_cast<std::size_t>(2 * c + 2);
        const long long mode = lr.integer(t[i]);
        if (mode < 0 || mode >= K) lr.fail("coupled mode out of range");
        if (!coupling.empty() && mode <= coupling.back().mode) lr.fail("coupled modes must be increasing");
        coupling.push_back({static_cast<Index>(mode), lr.positive(t[i + 1])});
    }

    ModelFile out;
    t = keyword("seed", "seed");
    lr.count(t, 2, "seed");
    out.seed = lr.unsigned_integer(t[1]);
    t = keyword("objective", "objective");
    lr.count(t, 2, "objective");
    out.objective = lr.decimal(t[1]);

    t = keyword("weights", "weights");
    lr.count(t, static_cast<std::size_t>(R) + 1, "weights");
    out.model.cp.weights = lr.row(t, 1);
    for (Index k = 0; k < K; ++k) {
        t = keyword("factor", "factor");
        lr.count(t, 2, "factor");
        if (lr.integer(t[1]) != k) lr.fail("expected factor " + std::to_string(k));
        out.model.cp.factors.push_back(read_block(lr, sizes[static_cast<std::size_t>(k)], R, "factor row"));
    }
    for (const auto& c : coupling) {
        t = keyword("covariate", "covariate");
        lr.count(t, 2, "covariate");
        if (lr.integer(t[1]) != c.mode) lr.fail("expected covariate " + std::to_string(c.mode));
        t = keyword("sigma", "sigma");
        lr.count(t, static_cast<std::size_t>(R) + 1, "sigma");
        Eigen::VectorXd sigma = lr.row(t, 1);
        out.model.covariates.push_back({c.mode, std::move(sigma), read_block(lr, c.width, R, "covariate row")});
    }
    std::vector<std::string> extra;
    if (lr.next(extra)) lr.fail("trailing content after model");
    try {
        out.model.validate(0.0);
    } catch (const DimensionError& e) {
        throw DataError(source + ": " + e.what());
    }
    return out;
}

void write_model(std::ostream& out, const ModelFile& mf) {
    const CoupledModel& m = mf.model;
    m.validate(0.0);
    Precise p(out);
    out << "costco-model 1\n";
    out << "rank " << m.rank() << '\n';
    out << "dims " << m.order();
    for (Index k = 0; k < m.order(); ++k) out << ' ' << m.dims()[k];
    out << "\ncoupling " << m.covariates.size();
    for (const auto& c : m.covariates) out << ' ' << c.mode << ' ' << c.V.rows();
    out << "\nseed " << mf.seed << '\n';
    out << "objective " << mf.objective << '\n';
    out << "weights ";
    write_row(out, m.cp.weights.transpose());
    for (std::size_t k = 0; k < m.cp.factors.size(); ++k) {
        out << "factor " << k << '\n';
        for (Index i = 0; i < m.cp.factors[k].rows(); ++i) write_row(out, m.cp.factors[k].row(i));
    }
    for (const auto& c : m.covariates) {
        out << "covariate " << c.mode << "\nsigma ";
        write_row(out, c.sigma.transpose());
        for (Index i = 0; i < c.V.rows(); ++i) write_row(out, c.V.row(i));
    }
}

ObservedTensord load_tensor(const std::filesystem::path& p) {
    auto in = open<std::ifstream>(p);
    return read_tensor(in, p.string());
}

MatrixData load_matrix(const std::filesystem::path& p) {
    auto in = open<std::ifstream>(p);
    return read_matrix(in, p.string());
}

ModelFile load_model(const std::filesystem::path& p) {
    auto in = open<std::ifstream>(p);
    return read_model(in, p.string());
}

std::vector<Coordinate> load_coordinates(const std::filesystem::path& p) {
    auto in = open<std::ifstream>(p);
    return read_coordinates(in, p.string());
}

void save_tensor(const std::filesystem::path& p, const ObservedTensord& t, int base) {
    auto out = open<std::ofstream>(p);
    write_tensor(out, t, base);
}

void save_matrix(const std::filesystem::path& p, const Eigen::MatrixXd& m) {
    auto out = open<std::ofstream>(p);
    write_matrix(out, m);
}

void save_model(const std::filesystem::path& p, const ModelFile& model) {
    auto out = open<std::ofstream>(p);
    write_model(out, model);
}

}  // namespace costco
