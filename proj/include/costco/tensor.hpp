#pragma once

// Dense and coordinate-observed tensors and the contraction kernels used by
// the completion updates. Everything here is templated on the scalar type.

#include "costco/common.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace costco {

using Coordinate = std::vector<Index>;

/// Mode sizes of an order-K tensor, K >= 2.
class Dims {
public:
    Dims() = default;
    Dims(std::initializer_list<Index> sizes) : Dims(std::vector<Index>(sizes)) {}
    explicit Dims(std::vector<Index> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw DimensionError("tensor order must be at least 2");
        for (Index n : sizes_)
            if (n < 1) throw DimensionError("every mode size must be positive");
    }

    Index order() const { return static_cast<Index>(sizes_.size()); }
    Index operator[](Index k) const { return sizes_[static_cast<std::size_t>(k)]; }
    const std::vector<Index>& sizes() const { return sizes_; }

    Index total() const {
        return std::accumulate(sizes_.begin(), sizes_.end(), Index{1}, std::multiplies<>{});
    }

    bool contains(std::span<const Index> coord) const {
        if (static_cast<Index>(coord.size()) != order()) return false;
        for (std::size_t k = 0; k < sizes_.size(); ++k)
            if (coord[k] < 0 || coord[k] >= sizes_[k]) return false;
        return true;
    }

    /// Row-major linear offset (last mode fastest).
    Index linear(std::span<const Index> coord) const {
        Index off = 0;
        for (std::size_t k = 0; k < sizes_.size(); ++k) off = off * sizes_[k] + coord[k];
        return off;
    }

    std::string str() const {
        std::string s;
        for (std::size_t k = 0; k < sizes_.size(); ++k) {
            if (k) s += 'x';
            s += std::to_string(sizes_[k]);
        }
        return s;
    }

    friend bool operator==(const Dims&, const Dims&) = default;

private:
    std::vector<Index> sizes_;
};

template <typename Scalar>
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Dims dims) : dims_(std::move(dims)), values_(Vector<Scalar>::Zero(dims_.total())) {}
    DenseTensor(Dims dims, Vector<Scalar> values) : dims_(std::move(dims)), values_(std::move(values)) {
        if (values_.size() != dims_.total())
            throw DimensionError("dense tensor value count does not match dims " + dims_.str());
    }

    const Dims& dims() const { return dims_; }
    const Vector<Scalar>& values() const { return values_; }
    Vector<Scalar>& values() { return values_; }

    Scalar operator()(std::span<const Index> coord) const { return values_[dims_.linear(coord)]; }
    Scalar& operator()(std::span<const Index> coord) { return values_[dims_.linear(coord)]; }

private:
    Dims dims_;
    Vector<Scalar> values_;
};

/// Revealed entries of a tensor, P_Omega(T), as a coordinate list. Entries
/// are kept sorted lexicographically by coordinate and are unique. Indices
/// are stored per mode (structure of arrays) for the contraction kernels.
template <typename Scalar>
class ObservedTensor {
public:
    ObservedTensor() = default;
    explicit ObservedTensor(Dims dims) : dims_(std::move(dims)), index_(static_cast<std::size_t>(dims_.order())) {}

    /// Builds from unsorted entries. Throws DimensionError for a coordinate
    /// outside `dims` and DataError for a repeated coordinate.
    static ObservedTensor from_entries(Dims dims, std::vector<Coordinate> coords, std::vector<Scalar> values) {
        if (coords.size() != values.size())
            throw DimensionError("coordinate and value counts differ");
        for (std::size_t e = 0; e < coords.size(); ++e)
            if (!dims.contains(coords[e]))
                throw DimensionError("coordinate " + std::to_string(e) + " outside dims " + dims.str());
        std::vector<std::size_t> order(coords.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return coords[a] < coords[b]; });
        for (std::size_t e = 1; e < order.size(); ++e)
            if (coords[order[e]] == coords[order[e - 1]])
                throw DataError("duplicate coordinate at entry " + std::to_string(order[e]));

        ObservedTensor t(std::move(dims));
        const auto K = static_cast<std::size_t>(t.dims_.order());
        for (std::size_t k = 0; k < K; ++k) t.index_[k].resize(order.size());
        t.values_.resize(static_cast<Index>(order.size()));
        for (std::size_t e = 0; e < order.size(); ++e) {
            const auto& c = coords[order[e]];
            for (std::size_t k = 0; k < K; ++k) t.index_[k][e] = static_cast<std::int32_t>(c[k]);
            t.values_[static_cast<Index>(e)] = values[order[e]];
        }
        return t;
    }

    /// Every coordinate of `dims`, in row-major order, with values from `dense`.
    static ObservedTensor full(const DenseTensor<Scalar>& dense) {
        ObservedTensor t(dense.dims());
        const Index N = dense.dims().total();
        const auto K = static_cast<std::size_t>(dense.dims().order());
        for (auto& ix : t.index_) ix.resize(static_cast<std::size_t>(N));
        Coordinate c(K, 0);
        for (Index e = 0; e < N; ++e) {
            for (std::size_t k = 0; k < K; ++k) t.index_[k][static_cast<std::size_t>(e)] = static_cast<std::int32_t>(c[k]);
            for (std::size_t k = K; k-- > 0;) {
                if (++c[k] < dense.dims()[static_cast<Index>(k)]) break;
                c[k] = 0;
            }
        }
        t.values_ = dense.values();
        return t;
    }

    const Dims& dims() const { return dims_; }
    Index order() const { return dims_.order(); }
    Index nnz() const { return values_.size(); }

    const Vector<Scalar>& values() const { return values_; }
    std::span<const std::int32_t> mode_index(Index k) const { return index_[static_cast<std::size_t>(k)]; }
    Index index(Index e, Index k) const { return index_[static_cast<std::size_t>(k)][static_cast<std::size_t>(e)]; }

    Coordinate coordinate(Index e) const {
        Coordinate c(static_cast<std::size_t>(order()));
        for (Index k = 0; k < order(); ++k) c[static_cast<std::size_t>(k)] = index(e, k);
        return c;
    }

    /// Same coordinate pattern, new values (aligned with the sorted entries).
    ObservedTensor with_values(Vector<Scalar> values) const {
        if (values.size() != nnz()) throw DimensionError("value count does not match pattern");
        ObservedTensor t = *this;
        t.values_ = std::move(values);
        return t;
    }

    /// Zero-filled dense copy.
    DenseTensor<Scalar> to_dense() const {
        DenseTensor<Scalar> d(dims_);
        Coordinate c(static_cast<std::size_t>(order()));
        for (Index e = 0; e < nnz(); ++e) {
            for (Index k = 0; k < order(); ++k) c[static_cast<std::size_t>(k)] = index(e, k);
            d(c) = values_[e];
        }
        return d;
    }

private:
    Dims dims_;
    std::vector<std::vector<std::int32_t>> index_;
    Vector<Scalar> values_;
};

/// Rank-R CP model: weights plus one n_k x R factor matrix per mode.
template <typename Scalar>
struct CPFactors {
    Vector<Scalar> weights;
    std::vector<Matrix<Scalar>> factors;

    Index rank() const { return weights.size(); }
    Index order() const { return static_cast<Index>(factors.size()); }
    Dims dims() const {
        std::vector<Index> n;
        for (const auto& f : factors) n.push_back(f.rows());
        return Dims(std::move(n));
    }
    void check() const {
        for (const auto& f : factors)
            if (f.cols() != rank()) throw DimensionError("factor column count differs from rank");
    }
};

/// Dense tensor sum_r w_r u_r^(1) o ... o u_r^(K).
template <typename Scalar>
DenseTensor<Scalar> reconstruct(const CPFactors<Scalar>& model) {
    model.check();
    const Dims dims = model.dims();
    Vector<Scalar> out = Vector<Scalar>::Zero(dims.total());
    Vector<Scalar> acc, next;
    for (Index r = 0; r < model.rank(); ++r) {
        acc = model.weights[r] * model.factors[0].col(r);
        for (std::size_t k = 1; k < model.factors.size(); ++k) {
            const auto& col = model.factors[k].col(r);
            next.resize(acc.size() * col.size());
            for (Index i = 0; i < acc.size(); ++i) next.segment(i * col.size(), col.size()) = acc[i] * col;
            acc.swap(next);
        }
        out += acc;
    }
    return DenseTensor<Scalar>(dims, std::move(out));
}

/// Value of the CP model at one coordinate.
template <typename Scalar>
Scalar reconstruct_at(const CPFactors<Scalar>& model, std::span<const Index> coord) {
    Scalar v = 0;
    for (Index r = 0; r < model.rank(); ++r) {
        Scalar p = model.weights[r];
        for (std::size_t k = 0; k < model.factors.size(); ++k) p *= model.factors[k](coord[k], r);
        v += p;
    }
    return v;
}

/// P_Omega(dense): the values of `dense` at the coordinates of `mask`
/// (the mask's own values are ignored).
template <typename Scalar>
ObservedTensor<Scalar> project(const ObservedTensor<Scalar>& mask, const DenseTensor<Scalar>& dense) {
    if (!(mask.dims() == dense.dims())) throw DimensionError("mask and tensor dims differ");
    Vector<Scalar> vals(mask.nnz());
    Coordinate c(static_cast<std::size_t>(mask.order()));
    for (Index e = 0; e < mask.nnz(); ++e) {
        for (Index k = 0; k < mask.order(); ++k) c[static_cast<std::size_t>(k)] = mask.index(e, k);
        vals[e] = dense(c);
    }
    return mask.with_values(std::move(vals));
}

namespace detail {

template <typename Scalar>
void check_fixed(const Dims& dims, std::span<const Vector<Scalar>> fixed, Index free_mode) {
    if (free_mode < 0 || free_mode >= dims.order()) throw DimensionError("free mode out of range");
    if (static_cast<Index>(fixed.size()) != dims.order())
        throw DimensionError("need one fixed-vector slot per mode");
    for (Index k = 0; k < dims.order(); ++k)
        if (k != free_mode && fixed[static_cast<std::size_t>(k)].size() != dims[k])
            throw DimensionError("fixed vector for mode " + std::to_string(k) + " has wrong length");
}

// Accumulates out[i_free] += f(value) * prod_{k != free} g(fixed_k[i_k]) over entries.
template <typename Scalar, bool Squared>
Vector<Scalar> masked_accumulate(const ObservedTensor<Scalar>& obs, std::span<const Vector<Scalar>> fixed,
                                 Index free_mode) {
    check_fixed(obs.dims(), fixed, free_mode);
    Vector<Scalar> out = Vector<Scalar>::Zero(obs.dims()[free_mode]);
    std::vector<const std::int32_t*> ix;
    std::vector<const Scalar*> vec;
    for (Index k = 0; k < obs.order(); ++k) {
        if (k == free_mode) continue;
        ix.push_back(obs.mode_index(k).data());
        vec.push_back(fixed[static_cast<std::size_t>(k)].data());
    }
    const std::int32_t* free_ix = obs.mode_index(free_mode).data();
    const Scalar* val = obs.values().data();
    const std::size_t others = ix.size();
    for (Index e = 0; e < obs.nnz(); ++e) {
        Scalar w = Squared ? Scalar(1) : val[e];
        for (std::size_t j = 0; j < others; ++j) {
            const Scalar x = vec[j][ix[j][e]];
            w *= Squared ? x * x : x;
        }
        out[free_ix[e]] += w;
    }
    return out;
}

}  // namespace detail

/// Component i: sum over observed entries with free-mode index i of
/// value * prod_{k != free} fixed_k[i_k]. `fixed[free_mode]` is ignored.
template <typename Scalar>
Vector<Scalar> masked_contract(const ObservedTensor<Scalar>& obs, std::span<const Vector<Scalar>> fixed,
                               Index free_mode) {
    return detail::masked_accumulate<Scalar, false>(obs, fixed, free_mode);
}

/// Component i: sum over observed coordinates with free-mode index i of
/// prod_{k != free} fixed_k[i_k]^2.
template <typename Scalar>
Vector<Scalar> masked_weight(const ObservedTensor<Scalar>& obs, std::span<const Vector<Scalar>> fixed,
                             Index free_mode) {
    return detail::masked_accumulate<Scalar, true>(obs, fixed, free_mode);
}

/// T x_{k != free} fixed_k.
template <typename Scalar>
Vector<Scalar> dense_contract(const DenseTensor<Scalar>& t, std::span<const Vector<Scalar>> fixed,
                              Index free_mode) {
    const Dims& dims = t.dims();
    detail::check_fixed(dims, fixed, free_mode);
    const auto K = static_cast<std::size_t>(dims.order());
    Vector<Scalar> out = Vector<Scalar>::Zero(dims[free_mode]);
    Coordinate c(K, 0);
    for (Index e = 0; e < dims.total(); ++e) {
        Scalar w = t.values()[e];
        for (std::size_t k = 0; k < K; ++k)
            if (static_cast<Index>(k) != free_mode) w *= fixed[k][c[k]];
        out[c[static_cast<std::size_t>(free_mode)]] += w;
        for (std::size_t k = K; k-- > 0;) {
            if (++c[k] < dims[static_cast<Index>(k)]) break;
            c[k] = 0;
        }
    }
    return out;
}

// Uniform name so generic code (the power method) can take either tensor kind.
template <typename Scalar>
Vector<Scalar> contract(const DenseTensor<Scalar>& t, std::span<const Vector<Scalar>> fixed, Index free_mode) {
    return dense_contract(t, fixed, free_mode);
}
template <typename Scalar>
Vector<Scalar> contract(const ObservedTensor<Scalar>& t, std::span<const Vector<Scalar>> fixed, Index free_mode) {
    return masked_contract(t, fixed, free_mode);
}

template <typename Scalar>
Scalar frobenius_norm(const DenseTensor<Scalar>& t) { return t.values().norm(); }
template <typename Scalar>
Scalar frobenius_norm(const ObservedTensor<Scalar>& t) { return t.values().norm(); }
template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& m) { return m.norm(); }

using DenseTensord = DenseTensor<double>;
using ObservedTensord = ObservedTensor<double>;
using CPFactorsd = CPFactors<double>;

}  // namespace costco
