#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "giwr/binary_io.hpp"
#include "giwr/diffcore/tensor.hpp"
#include "giwr/rng.hpp"

namespace giwr::datagen {

using diff::Tensor;

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s2;
    bool terminal = false;
    std::optional<std::vector<double>> a2;  // SARSA datasets only; zero when terminal

    bool operator==(const Transition&) const = default;
};

struct DatasetHeader {
    std::uint32_t obs_dim = 0;
    std::uint32_t act_dim = 0;
    bool sarsa = false;
    std::string grade;

    bool operator==(const DatasetHeader&) const = default;
};

// Immutable-after-build collection of transitions, stored column-wise.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t obs_dim, std::size_t act_dim, bool sarsa, std::string grade)
        : header_{static_cast<std::uint32_t>(obs_dim), static_cast<std::uint32_t>(act_dim), sarsa, std::move(grade)} {}

    const DatasetHeader& header() const { return header_; }
    std::size_t obs_dim() const { return header_.obs_dim; }
    std::size_t act_dim() const { return header_.act_dim; }
    bool sarsa() const { return header_.sarsa; }
    const std::string& grade() const { return header_.grade; }
    std::size_t size() const { return r_.size(); }
    bool empty() const { return r_.empty(); }

    void set_grade(std::string grade) { header_.grade = std::move(grade); }

    void push(const Transition& t) {
        if (t.s.size() != obs_dim() || t.s2.size() != obs_dim() || t.a.size() != act_dim()) {
            throw ShapeError("dataset: transition dims do not match header");
        }
        if (sarsa() != t.a2.has_value()) throw ContractError("dataset: SARSA flag and next action disagree");
        s_.insert(s_.end(), t.s.begin(), t.s.end());
        a_.insert(a_.end(), t.a.begin(), t.a.end());
        r_.push_back(t.r);
        s2_.insert(s2_.end(), t.s2.begin(), t.s2.end());
        term_.push_back(t.terminal ? 1 : 0);
        if (sarsa()) {
            if (t.a2->size() != act_dim()) throw ShapeError("dataset: next action has wrong dimension");
            if (t.terminal) {
                a2_.insert(a2_.end(), act_dim(), 0.0);
            } else {
                a2_.insert(a2_.end(), t.a2->begin(), t.a2->end());
            }
        }
    }

    Transition at(std::size_t i) const {
        Transition t;
        t.s = slice(s_, i, obs_dim());
        t.a = slice(a_, i, act_dim());
        t.r = r_[i];
        t.s2 = slice(s2_, i, obs_dim());
        t.terminal = term_[i] != 0;
        if (sarsa()) t.a2 = slice(a2_, i, act_dim());
        return t;
    }

    // Records in the given order (indices may repeat).
    Dataset select(std::span<const std::size_t> order) const {
        Dataset out(obs_dim(), act_dim(), sarsa(), grade());
        for (std::size_t i : order) out.push(at(i));
        return out;
    }

    Dataset shuffled(Rng& rng) const {
        std::vector<std::size_t> order(size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        return select(order);
    }

    bool operator==(const Dataset&) const = default;

private:
    static std::vector<double> slice(const std::vector<double>& v, std::size_t i, std::size_t w) {
        return {v.begin() + static_cast<long>(i * w), v.begin() + static_cast<long>((i + 1) * w)};
    }

    DatasetHeader header_;
    std::vector<double> s_, a_, r_, s2_, a2_;
    std::vector<std::uint8_t> term_;
};

// Minibatch as row-aligned tensors: s, a, s2 are [n, dim]; r and terminal are [n, 1].
struct Batch {
    Tensor s, a, r, s2, terminal;
    std::optional<Tensor> a2;

    std::size_t size() const { return r.rows(); }
};

inline Batch gather(const Dataset& d, std::span<const std::size_t> indices) {
    const std::size_t n = indices.size(), od = d.obs_dim(), ad = d.act_dim();
    Batch b{Tensor(diff::Shape{n, od}), Tensor(diff::Shape{n, ad}), Tensor(diff::Shape{n, 1}),
            Tensor(diff::Shape{n, od}), Tensor(diff::Shape{n, 1}), std::nullopt};
    if (d.sarsa()) b.a2 = Tensor(diff::Shape{n, ad});
    for (std::size_t k = 0; k < n; ++k) {
        const Transition t = d.at(indices[k]);
        std::copy(t.s.begin(), t.s.end(), b.s.row(k).begin());
        std::copy(t.a.begin(), t.a.end(), b.a.row(k).begin());
        b.r[k] = t.r;
        std::copy(t.s2.begin(), t.s2.end(), b.s2.row(k).begin());
        b.terminal[k] = t.terminal ? 1.0 : 0.0;
        if (b.a2) std::copy(t.a2->begin(), t.a2->end(), b.a2->row(k).begin());
    }
    return b;
}

inline Batch full_batch(const Dataset& d) {
    std::vector<std::size_t> all(d.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return gather(d, all);
}

// Uniform draw with replacement.
inline Batch sample_minibatch(const Dataset& d, std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ContractError("sample_minibatch: batch size must be >= 1");
    if (d.empty()) throw ContractError("sample_minibatch: dataset is empty");
    std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
    std::vector<std::size_t> idx(batch_size);
    for (std::size_t& i : idx) i = pick(rng);
    return gather(d, idx);
}

}  // namespace giwr::datagen
