#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gda4rec/errors.hpp"
#include "gda4rec/sparse.hpp"

namespace gda4rec {

using Rng = std::mt19937_64;

struct Interaction {
    Index user;
    Index item;

    friend bool operator==(const Interaction&, const Interaction&) = default;
    friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

/// Raw-ID <-> contiguous index tables, in first-appearance order.
class IdMap {
public:
    Index add(const std::string& raw) {
        auto [it, inserted] = lookup_.try_emplace(raw, static_cast<Index>(ids_.size()));
        if (inserted) {
            ids_.push_back(raw);
        }
        return it->second;
    }

    const std::string& raw(Index index) const { return ids_.at(index); }

    std::optional<Index> find(const std::string& raw) const {
        auto it = lookup_.find(raw);
        if (it == lookup_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    std::size_t size() const { return ids_.size(); }

private:
    std::unordered_map<std::string, Index> lookup_;
    std::vector<std::string> ids_;
};

/// Deduplicated (user, item) pairs over contiguous index spaces. Fold splits
/// are InteractionSets sharing the parent's index space and ID tables.
struct InteractionSet {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::vector<Interaction> pairs;
    std::shared_ptr<const IdMap> users;
    std::shared_ptr<const IdMap> items;

    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }

    /// Same index space, different pairs.
    InteractionSet with_pairs(std::vector<Interaction> subset) const {
        InteractionSet view{num_users, num_items, std::move(subset), users, items};
        return view;
    }
};

struct FoldSplit {
    std::size_t fold_index = 0;
    InteractionSet train;
    InteractionSet test;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t k = 0;
    auto is_sep = [](char c) { return c == ' ' || c == '\t' || c == ',' || c == '\r'; };
    while (k < line.size()) {
        while (k < line.size() && is_sep(line[k])) {
            ++k;
        }
        std::size_t start = k;
        while (k < line.size() && !is_sep(line[k])) {
            ++k;
        }
        if (k > start) {
            fields.push_back(line.substr(start, k - start));
        }
    }
    return fields;
}

}  // namespace detail

/// Parses `raw_user raw_item [ignored...]` lines. Fields may be separated by
/// whitespace or commas; blank lines and `#` comments are skipped.
inline InteractionSet parse_interactions(std::istream& in) {
    auto users = std::make_shared<IdMap>();
    auto items = std::make_shared<IdMap>();
    std::vector<Interaction> pairs;
    std::unordered_set<std::uint64_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        auto fields = detail::split_fields(line);
        if (fields.size() < 2) {
            throw ParseError(line_no, "expected at least 2 columns (user item), found " + std::to_string(fields.size()));
        }
        Index u = users->add(std::string(fields[0]));
        Index i = items->add(std::string(fields[1]));
        std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | i;
        if (seen.insert(key).second) {
            pairs.push_back({u, i});
        }
    }
    if (pairs.empty()) {
        throw DataError("empty dataset: no interactions found");
    }
    InteractionSet set;
    set.num_users = users->size();
    set.num_items = items->size();
    set.pairs = std::move(pairs);
    set.users = std::move(users);
    set.items = std::move(items);
    return set;
}

inline InteractionSet load_interactions(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open dataset file: " + path);
    }
    try {
        return parse_interactions(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), e.reason() + " (" + path + ")");
    }
}

/// Shuffles pairs with a seeded RNG and deals them round-robin into k test
/// buckets. Train sets keep the input order.
inline std::vector<FoldSplit> make_folds(const InteractionSet& data, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw ConfigError("make_folds: k must be at least 2, got " + std::to_string(k));
    }
    if (data.empty()) {
        throw DataError("make_folds: empty dataset");
    }
    if (k > data.size()) {
        throw DataError("make_folds: k=" + std::to_string(k) + " exceeds number of pairs " +
                        std::to_string(data.size()));
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> bucket(data.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        bucket[order[pos]] = pos % k;
    }
    std::vector<FoldSplit> folds;
    folds.reserve(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<Interaction> train;
        std::vector<Interaction> test;
        for (std::size_t p = 0; p < data.size(); ++p) {
            (bucket[p] == f ? test : train).push_back(data.pairs[p]);
        }
        folds.push_back({f, data.with_pairs(std::move(train)), data.with_pairs(std::move(test))});
    }
    return folds;
}

inline nlohmann::json fold_manifest(const std::vector<FoldSplit>& folds, std::uint64_t seed) {
    nlohmann::json doc;
    doc["seed"] = seed;
    doc["k"] = folds.size();
    doc["folds"] = nlohmann::json::array();
    for (const auto& f : folds) {
        doc["folds"].push_back(
            {{"fold_index", f.fold_index}, {"train_pairs", f.train.size()}, {"test_pairs", f.test.size()}});
    }
    return doc;
}

/// Per-user sorted item lists (CSR). Built once per training fold.
class UserItemIndex {
public:
    UserItemIndex() = default;

    explicit UserItemIndex(const InteractionSet& set) : num_items_(set.num_items), offsets_(set.num_users + 1, 0) {
        for (const auto& p : set.pairs) {
            ++offsets_[p.user + 1];
        }
        for (std::size_t u = 0; u < set.num_users; ++u) {
            offsets_[u + 1] += offsets_[u];
        }
        items_.resize(set.pairs.size());
        std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
        for (const auto& p : set.pairs) {
            items_[cursor[p.user]++] = p.item;
        }
        for (std::size_t u = 0; u < set.num_users; ++u) {
            std::sort(items_.begin() + static_cast<std::ptrdiff_t>(offsets_[u]),
                      items_.begin() + static_cast<std::ptrdiff_t>(offsets_[u + 1]));
        }
    }

    std::size_t num_users() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t num_items() const { return num_items_; }

    std::span<const Index> items(Index user) const {
        return std::span<const Index>(items_).subspan(offsets_[user], offsets_[user + 1] - offsets_[user]);
    }

    std::size_t degree(Index user) const { return offsets_[user + 1] - offsets_[user]; }

    bool contains(Index user, Index item) const {
        auto row = items(user);
        return std::binary_search(row.begin(), row.end(), item);
    }

private:
    std::size_t num_items_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<Index> items_;
};

/// Uniform draws (with replacement) from the items `user` has not interacted
/// with in the indexed training set.
inline std::vector<Index> sample_negatives(const UserItemIndex& train, Index user, std::size_t count, Rng& rng) {
    const std::size_t n = train.num_items();
    const std::size_t degree = train.degree(user);
    if (degree >= n) {
        throw DataError("sample_negatives: user " + std::to_string(user) + " has interacted with all " +
                        std::to_string(n) + " items");
    }
    std::vector<Index> out;
    out.reserve(count);
    auto seen = train.items(user);
    if (degree * 2 < n) {
        std::uniform_int_distribution<Index> pick(0, static_cast<Index>(n - 1));
        while (out.size() < count) {
            Index cand = pick(rng);
            if (!std::binary_search(seen.begin(), seen.end(), cand)) {
                out.push_back(cand);
            }
        }
        return out;
    }
    // Dense users: draw a rank among the complement and map it to an item.
    std::uniform_int_distribution<std::size_t> pick(0, n - degree - 1);
    while (out.size() < count) {
        std::size_t rank = pick(rng);
        Index item = static_cast<Index>(rank);
        for (Index s : seen) {
            if (s <= item) {
                ++item;
            } else {
                break;
            }
        }
        out.push_back(item);
    }
    return out;
}

}  // namespace gda4rec
