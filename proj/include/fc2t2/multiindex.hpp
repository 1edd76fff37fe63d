#pragma once

#include <array>
#include <compare>
#include <vector>

namespace fc2t2 {

struct MultiIndex {
    int n1 = 0, n2 = 0, n3 = 0;

    int order() const { return n1 + n2 + n3; }
    int operator[](int axis) const { return axis == 0 ? n1 : (axis == 1 ? n2 : n3); }
    MultiIndex operator+(const MultiIndex& o) const { return {n1 + o.n1, n2 + o.n2, n3 + o.n3}; }
    bool dominates(const MultiIndex& o) const { return n1 >= o.n1 && n2 >= o.n2 && n3 >= o.n3; }
    auto operator<=>(const MultiIndex&) const = default;
};

inline MultiIndex unit_index(int axis) {
    return {axis == 0 ? 1 : 0, axis == 1 ? 1 : 0, axis == 2 ? 1 : 0};
}

// All 3D multi-indices of total order <= rho in graded-lex order: by total
// order first, then lexicographically on (n1, n2, n3). Truncating to a
// lower order is therefore a prefix of the entry list.
class MultiIndexTable {
public:
    explicit MultiIndexTable(int rho);

    int rho() const { return rho_; }
    int size() const { return static_cast<int>(entries_.size()); }
    const MultiIndex& operator[](int i) const { return entries_[i]; }
    const std::vector<MultiIndex>& entries() const { return entries_; }

    // Throws std::out_of_range when |n| > rho or a component is negative.
    int index_of(const MultiIndex& n) const;
    // No range check; -1 when n lies outside the table.
    int find(int n1, int n2, int n3) const {
        if (n1 < 0 || n2 < 0 || n3 < 0 || n1 + n2 + n3 > rho_) return -1;
        return lookup_[(n1 * (rho_ + 1) + n2) * (rho_ + 1) + n3];
    }

    // Tabulated for 0..2*rho.
    double factorial(int n) const { return fact_[n]; }
    double binomial(int n, int k) const { return binom_[n][k]; }

    // 1/(n1! n2! n3!) and (-1)^|n| for entry i.
    double inv_factorial(int i) const { return inv_fact_[i]; }
    double parity_sign(int i) const { return sign_[i]; }

    // Entry index of entries[i] + e_axis, or -1 past the order cap.
    int raise(int i, int axis) const { return raise_[i][axis]; }

private:
    int rho_;
    std::vector<MultiIndex> entries_;
    std::vector<int> lookup_;
    std::vector<double> fact_;
    std::vector<std::vector<double>> binom_;
    std::vector<double> inv_fact_, sign_;
    std::vector<std::array<int, 3>> raise_;
};

inline int table_size(int rho) { return (rho + 1) * (rho + 2) * (rho + 3) / 6; }

MultiIndexTable build_table(int rho);

} // namespace fc2t2
