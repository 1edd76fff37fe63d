#include "fc2t2/multiindex.hpp"

#include <stdexcept>
#include <string>

#include "fc2t2/error.hpp"

namespace fc2t2 {

MultiIndexTable::MultiIndexTable(int rho) : rho_(rho) {
    if (rho < 1 || rho > 4)
        throw ConfigError("expansion order rho must be in [1,4], got " + std::to_string(rho));

    for (int order = 0; order <= rho; ++order)
        for (int a = 0; a <= order; ++a)
            for (int b = 0; a + b <= order; ++b)
                entries_.push_back({a, b, order - a - b});

    const int side = rho + 1;
    lookup_.assign(side * side * side, -1);
    for (int i = 0; i < size(); ++i) {
        const auto& e = entries_[i];
        lookup_[(e.n1 * side + e.n2) * side + e.n3] = i;
    }

    fact_.resize(2 * rho + 1);
    fact_[0] = 1.0;
    for (int n = 1; n <= 2 * rho; ++n) fact_[n] = fact_[n - 1] * n;
    binom_.assign(2 * rho + 1, std::vector<double>(2 * rho + 1, 0.0));
    for (int n = 0; n <= 2 * rho; ++n) {
        binom_[n][0] = 1.0;
        for (int k = 1; k <= n; ++k) binom_[n][k] = binom_[n - 1][k - 1] + (k <= n - 1 ? binom_[n - 1][k] : 0.0);
    }

    inv_fact_.resize(size());
    sign_.resize(size());
    raise_.resize(size());
    for (int i = 0; i < size(); ++i) {
        const auto& e = entries_[i];
        inv_fact_[i] = 1.0 / (fact_[e.n1] * fact_[e.n2] * fact_[e.n3]);
        sign_[i] = (e.order() % 2) ? -1.0 : 1.0;
        raise_[i] = {find(e.n1 + 1, e.n2, e.n3), find(e.n1, e.n2 + 1, e.n3), find(e.n1, e.n2, e.n3 + 1)};
    }
}

int MultiIndexTable::index_of(const MultiIndex& n) const {
    const int i = find(n.n1, n.n2, n.n3);
    if (i < 0)
        throw std::out_of_range("multi-index (" + std::to_string(n.n1) + "," + std::to_string(n.n2) + "," +
                                std::to_string(n.n3) + ") exceeds order " + std::to_string(rho_));
    return i;
}

MultiIndexTable build_table(int rho) { return MultiIndexTable(rho); }

} // namespace fc2t2
