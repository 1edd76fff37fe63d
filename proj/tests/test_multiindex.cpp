#include "doctest.h"

#include <set>
#include <stdexcept>
#include <tuple>

#include "fc2t2/error.hpp"
#include "fc2t2/multiindex.hpp"

using namespace fc2t2;

TEST_CASE("entry counts follow the tetrahedral numbers") {
    for (int rho = 1; rho <= 4; ++rho) {
        MultiIndexTable t(rho);
        CHECK(t.size() == (rho + 1) * (rho + 2) * (rho + 3) / 6);
        CHECK(table_size(rho) == t.size());
    }
    CHECK(MultiIndexTable(4).size() == 35);
}

TEST_CASE("order one lists the constant and the three unit indices") {
    MultiIndexTable t(1);
    REQUIRE(t.size() == 4);
    CHECK(t[0] == MultiIndex{0, 0, 0});
    CHECK(t[1] == MultiIndex{0, 0, 1});
    CHECK(t[2] == MultiIndex{0, 1, 0});
    CHECK(t[3] == MultiIndex{1, 0, 0});
}

TEST_CASE("order two holds exactly the triples of total order at most two") {
    MultiIndexTable t(2);
    std::set<std::tuple<int, int, int>> enumerated, listed;
    for (int a = 0; a <= 2; ++a)
        for (int b = 0; b <= 2; ++b)
            for (int c = 0; c <= 2; ++c)
                if (a + b + c <= 2) enumerated.insert({a, b, c});
    for (const auto& n : t.entries()) listed.insert({n.n1, n.n2, n.n3});
    CHECK(t.size() == 10);
    CHECK(listed == enumerated);
}

TEST_CASE("entries are graded then lexicographic") {
    for (int rho = 1; rho <= 4; ++rho) {
        MultiIndexTable t(rho);
        for (int i = 1; i < t.size(); ++i) {
            const auto& a = t[i - 1];
            const auto& b = t[i];
            CHECK((a.order() < b.order() || (a.order() == b.order() && a < b)));
        }
    }
}

TEST_CASE("index lookup is a bijection") {
    for (int rho = 1; rho <= 4; ++rho) {
        MultiIndexTable t(rho);
        for (int i = 0; i < t.size(); ++i) CHECK(t.index_of(t[i]) == i);
    }
    MultiIndexTable t(4);
    CHECK(t.index_of({0, 0, 0}) == 0);
    CHECK(t.index_of({4, 0, 0}) == 34);
    CHECK_THROWS_AS(t.index_of({3, 1, 1}), std::out_of_range);
    CHECK_THROWS_AS(t.index_of({-1, 0, 0}), std::out_of_range);
    CHECK(t.find(0, 5, 0) == -1);
}

TEST_CASE("orders outside one to four are rejected") {
    CHECK_THROWS_AS(MultiIndexTable(0), ConfigError);
    CHECK_THROWS_AS(MultiIndexTable(5), ConfigError);
    CHECK_THROWS_AS(build_table(-2), ConfigError);
}

TEST_CASE("factorial and binomial tables match integer arithmetic") {
    MultiIndexTable t(4);
    long f = 1;
    for (int n = 0; n <= 8; ++n) {
        if (n > 0) f *= n;
        CHECK(t.factorial(n) == static_cast<double>(f));
        long c = 1;
        for (int k = 0; k <= n; ++k) {
            CHECK(t.binomial(n, k) == static_cast<double>(c));
            c = c * (n - k) / (k + 1);
        }
    }
}

TEST_CASE("raise steps one order up along an axis") {
    MultiIndexTable t(3);
    for (int i = 0; i < t.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            const int up = t.raise(i, a);
            if (t[i].order() == 3) {
                CHECK(up == -1);
            } else {
                REQUIRE(up >= 0);
                CHECK(t[up] == t[i] + unit_index(a));
            }
        }
    const int i = t.index_of({1, 2, 0});
    CHECK(t.inv_factorial(i) == doctest::Approx(0.5));
    CHECK(t.parity_sign(i) == -1.0);
}
