#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "rltopic/errors.hpp"
#include "rltopic/random.hpp"
#include "rltopic/tensor.hpp"

using namespace rltopic;

TEST_CASE("tensor shapes") {
    Tensor s = Tensor::scalar(2.5);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.item() == 2.5);
    CHECK(s.rows() == 1);
    CHECK(s.cols() == 1);

    Tensor v = Tensor::vector({1, 2, 3});
    CHECK(v.rank() == 1);
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 3);

    Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.at(1, 2) == 6);
    CHECK(shape_string(m.shape()) == "[2x3]");
    CHECK_THROWS_AS(m.item(), ConfigError);
}

TEST_CASE("tensor construction errors") {
    CHECK_THROWS_AS(Tensor({1, 2, 3}), ConfigError);
    CHECK_THROWS_AS(Tensor::matrix(2, 2, {1, 2, 3}), ConfigError);
}

TEST_CASE("tensor finiteness and equality") {
    Tensor a({2, 2}, 1.0);
    CHECK(a.all_finite());
    Tensor b = a;
    CHECK(a == b);
    b[3] = std::nan("");
    CHECK_FALSE(b.all_finite());
    CHECK_FALSE(a == b);
    a.fill(0.5);
    CHECK(a[0] == 0.5);
}

TEST_CASE("random source is deterministic") {
    RandomSource a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs = differs || x != c.next_u64();
    }
    CHECK(differs);
}

TEST_CASE("mt19937_64 reference value") {
    // The standard requires the 10000th draw of a default-seeded engine to
    // be 9981545732273789042; seed 5489 is the default seed.
    RandomSource r(5489);
    std::uint64_t x = 0;
    for (int i = 0; i < 10000; ++i) x = r.next_u64();
    CHECK(x == 9981545732273789042ull);
}

TEST_CASE("uniform and normal moments") {
    RandomSource r(7);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("uniform_index covers the range evenly") {
    RandomSource r(11);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.uniform_index(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("substreams are independent of consumption order") {
    RandomSource parent(99);
    RandomSource s1 = substream(parent, Stream::action);
    parent.next_u64();
    RandomSource s2 = substream(parent, Stream::action);
    CHECK(s1.next_u64() == s2.next_u64());
    RandomSource other = substream(parent, Stream::shuffle);
    RandomSource again = substream(parent, Stream::action);
    CHECK(other.next_u64() != again.next_u64());
}

TEST_CASE("shuffle is a permutation") {
    RandomSource r(3);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    r.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    bool moved = false;
    for (int i = 0; i < 50; ++i) moved = moved || v[i] != i;
    CHECK(moved);
}
