#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fc2t2/error.hpp"
#include "fc2t2/kernel.hpp"
#include "fc2t2/multiindex.hpp"
#include "fc2t2/parallel.hpp"
#include "fc2t2/types.hpp"

namespace fc2t2 {

struct SourceSet {
    Points p;
    Values w;

    long size() const { return static_cast<long>(p.rows()); }
    int channels() const { return static_cast<int>(w.cols()); }
};

inline bool in_domain(const Vec3& x) {
    return x.x() > -1.0 && x.x() < 1.0 && x.y() > -1.0 && x.y() < 1.0 && x.z() > -1.0 && x.z() < 1.0;
}

inline void require_in_domain(const Points& q, const char* what) {
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        if (!in_domain(q.row(i).transpose()))
            throw InputError(std::string(what) + " " + std::to_string(i) + " is not strictly inside (-1,1)^3");
}

// Stage FLOPs under the per-item counting model: locating the box (9),
// offset from the center (3), scaled per-axis powers (2 per power and
// axis), then 2 per coefficient for P2M and 4 per coefficient for L2P.
inline long long p2m_flops_per_source(int rho) { return 9 + 3 + 6 * rho + 2LL * table_size(rho); }
inline long long l2p_flops_per_target(int rho) { return 9 + 3 + 6 * rho + 4LL * table_size(rho); }

struct FlopCounter {
    long long p2m = 0, m2m = 0, m2l = 0, l2l = 0, l2p = 0;
    long long total() const { return p2m + m2m + m2l + l2l + l2p; }
    void reset() { *this = FlopCounter{}; }
};

enum class GridKind { moments, locals };

// res^3 boxes x C channels x P coefficients. Row (box * C + c) holds the
// P coefficients of one box and channel; boxes are numbered x-major.
template <class Scalar>
struct ExpansionGrid {
    int level = 0;
    int res = 0;
    int channels = 1;
    int P = 0;
    GridKind kind = GridKind::moments;
    RowMat<Scalar> data;

    ExpansionGrid() = default;
    ExpansionGrid(int level_, int channels_, int P_, GridKind kind_)
        : level(level_), res(level_resolution(level_)), channels(channels_), P(P_), kind(kind_),
          data(RowMat<Scalar>::Zero(static_cast<Eigen::Index>(res) * res * res * channels_, P_)) {}

    long boxes() const { return static_cast<long>(res) * res * res; }
    double box_width() const { return 2.0 / res; }
    double box_half() const { return 1.0 / res; }
    long element_count() const { return static_cast<long>(data.size()); }
    static long element_count_for(int level, int channels, int P) {
        const long r = level_resolution(level);
        return r * r * r * channels * P;
    }

    long box_id(int i, int j, int k) const { return (static_cast<long>(i) * res + j) * res + k; }
    long box_id(const Vec3i& b) const { return box_id(b.x(), b.y(), b.z()); }
    Vec3i box_coords(long id) const {
        return Vec3i(static_cast<int>(id / (static_cast<long>(res) * res)), static_cast<int>((id / res) % res),
                     static_cast<int>(id % res));
    }
    bool contains(const Vec3i& b) const { return (b.array() >= 0).all() && (b.array() < res).all(); }
    Vec3 center(const Vec3i& b) const { return (b.cast<double>().array() + 0.5).matrix() * box_width() - Vec3::Ones(); }

    Vec3i find_box(const Vec3& x) const {
        if (!in_domain(x)) throw InputError("point is not strictly inside (-1,1)^3");
        Vec3i b;
        for (int a = 0; a < 3; ++a) b[a] = std::min(res - 1, static_cast<int>(std::floor((x[a] + 1.0) * res * 0.5)));
        return b;
    }

    auto rows(long box) { return data.middleRows(box * channels, channels); }
    auto rows(long box) const { return data.middleRows(box * channels, channels); }
};

// One flag per box of a grid level, in box_id order.
using BoxMask = std::vector<std::uint8_t>;

inline BoxMask boxes_holding(const Points& q, int level) {
    const int res = level_resolution(level);
    BoxMask m(static_cast<std::size_t>(res) * res * res, 0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const Vec3 x = q.row(i).transpose();
        if (!in_domain(x)) throw InputError("point is not strictly inside (-1,1)^3");
        long id = 0;
        for (int a = 0; a < 3; ++a) id = id * res + std::min(res - 1, static_cast<int>(std::floor((x[a] + 1.0) * res * 0.5)));
        m[id] = 1;
    }
    return m;
}

// Parents of the flagged boxes, one level up.
inline BoxMask coarsen(const BoxMask& fine, int fine_level) {
    const int res = level_resolution(fine_level), half = res / 2;
    BoxMask m(static_cast<std::size_t>(half) * half * half, 0);
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j)
            for (int k = 0; k < res; ++k)
                if (fine[(static_cast<long>(i) * res + j) * res + k])
                    m[(static_cast<long>(i / 2) * half + j / 2) * half + k / 2] = 1;
    return m;
}

// out[i] = d^n / n! for entry n = t[i].
template <class T>
void monomial_basis(const MultiIndexTable& t, const Vec3& d, T* out) {
    double pw[3][5];
    for (int a = 0; a < 3; ++a) {
        pw[a][0] = 1.0;
        for (int m = 1; m <= t.rho(); ++m) pw[a][m] = pw[a][m - 1] * d[a] / m;
    }
    for (int i = 0; i < t.size(); ++i) {
        const MultiIndex& n = t[i];
        out[i] = static_cast<T>(pw[0][n.n1] * pw[1][n.n2] * pw[2][n.n3]);
    }
}

// Re-centering kernel K(n, k) = d^(n-k) / (n-k)! for k <= n.
inline Eigen::MatrixXd shift_matrix(const MultiIndexTable& t, const Vec3& d) {
    const int P = t.size();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(P, P);
    for (int n = 0; n < P; ++n)
        for (int k = 0; k < P; ++k) {
            if (!t[n].dominates(t[k])) continue;
            double v = 1.0;
            for (int a = 0; a < 3; ++a) {
                const int e = t[n][a] - t[k][a];
                v *= std::pow(d[a], e) / t.factorial(e);
            }
            K(n, k) = v;
        }
    return K;
}

// Inserts point charges (N x C) and optional dipoles (N x 3C, column
// c*3 + axis) into a finest-level moment grid. A dipole g at q adds
// sum_a g_a d/dq_a (d^n / n!), the moments of a differentiated source.
// Every box accumulates its points in index order, whatever the thread count.
template <class Scalar>
ExpansionGrid<Scalar> p2m(const MultiIndexTable& t, int level, const Points& at, const Values& charges,
                          const Values* dipoles = nullptr, int threads = 1, FlopCounter* flops = nullptr) {
    const int C = static_cast<int>(charges.cols());
    if (charges.rows() != at.rows()) throw ContractError("p2m: weights and points disagree in count");
    if (dipoles && (dipoles->rows() != at.rows() || dipoles->cols() != 3 * C))
        throw ContractError("p2m: dipole block must be N x 3C");
    require_in_domain(at, "source");
    ExpansionGrid<Scalar> M(level, std::max(C, 1), t.size(), GridKind::moments);
    const long N = at.rows();
    std::vector<long> box(N);
    for (long i = 0; i < N; ++i) box[i] = M.box_id(M.find_box(at.row(i).transpose()));

    auto insert = [&](long i, std::vector<double>& basis) {
        const long b = box[i];
        monomial_basis(t, at.row(i).transpose() - M.center(M.box_coords(b)), basis.data());
        for (int c = 0; c < C; ++c) {
            auto row = M.data.row(b * C + c);
            const double q = charges(i, c);
            if (q != 0.0)
                for (int k = 0; k < t.size(); ++k) row[k] += static_cast<Scalar>(q * basis[k]);
            if (!dipoles) continue;
            for (int a = 0; a < 3; ++a) {
                const double g = (*dipoles)(i, c * 3 + a);
                if (g == 0.0) continue;
                for (int k = 0; k < t.size(); ++k) {
                    const int up = t.raise(k, a);
                    if (up >= 0) row[up] += static_cast<Scalar>(g * basis[k]);
                }
            }
        }
    };

    if (threads <= 1 || N < 1024) {
        std::vector<double> basis(t.size());
        for (long i = 0; i < N; ++i) insert(i, basis);
    } else {
        // Stable counting sort by box, then disjoint box ranges per worker.
        std::vector<long> start(M.boxes() + 1, 0), order(N);
        for (long i = 0; i < N; ++i) ++start[box[i] + 1];
        for (long b = 0; b < M.boxes(); ++b) start[b + 1] += start[b];
        std::vector<long> fill(start.begin(), start.end() - 1);
        for (long i = 0; i < N; ++i) order[fill[box[i]]++] = i;
        parallel_for(M.boxes(), threads, [&](long b0, long b1, int) {
            std::vector<double> basis(t.size());
            for (long j = start[b0]; j < start[b1]; ++j) insert(order[j], basis);
        });
    }
    if (flops) flops->p2m += N * p2m_flops_per_source(t.rho());
    return M;
}

namespace detail {

template <class Scalar>
std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> child_shifts(const MultiIndexTable& t,
                                                                                 int fine_level, bool flip) {
    const double h = 0.5 * level_box_width(fine_level);
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> K(8);
    for (int c = 0; c < 8; ++c) {
        Vec3 d((c >> 2) & 1 ? h : -h, (c >> 1) & 1 ? h : -h, c & 1 ? h : -h);
        if (flip) d = -d;
        K[c] = shift_matrix(t, d).cast<Scalar>();
    }
    return K;
}

} // namespace detail

template <class Scalar>
ExpansionGrid<Scalar> m2m(const ExpansionGrid<Scalar>& fine, const MultiIndexTable& t, int threads = 1,
                          FlopCounter* flops = nullptr) {
    if (fine.kind != GridKind::moments) throw ContractError("m2m expects a moment grid");
    if (fine.level < 2) throw ContractError("m2m needs a fine level >= 2");
    ExpansionGrid<Scalar> coarse(fine.level - 1, fine.channels, fine.P, GridKind::moments);
    const auto K = detail::child_shifts<Scalar>(t, fine.level, false);
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> KT(8);
    for (int c = 0; c < 8; ++c) KT[c] = K[c].transpose();
    parallel_for(coarse.boxes(), threads, [&](long b0, long b1, int) {
        for (long b = b0; b < b1; ++b) {
            const Vec3i B = coarse.box_coords(b);
            auto out = coarse.rows(b);
            for (int c = 0; c < 8; ++c) {
                const Vec3i child = 2 * B + Vec3i((c >> 2) & 1, (c >> 1) & 1, c & 1);
                out.noalias() += fine.rows(fine.box_id(child)) * KT[c];
            }
        }
    });
    if (flops) flops->m2m += fine.boxes() * fine.channels * 2LL * fine.P * fine.P;
    return coarse;
}

// Adds the re-centered coarse local expansions into the child boxes of
// `fine`. flip_sign mirrors the shift and exists only to let verification
// prove it can catch a broken operator.
template <class Scalar>
void l2l_accumulate(const ExpansionGrid<Scalar>& coarse, ExpansionGrid<Scalar>& fine, const MultiIndexTable& t,
                    int threads = 1, FlopCounter* flops = nullptr, bool flip_sign = false,
                    const BoxMask* targets = nullptr) {
    if (coarse.kind != GridKind::locals || fine.kind != GridKind::locals) throw ContractError("l2l expects local grids");
    if (fine.level != coarse.level + 1 || fine.channels != coarse.channels)
        throw ContractError("l2l: grid levels or channels do not match");
    const auto K = detail::child_shifts<Scalar>(t, fine.level, flip_sign);
    parallel_for(fine.boxes(), threads, [&](long b0, long b1, int) {
        for (long b = b0; b < b1; ++b) {
            if (targets && !(*targets)[b]) continue;
            const Vec3i f = fine.box_coords(b);
            const int c = ((f.x() & 1) << 2) | ((f.y() & 1) << 1) | (f.z() & 1);
            const Vec3i parent(f.x() >> 1, f.y() >> 1, f.z() >> 1);
            fine.rows(b).noalias() += coarse.rows(coarse.box_id(parent)) * K[c];
        }
    });
    const long visited = targets ? std::count(targets->begin(), targets->end(), std::uint8_t{1}) : fine.boxes();
    if (flops) flops->l2l += visited * fine.channels * 2LL * fine.P * fine.P;
}

template <class Scalar>
ExpansionGrid<Scalar> l2l(const ExpansionGrid<Scalar>& coarse, const MultiIndexTable& t, int threads = 1,
                          FlopCounter* flops = nullptr, bool flip_sign = false) {
    ExpansionGrid<Scalar> fine(coarse.level + 1, coarse.channels, coarse.P, GridKind::locals);
    l2l_accumulate(coarse, fine, t, threads, flops, flip_sign);
    return fine;
}

// Moment-to-local conversion for one level, prepared for repeated use.
// Far passes at levels >= 3 and the near pass are stencils whose targets
// fall into parity classes sharing one offset list; each class runs as one
// gathered matrix product. The coarsest level resolves every non-adjacent
// pair and runs offset by offset.
template <class Scalar>
class M2LPlan {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    M2LPlan() = default;
    explicit M2LPlan(const M2LTable& table) : level_(table.level), near_(table.nearfield), res_(level_resolution(table.level)) {
        P_ = table.coeffs.empty() ? 0 : static_cast<int>(table.coeffs[0].rows());
        if (near_) {
            classes_.resize(1);
            classes_[0].origin = Vec3i::Zero();
            classes_[0].stride = 1;
            for (std::size_t s = 0; s < table.offsets.size(); ++s) classes_[0].offsets.push_back(table.offsets[s]);
            build_weights(classes_[0], table);
        } else if (table.level == 2 || table.radius > 3) {
            for (std::size_t s = 0; s < table.offsets.size(); ++s)
                if (table.mask[s]) {
                    direct_offsets_.push_back(table.offsets[s]);
                    direct_blocks_.push_back(table.coeffs[s].transpose().cast<Scalar>());
                }
        } else {
            classes_.resize(8);
            for (int c = 0; c < 8; ++c) {
                Class& k = classes_[c];
                k.origin = Vec3i((c >> 2) & 1, (c >> 1) & 1, c & 1);
                k.stride = 2;
                for (int x = k.origin.x() - 3; x <= k.origin.x() + 2; ++x)
                    for (int y = k.origin.y() - 3; y <= k.origin.y() + 2; ++y)
                        for (int z = k.origin.z() - 3; z <= k.origin.z() + 2; ++z) {
                            const Vec3i d(x, y, z);
                            if (d.cwiseAbs().maxCoeff() > 1) k.offsets.push_back(d);
                        }
                build_weights(k, table);
            }
        }
    }

    int level() const { return level_; }
    bool nearfield() const { return near_; }

    // Enumerates every (target, source) box pair this pass resolves.
    template <class Fn>
    void for_each_pair(Fn&& fn) const {
        auto visit = [&](const Vec3i& t, const Vec3i& d) {
            const Vec3i s = t - d;
            if ((s.array() >= 0).all() && (s.array() < res_).all()) fn(t, s);
        };
        for (const Class& k : classes_) {
            const int n = (res_ - k.origin.x() + k.stride - 1) / k.stride;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int l = 0; l < n; ++l)
                        for (const Vec3i& d : k.offsets) visit(k.origin + k.stride * Vec3i(i, j, l), d);
        }
        for (const Vec3i& d : direct_offsets_)
            for (int i = 0; i < res_; ++i)
                for (int j = 0; j < res_; ++j)
                    for (int l = 0; l < res_; ++l) visit(Vec3i(i, j, l), d);
    }

    // Source-major evaluation pays off once fewer than this fraction of the
    // boxes hold any moment.
    static constexpr double kScatterOccupancy = 0.45;
    // Elements of the gathered operand per GEMM call.
    static constexpr long kGatherBudget = 1L << 21;

    // With `targets`, only flagged boxes of L receive contributions. `dense`
    // forces the target-major path whatever the occupancy.
    void apply(const ExpansionGrid<Scalar>& M, ExpansionGrid<Scalar>& L, int threads, FlopCounter* flops,
               const BoxMask* targets = nullptr, bool dense = false) const {
        if (M.kind != GridKind::moments || L.kind != GridKind::locals) throw ContractError("m2l: wrong grid kinds");
        if (M.level != level_ || L.level != level_ || M.channels != L.channels)
            throw ContractError("m2l: level or channel mismatch between table and grids");
        if (targets && static_cast<long>(targets->size()) != L.boxes())
            throw ContractError("m2l: target mask does not match the grid");
        if (!classes_.empty()) {
            BoxMask occupied(M.boxes(), 0);
            long count = 0;
            for (long b = 0; b < M.boxes(); ++b)
                if (!M.rows(b).isZero(0)) occupied[b] = 1, ++count;
            long needed = M.boxes();
            if (targets) needed = std::count(targets->begin(), targets->end(), std::uint8_t{1});
            const bool scatter = !dense && count < kScatterOccupancy * needed;
            for (std::size_t c = 0; c < classes_.size(); ++c) {
                if (scatter)
                    apply_scatter(classes_[c], M, L, occupied, targets, flops);
                else
                    apply_class(classes_[c], M, L, targets, threads, flops);
            }
        }
        apply_direct(M, L, flops);
    }

private:
    struct Class {
        Vec3i origin;
        int stride = 1;
        std::vector<Vec3i> offsets;
        Mat weights;  // offsets.size() * P x P, block o = T_o^T
        // Source-major form: sources of parity `origin` reach targets at
        // s + spread[o]; block o of spread_weights is T^T for that offset.
        std::vector<Vec3i> spread;
        RowMat<Scalar> spread_weights;  // P x spread.size() * P
    };

    void build_weights(Class& k, const M2LTable& table) {
        k.weights.resize(static_cast<Eigen::Index>(k.offsets.size()) * P_, P_);
        for (std::size_t o = 0; o < k.offsets.size(); ++o)
            k.weights.middleRows(o * P_, P_) = table.coeffs[table.slot(k.offsets[o])].transpose().template cast<Scalar>();
        // The window of a source parity is the mirror of the target window.
        for (const Vec3i& d : k.offsets) k.spread.push_back(-d);
        k.spread_weights.resize(P_, static_cast<Eigen::Index>(k.spread.size()) * P_);
        for (std::size_t o = 0; o < k.spread.size(); ++o)
            k.spread_weights.middleCols(o * P_, P_) =
                table.coeffs[table.slot(k.spread[o])].transpose().template cast<Scalar>();
    }

    void apply_scatter(const Class& k, const ExpansionGrid<Scalar>& M, ExpansionGrid<Scalar>& L,
                       const BoxMask& occupied, const BoxMask* targets, FlopCounter* flops) const {
        const int C = M.channels, P = P_, K = static_cast<int>(k.spread.size());
        std::vector<long> src;
        const int n = (res_ - k.origin.x() + k.stride - 1) / k.stride;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int l = 0; l < n; ++l) {
                    const long b = M.box_id(k.origin + k.stride * Vec3i(i, j, l));
                    if (occupied[b]) src.push_back(b);
                }
        const long chunk = std::max<long>(1, kGatherBudget / (static_cast<long>(K) * P * C));
        RowMat<Scalar> G, Z;
        for (std::size_t s0 = 0; s0 < src.size(); s0 += chunk) {
            const long ns = std::min<long>(chunk, static_cast<long>(src.size() - s0));
            G.resize(ns * C, P);
            for (long si = 0; si < ns; ++si) G.middleRows(si * C, C) = M.rows(src[s0 + si]);
            Z.noalias() = G * k.spread_weights;
            for (long si = 0; si < ns; ++si) {
                const Vec3i s = M.box_coords(src[s0 + si]);
                for (int o = 0; o < K; ++o) {
                    const Vec3i t = s + k.spread[o];
                    if (!M.contains(t)) continue;
                    const long tb = M.box_id(t);
                    if (!targets || (*targets)[tb]) L.rows(tb) += Z.block(si * C, static_cast<Eigen::Index>(o) * P, C, P);
                }
            }
        }
        if (flops) flops->m2l += static_cast<long long>(src.size()) * C * 2LL * K * P * P;
    }

    void apply_class(const Class& k, const ExpansionGrid<Scalar>& M, ExpansionGrid<Scalar>& L, const BoxMask* targets,
                     int threads, FlopCounter* flops) const {
        const int C = M.channels, P = P_, K = static_cast<int>(k.offsets.size());
        const int n = (res_ - k.origin.x() + k.stride - 1) / k.stride;
        std::vector<long> dst;
        dst.reserve(static_cast<std::size_t>(n) * n * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int l = 0; l < n; ++l) {
                    const long b = M.box_id(k.origin + k.stride * Vec3i(i, j, l));
                    if (!targets || (*targets)[b]) dst.push_back(b);
                }
        const long total = static_cast<long>(dst.size());
        if (total == 0) return;
        const long chunk = std::max<long>(1, std::min<long>(total, kGatherBudget / (static_cast<long>(K) * P * C)));
        const long chunks = (total + chunk - 1) / chunk;
        parallel_for(chunks, threads, [&](long c0, long c1, int) {
            RowMat<Scalar> G, Y;
            for (long ch = c0; ch < c1; ++ch) {
                const long t0 = ch * chunk, t1 = std::min(total, t0 + chunk), nt = t1 - t0;
                G.resize(nt * C, static_cast<Eigen::Index>(K) * P);
                for (long ti = 0; ti < nt; ++ti) {
                    const Vec3i t = M.box_coords(dst[t0 + ti]);
                    for (int o = 0; o < K; ++o) {
                        const Vec3i s = t - k.offsets[o];
                        auto block = G.block(ti * C, static_cast<Eigen::Index>(o) * P, C, P);
                        if (M.contains(s))
                            block = M.rows(M.box_id(s));
                        else
                            block.setZero();
                    }
                }
                Y.noalias() = G * k.weights;
                for (long ti = 0; ti < nt; ++ti) L.rows(dst[t0 + ti]) += Y.middleRows(ti * C, C);
            }
        });
        if (flops) flops->m2l += total * C * 2LL * K * P * P;
    }

    void apply_direct(const ExpansionGrid<Scalar>& M, ExpansionGrid<Scalar>& L, FlopCounter* flops) const {
        const int C = M.channels;
        RowMat<Scalar> G, Y;
        std::vector<long> src, dst;
        for (std::size_t o = 0; o < direct_offsets_.size(); ++o) {
            const Vec3i& d = direct_offsets_[o];
            src.clear();
            dst.clear();
            for (int i = std::max(0, -d.x()); i < std::min(res_, res_ - d.x()); ++i)
                for (int j = std::max(0, -d.y()); j < std::min(res_, res_ - d.y()); ++j)
                    for (int l = std::max(0, -d.z()); l < std::min(res_, res_ - d.z()); ++l) {
                        src.push_back(M.box_id(i, j, l));
                        dst.push_back(M.box_id(i + d.x(), j + d.y(), l + d.z()));
                    }
            G.resize(static_cast<Eigen::Index>(src.size()) * C, P_);
            for (std::size_t r = 0; r < src.size(); ++r) G.middleRows(r * C, C) = M.rows(src[r]);
            Y.noalias() = G * direct_blocks_[o];
            for (std::size_t r = 0; r < dst.size(); ++r) L.rows(dst[r]) += Y.middleRows(r * C, C);
            if (flops) flops->m2l += static_cast<long long>(src.size()) * C * 2LL * P_ * P_;
        }
    }

    int level_ = 0;
    bool near_ = false;
    int res_ = 0;
    int P_ = 0;
    std::vector<Class> classes_;
    std::vector<Vec3i> direct_offsets_;
    std::vector<Mat> direct_blocks_;
};

template <class Scalar>
ExpansionGrid<Scalar> m2l(const ExpansionGrid<Scalar>& M, const M2LTable& table, int threads = 1,
                          FlopCounter* flops = nullptr) {
    if (table.level != M.level) throw ContractError("m2l: table level does not match grid level");
    ExpansionGrid<Scalar> L(M.level, M.channels, M.P, GridKind::locals);
    M2LPlan<Scalar>(table).apply(M, L, threads, flops);
    return L;
}

} // namespace fc2t2
