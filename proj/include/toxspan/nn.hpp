// Small dense-math core for the tagger: a flat parameter store, recurrent
// cells (GRU / LSTM) with analytic backward passes, a bidirectional wrapper,
// parameter-free scaled dot-product self-attention, dense layers, the
// 3-class head with its losses, and RMSprop.
//
// Everything is double precision and scalar loops; model sizes here are
// desk-scale and gradient checks need the headroom.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "toxspan/util.hpp"

namespace toxspan::nn {

using Vec = std::vector<double>;

// Row-major matrix.
struct Mat {
    int rows = 0, cols = 0;
    Vec a;
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

inline double dot(const double* x, const double* y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

/// y += A x, A is (m x n) row-major.
inline void matvec_acc(const double* A, const double* x, double* y, int m, int n) {
    for (int i = 0; i < m; ++i) y[i] += dot(A + static_cast<size_t>(i) * n, x, n);
}

/// y += A^T x, A is (m x n) row-major, x has m entries, y has n.
inline void matvec_t_acc(const double* A, const double* x, double* y, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double* Ai = A + static_cast<size_t>(i) * n;
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (int j = 0; j < n; ++j) y[j] += Ai[j] * xi;
    }
}

/// G += u v^T, G is (m x n).
inline void outer_acc(double* G, const double* u, const double* v, int m, int n) {
    for (int i = 0; i < m; ++i) {
        double* Gi = G + static_cast<size_t>(i) * n;
        const double ui = u[i];
        if (ui == 0.0) continue;
        for (int j = 0; j < n; ++j) Gi[j] += ui * v[j];
    }
}

inline double sigmoid(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Flat parameter storage. Values and gradients live in two aligned vectors;
// layers hold slice ids. Finite-difference checks and the optimizer both
// walk the flat arrays.
// ---------------------------------------------------------------------------

struct ParamStore {
    struct Slice {
        std::string name;
        size_t off = 0;
        int rows = 0, cols = 0;
        size_t count() const { return static_cast<size_t>(rows) * cols; }
    };

    Vec val, grad;
    std::vector<Slice> slices;

    int add(const std::string& name, int rows, int cols) {
        Slice s{name, val.size(), rows, cols};
        val.resize(val.size() + s.count(), 0.0);
        grad.resize(val.size(), 0.0);
        slices.push_back(s);
        return static_cast<int>(slices.size()) - 1;
    }

    double* v(int id) { return val.data() + slices[static_cast<size_t>(id)].off; }
    const double* v(int id) const { return val.data() + slices[static_cast<size_t>(id)].off; }
    double* g(int id) { return grad.data() + slices[static_cast<size_t>(id)].off; }

    size_t size() const { return val.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    /// Glorot-uniform init for weight slices, zeros for biases (cols == 1
    /// marks a bias).
    void init(std::mt19937_64& rng) {
        for (const auto& s : slices) {
            double* p = val.data() + s.off;
            if (s.cols <= 1) {
                std::fill(p, p + s.count(), 0.0);
                continue;
            }
            double limit = std::sqrt(6.0 / (s.rows + s.cols));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (size_t i = 0; i < s.count(); ++i) p[i] = dist(rng);
        }
    }
};

// ---------------------------------------------------------------------------
// Recurrent cells. Both follow the standard gate layout with separate input
// and hidden biases; the reset gate is applied after the hidden matmul.
// ---------------------------------------------------------------------------

struct GruCell {
    int in = 0, hid = 0;
    int wih = -1, whh = -1, bih = -1, bhh = -1;

    GruCell() = default;
    GruCell(ParamStore& ps, const std::string& prefix, int input_size, int hidden_size)
        : in(input_size), hid(hidden_size) {
        wih = ps.add(prefix + ".w_ih", 3 * hid, in);
        whh = ps.add(prefix + ".w_hh", 3 * hid, hid);
        bih = ps.add(prefix + ".b_ih", 3 * hid, 1);
        bhh = ps.add(prefix + ".b_hh", 3 * hid, 1);
    }

    // Cached per-step activations needed by backward.
    struct Trace {
        Mat r, z, n, ghn, hprev;  // each (L x hid), indexed by scan step
    };

    // gates: r = sig(gi_r + gh_r), z = sig(gi_z + gh_z),
    //        n = tanh(gi_n + r * gh_n), h' = (1-z)*n + z*h
    void forward(const ParamStore& ps, const Mat& X, const std::vector<int>& order, Mat& H,
                 Trace& tr) const {
        const int L = static_cast<int>(order.size());
        tr.r = Mat(L, hid); tr.z = Mat(L, hid); tr.n = Mat(L, hid);
        tr.ghn = Mat(L, hid); tr.hprev = Mat(L, hid);
        Vec h(static_cast<size_t>(hid), 0.0), gi(static_cast<size_t>(3 * hid)),
            gh(static_cast<size_t>(3 * hid));
        const double* Wih = ps.v(wih);
        const double* Whh = ps.v(whh);
        const double* Bih = ps.v(bih);
        const double* Bhh = ps.v(bhh);
        for (int s = 0; s < L; ++s) {
            const int pos = order[static_cast<size_t>(s)];
            std::copy(Bih, Bih + 3 * hid, gi.begin());
            matvec_acc(Wih, X.row(pos), gi.data(), 3 * hid, in);
            std::copy(Bhh, Bhh + 3 * hid, gh.begin());
            matvec_acc(Whh, h.data(), gh.data(), 3 * hid, hid);

            double* r = tr.r.row(s);
            double* z = tr.z.row(s);
            double* n = tr.n.row(s);
            double* ghn = tr.ghn.row(s);
            std::copy(h.begin(), h.end(), tr.hprev.row(s));
            for (int k = 0; k < hid; ++k) {
                r[k] = sigmoid(gi[static_cast<size_t>(k)] + gh[static_cast<size_t>(k)]);
                z[k] = sigmoid(gi[static_cast<size_t>(hid + k)] + gh[static_cast<size_t>(hid + k)]);
                ghn[k] = gh[static_cast<size_t>(2 * hid + k)];
                n[k] = std::tanh(gi[static_cast<size_t>(2 * hid + k)] + r[k] * ghn[k]);
                h[static_cast<size_t>(k)] = (1.0 - z[k]) * n[k] + z[k] * tr.hprev.row(s)[k];
            }
            std::copy(h.begin(), h.end(), H.row(pos));
        }
    }

    void backward(ParamStore& ps, const Mat& X, const std::vector<int>& order, const Mat& dH,
                  const Trace& tr, Mat& dX) const {
        const int L = static_cast<int>(order.size());
        Vec carry(static_cast<size_t>(hid), 0.0);
        Vec dgi(static_cast<size_t>(3 * hid)), dgh(static_cast<size_t>(3 * hid));
        const double* Wih = ps.v(wih);
        const double* Whh = ps.v(whh);
        double* gWih = ps.g(wih);
        double* gWhh = ps.g(whh);
        double* gBih = ps.g(bih);
        double* gBhh = ps.g(bhh);
        for (int s = L - 1; s >= 0; --s) {
            const int pos = order[static_cast<size_t>(s)];
            const double* r = tr.r.row(s);
            const double* z = tr.z.row(s);
            const double* n = tr.n.row(s);
            const double* ghn = tr.ghn.row(s);
            const double* hprev = tr.hprev.row(s);
            const double* dh_in = dH.row(pos);
            for (int k = 0; k < hid; ++k) {
                const double dh = dh_in[k] + carry[static_cast<size_t>(k)];
                const double dz = dh * (hprev[k] - n[k]);
                const double dn = dh * (1.0 - z[k]);
                const double dn_pre = dn * (1.0 - n[k] * n[k]);
                const double dr = dn_pre * ghn[k];
                const double dghn = dn_pre * r[k];
                const double dr_pre = dr * r[k] * (1.0 - r[k]);
                const double dz_pre = dz * z[k] * (1.0 - z[k]);
                dgi[static_cast<size_t>(k)] = dr_pre;
                dgi[static_cast<size_t>(hid + k)] = dz_pre;
                dgi[static_cast<size_t>(2 * hid + k)] = dn_pre;
                dgh[static_cast<size_t>(k)] = dr_pre;
                dgh[static_cast<size_t>(hid + k)] = dz_pre;
                dgh[static_cast<size_t>(2 * hid + k)] = dghn;
                carry[static_cast<size_t>(k)] = dh * z[k];
            }
            outer_acc(gWih, dgi.data(), X.row(pos), 3 * hid, in);
            outer_acc(gWhh, dgh.data(), hprev, 3 * hid, hid);
            for (int k = 0; k < 3 * hid; ++k) {
                gBih[k] += dgi[static_cast<size_t>(k)];
                gBhh[k] += dgh[static_cast<size_t>(k)];
            }
            matvec_t_acc(Wih, dgi.data(), dX.row(pos), 3 * hid, in);
            matvec_t_acc(Whh, dgh.data(), carry.data(), 3 * hid, hid);
        }
    }
};

struct LstmCell {
    int in = 0, hid = 0;
    int wih = -1, whh = -1, bih = -1, bhh = -1;

    LstmCell() = default;
    LstmCell(ParamStore& ps, const std::string& prefix, int input_size, int hidden_size)
        : in(input_size), hid(hidden_size) {
        wih = ps.add(prefix + ".w_ih", 4 * hid, in);
        whh = ps.add(prefix + ".w_hh", 4 * hid, hid);
        bih = ps.add(prefix + ".b_ih", 4 * hid, 1);
        bhh = ps.add(prefix + ".b_hh", 4 * hid, 1);
    }

    struct Trace {
        Mat i, f, g, o, cprev, tc, hprev;  // (L x hid) each
    };

    // gates i,f,o sigmoid, g tanh; c' = f*c + i*g; h' = o*tanh(c')
    void forward(const ParamStore& ps, const Mat& X, const std::vector<int>& order, Mat& H,
                 Trace& tr) const {
        const int L = static_cast<int>(order.size());
        tr.i = Mat(L, hid); tr.f = Mat(L, hid); tr.g = Mat(L, hid); tr.o = Mat(L, hid);
        tr.cprev = Mat(L, hid); tr.tc = Mat(L, hid); tr.hprev = Mat(L, hid);
        Vec h(static_cast<size_t>(hid), 0.0), c(static_cast<size_t>(hid), 0.0),
            s4(static_cast<size_t>(4 * hid));
        const double* Wih = ps.v(wih);
        const double* Whh = ps.v(whh);
        const double* Bih = ps.v(bih);
        const double* Bhh = ps.v(bhh);
        for (int s = 0; s < L; ++s) {
            const int pos = order[static_cast<size_t>(s)];
            for (int k = 0; k < 4 * hid; ++k) s4[static_cast<size_t>(k)] = Bih[k] + Bhh[k];
            matvec_acc(Wih, X.row(pos), s4.data(), 4 * hid, in);
            matvec_acc(Whh, h.data(), s4.data(), 4 * hid, hid);
            std::copy(h.begin(), h.end(), tr.hprev.row(s));
            std::copy(c.begin(), c.end(), tr.cprev.row(s));
            double* gi = tr.i.row(s);
            double* gf = tr.f.row(s);
            double* gg = tr.g.row(s);
            double* go = tr.o.row(s);
            double* tc = tr.tc.row(s);
            for (int k = 0; k < hid; ++k) {
                gi[k] = sigmoid(s4[static_cast<size_t>(k)]);
                gf[k] = sigmoid(s4[static_cast<size_t>(hid + k)]);
                gg[k] = std::tanh(s4[static_cast<size_t>(2 * hid + k)]);
                go[k] = sigmoid(s4[static_cast<size_t>(3 * hid + k)]);
                c[static_cast<size_t>(k)] = gf[k] * c[static_cast<size_t>(k)] + gi[k] * gg[k];
                tc[k] = std::tanh(c[static_cast<size_t>(k)]);
                h[static_cast<size_t>(k)] = go[k] * tc[k];
            }
            std::copy(h.begin(), h.end(), H.row(pos));
        }
    }

    void backward(ParamStore& ps, const Mat& X, const std::vector<int>& order, const Mat& dH,
                  const Trace& tr, Mat& dX) const {
        const int L = static_cast<int>(order.size());
        Vec hcarry(static_cast<size_t>(hid), 0.0), ccarry(static_cast<size_t>(hid), 0.0);
        Vec ds(static_cast<size_t>(4 * hid));
        const double* Wih = ps.v(wih);
        const double* Whh = ps.v(whh);
        double* gWih = ps.g(wih);
        double* gWhh = ps.g(whh);
        double* gBih = ps.g(bih);
        double* gBhh = ps.g(bhh);
        for (int s = L - 1; s >= 0; --s) {
            const int pos = order[static_cast<size_t>(s)];
            const double* gi = tr.i.row(s);
            const double* gf = tr.f.row(s);
            const double* gg = tr.g.row(s);
            const double* go = tr.o.row(s);
            const double* cprev = tr.cprev.row(s);
            const double* tc = tr.tc.row(s);
            const double* hprev = tr.hprev.row(s);
            const double* dh_in = dH.row(pos);
            for (int k = 0; k < hid; ++k) {
                const double dh = dh_in[k] + hcarry[static_cast<size_t>(k)];
                const double do_ = dh * tc[k];
                const double dc = dh * go[k] * (1.0 - tc[k] * tc[k]) + ccarry[static_cast<size_t>(k)];
                const double di = dc * gg[k];
                const double df = dc * cprev[k];
                const double dg = dc * gi[k];
                ccarry[static_cast<size_t>(k)] = dc * gf[k];
                ds[static_cast<size_t>(k)] = di * gi[k] * (1.0 - gi[k]);
                ds[static_cast<size_t>(hid + k)] = df * gf[k] * (1.0 - gf[k]);
                ds[static_cast<size_t>(2 * hid + k)] = dg * (1.0 - gg[k] * gg[k]);
                ds[static_cast<size_t>(3 * hid + k)] = do_ * go[k] * (1.0 - go[k]);
            }
            outer_acc(gWih, ds.data(), X.row(pos), 4 * hid, in);
            outer_acc(gWhh, ds.data(), hprev, 4 * hid, hid);
            for (int k = 0; k < 4 * hid; ++k) {
                gBih[k] += ds[static_cast<size_t>(k)];
                gBhh[k] += ds[static_cast<size_t>(k)];
            }
            matvec_t_acc(Wih, ds.data(), dX.row(pos), 4 * hid, in);
            std::fill(hcarry.begin(), hcarry.end(), 0.0);
            matvec_t_acc(Whh, ds.data(), hcarry.data(), 4 * hid, hid);
        }
    }
};

/// Forward and backward passes over the same input, outputs concatenated.
/// Output width is 2 * hidden.
template <typename Cell>
struct BiRnn {
    Cell fw, bw;
    int hid = 0;

    BiRnn() = default;
    BiRnn(ParamStore& ps, const std::string& prefix, int input_size, int hidden_size)
        : fw(ps, prefix + ".fw", input_size, hidden_size),
          bw(ps, prefix + ".bw", input_size, hidden_size),
          hid(hidden_size) {}

    struct Trace {
        typename Cell::Trace fw, bw;
        Mat hf, hb;
    };

    static std::vector<int> fw_order(int L) {
        std::vector<int> o(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i) o[static_cast<size_t>(i)] = i;
        return o;
    }
    static std::vector<int> bw_order(int L) {
        std::vector<int> o(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i) o[static_cast<size_t>(i)] = L - 1 - i;
        return o;
    }

    void forward(const ParamStore& ps, const Mat& X, Mat& H, Trace& tr) const {
        const int L = X.rows;
        tr.hf = Mat(L, hid);
        tr.hb = Mat(L, hid);
        fw.forward(ps, X, fw_order(L), tr.hf, tr.fw);
        bw.forward(ps, X, bw_order(L), tr.hb, tr.bw);
        H = Mat(L, 2 * hid);
        for (int t = 0; t < L; ++t) {
            std::copy(tr.hf.row(t), tr.hf.row(t) + hid, H.row(t));
            std::copy(tr.hb.row(t), tr.hb.row(t) + hid, H.row(t) + hid);
        }
    }

    void backward(ParamStore& ps, const Mat& X, const Mat& dH, const Trace& tr, Mat& dX) const {
        const int L = X.rows;
        Mat dhf(L, hid), dhb(L, hid);
        for (int t = 0; t < L; ++t) {
            std::copy(dH.row(t), dH.row(t) + hid, dhf.row(t));
            std::copy(dH.row(t) + hid, dH.row(t) + 2 * hid, dhb.row(t));
        }
        fw.backward(ps, X, fw_order(L), dhf, tr.fw, dX);
        bw.backward(ps, X, bw_order(L), dhb, tr.bw, dX);
    }
};

// ---------------------------------------------------------------------------
// Scaled dot-product self-attention, single head, no learned projections.
// Masked key positions are excluded from every softmax row; a row with no
// unmasked keys yields the zero vector.
// ---------------------------------------------------------------------------

struct SelfAttention {
    struct Trace {
        Mat weights;  // (L x L), zero at masked keys
        bool any_key = false;
    };

    static void forward(const Mat& H, const std::vector<uint8_t>& mask, Mat& O, Trace& tr) {
        const int L = H.rows;
        const int d = H.cols;
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        tr.weights = Mat(L, L);
        tr.any_key = false;
        O = Mat(L, d);
        for (int j = 0; j < L; ++j)
            if (mask[static_cast<size_t>(j)]) tr.any_key = true;
        if (!tr.any_key) return;  // degenerate all-masked input

        Vec scores(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i) {
            double mx = -1e300;
            for (int j = 0; j < L; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                scores[static_cast<size_t>(j)] = dot(H.row(i), H.row(j), d) * scale;
                mx = std::max(mx, scores[static_cast<size_t>(j)]);
            }
            double sum = 0.0;
            for (int j = 0; j < L; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                double w = std::exp(scores[static_cast<size_t>(j)] - mx);
                tr.weights.at(i, j) = w;
                sum += w;
            }
            double* Oi = O.row(i);
            for (int j = 0; j < L; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                double w = tr.weights.at(i, j) / sum;
                tr.weights.at(i, j) = w;
                const double* Hj = H.row(j);
                for (int k = 0; k < d; ++k) Oi[k] += w * Hj[k];
            }
        }
    }

    static void backward(const Mat& H, const std::vector<uint8_t>& mask, const Mat& dO,
                         const Trace& tr, Mat& dH) {
        const int L = H.rows;
        const int d = H.cols;
        if (!tr.any_key) return;
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));

        // O = W H term
        for (int i = 0; i < L; ++i) {
            const double* dOi = dO.row(i);
            for (int j = 0; j < L; ++j) {
                const double w = tr.weights.at(i, j);
                if (w == 0.0) continue;
                double* dHj = dH.row(j);
                for (int k = 0; k < d; ++k) dHj[k] += w * dOi[k];
            }
        }
        // softmax + score terms
        Vec dW(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i) {
            const double* dOi = dO.row(i);
            double srow = 0.0;
            for (int j = 0; j < L; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                dW[static_cast<size_t>(j)] = dot(dOi, H.row(j), d);
                srow += tr.weights.at(i, j) * dW[static_cast<size_t>(j)];
            }
            double* dHi = dH.row(i);
            for (int j = 0; j < L; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                const double ds = tr.weights.at(i, j) * (dW[static_cast<size_t>(j)] - srow) * scale;
                if (ds == 0.0) continue;
                const double* Hj = H.row(j);
                const double* Hi = H.row(i);
                double* dHj = dH.row(j);
                for (int k = 0; k < d; ++k) {
                    dHi[k] += ds * Hj[k];
                    dHj[k] += ds * Hi[k];
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Per-position dense layers
// ---------------------------------------------------------------------------

/// Y = tanh(X W^T + b), applied row-wise.
struct DenseTanh {
    int in = 0, out = 0;
    int w = -1, b = -1;

    DenseTanh() = default;
    DenseTanh(ParamStore& ps, const std::string& prefix, int input_size, int output_size)
        : in(input_size), out(output_size) {
        w = ps.add(prefix + ".w", out, in);
        b = ps.add(prefix + ".b", out, 1);
    }

    void forward(const ParamStore& ps, const Mat& X, Mat& Y) const {
        const int L = X.rows;
        Y = Mat(L, out);
        const double* W = ps.v(w);
        const double* B = ps.v(b);
        for (int t = 0; t < L; ++t) {
            double* y = Y.row(t);
            std::copy(B, B + out, y);
            matvec_acc(W, X.row(t), y, out, in);
            for (int k = 0; k < out; ++k) y[k] = std::tanh(y[k]);
        }
    }

    void backward(ParamStore& ps, const Mat& X, const Mat& Y, const Mat& dY, Mat& dX) const {
        const int L = X.rows;
        const double* W = ps.v(w);
        double* gW = ps.g(w);
        double* gB = ps.g(b);
        Vec dpre(static_cast<size_t>(out));
        for (int t = 0; t < L; ++t) {
            const double* y = Y.row(t);
            const double* dy = dY.row(t);
            for (int k = 0; k < out; ++k) dpre[static_cast<size_t>(k)] = dy[k] * (1.0 - y[k] * y[k]);
            outer_acc(gW, dpre.data(), X.row(t), out, in);
            for (int k = 0; k < out; ++k) gB[k] += dpre[static_cast<size_t>(k)];
            matvec_t_acc(W, dpre.data(), dX.row(t), out, in);
        }
    }
};

/// Z = X W^T + b; scores = sigmoid(Z). The loss treats the three sigmoid
/// outputs as an unnormalized probability vector and renormalizes, which is
/// what sparse categorical cross-entropy over non-logit inputs computes in
/// the usual frameworks. The softmax flag switches to a plain softmax head.
struct Head {
    int in = 0, classes = 0;
    int w = -1, b = -1;

    Head() = default;
    Head(ParamStore& ps, const std::string& prefix, int input_size, int num_classes)
        : in(input_size), classes(num_classes) {
        w = ps.add(prefix + ".w", classes, in);
        b = ps.add(prefix + ".b", classes, 1);
    }

    void forward(const ParamStore& ps, const Mat& X, Mat& Z, Mat& Scores) const {
        const int L = X.rows;
        Z = Mat(L, classes);
        Scores = Mat(L, classes);
        const double* W = ps.v(w);
        const double* B = ps.v(b);
        for (int t = 0; t < L; ++t) {
            double* z = Z.row(t);
            std::copy(B, B + classes, z);
            matvec_acc(W, X.row(t), z, classes, in);
            double* s = Scores.row(t);
            for (int k = 0; k < classes; ++k) s[k] = sigmoid(z[k]);
        }
    }

    /// Mean per-position loss over the sequence plus dZ (unscaled: caller
    /// divides by the global position count).
    static double loss_and_dz(const Mat& Scores, const Mat& Z, const std::vector<int>& labels,
                              bool softmax_head, Mat& dZ) {
        const int L = Scores.rows;
        const int C = Scores.cols;
        dZ = Mat(L, C);
        double total = 0.0;
        constexpr double kTiny = 1e-12;
        for (int t = 0; t < L; ++t) {
            const int y = labels[static_cast<size_t>(t)];
            if (softmax_head) {
                const double* z = Z.row(t);
                double mx = z[0];
                for (int k = 1; k < C; ++k) mx = std::max(mx, z[k]);
                double sum = 0.0;
                for (int k = 0; k < C; ++k) sum += std::exp(z[k] - mx);
                const double logq = z[y] - mx - std::log(sum);
                total -= logq;
                double* dz = dZ.row(t);
                for (int k = 0; k < C; ++k) dz[k] = std::exp(z[k] - mx) / sum;
                dz[y] -= 1.0;
            } else {
                const double* s = Scores.row(t);
                double sum = 0.0;
                for (int k = 0; k < C; ++k) sum += s[k];
                sum = std::max(sum, kTiny);
                const double p_y = std::max(s[y] / sum, kTiny);
                total -= std::log(p_y);
                double* dz = dZ.row(t);
                for (int k = 0; k < C; ++k) {
                    const double pk = s[k] / sum;
                    dz[k] = (k == y) ? (1.0 - s[k]) * (pk - 1.0) : pk * (1.0 - s[k]);
                }
            }
        }
        return total;
    }

    void backward(ParamStore& ps, const Mat& X, const Mat& dZ, Mat& dX) const {
        const int L = X.rows;
        const double* W = ps.v(w);
        double* gW = ps.g(w);
        double* gB = ps.g(b);
        for (int t = 0; t < L; ++t) {
            const double* dz = dZ.row(t);
            outer_acc(gW, dz, X.row(t), classes, in);
            for (int k = 0; k < classes; ++k) gB[k] += dz[k];
            matvec_t_acc(W, dz, dX.row(t), classes, in);
        }
    }
};

// ---------------------------------------------------------------------------
// RMSprop
// ---------------------------------------------------------------------------

struct RmsProp {
    double lr = 1e-3;
    double rho = 0.9;
    double eps = 1e-8;
    Vec cache;

    void step(ParamStore& ps) {
        if (cache.size() != ps.size()) cache.assign(ps.size(), 0.0);
        for (size_t i = 0; i < ps.size(); ++i) {
            const double g = ps.grad[i];
            cache[i] = rho * cache[i] + (1.0 - rho) * g * g;
            ps.val[i] -= lr * g / (std::sqrt(cache[i]) + eps);
        }
    }
};

}  // namespace toxspan::nn
