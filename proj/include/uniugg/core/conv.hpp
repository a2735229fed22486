#pragma once

#include "uniugg/core/autograd.hpp"

// 2D convolutions over single [C,H,W] maps, im2col + GEMM. Batch handling is
// the caller's loop; at this project's grid sizes that is never the bottleneck.

namespace uniugg::core {

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// cols[C*k*k, Ho*Wo]
template <typename T>
void im2col(const T* x, int64_t c_in, int64_t h, int64_t w, int64_t k, int64_t stride, int64_t pad,
            std::vector<T>& cols) {
    int64_t ho = conv_out_dim(h, k, stride, pad);
    int64_t wo = conv_out_dim(w, k, stride, pad);
    cols.assign(static_cast<size_t>(c_in * k * k * ho * wo), T(0));
    for (int64_t c = 0; c < c_in; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                int64_t crow = (c * k + ky) * k + kx;
                T* dst = cols.data() + crow * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = x + (c * h + iy) * w;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        int64_t ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        dst[oy * wo + ox] = src[ix];
                    }
                }
            }
        }
    }
}

// scatter-add inverse of im2col
template <typename T>
void col2im(const T* cols, int64_t c_in, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, T* x) {
    int64_t ho = conv_out_dim(h, k, stride, pad);
    int64_t wo = conv_out_dim(w, k, stride, pad);
    for (int64_t c = 0; c < c_in; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                int64_t crow = (c * k + ky) * k + kx;
                const T* src = cols + crow * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = x + (c * h + iy) * w;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        int64_t ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        dst[ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// x [Ci,H,W], w [Co,Ci,k,k], b [Co] -> [Co,Ho,Wo]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad) {
    if (x.shape().size() != 3 || w.shape().size() != 4)
        throw ValidationError("conv2d: expects x[C,H,W], w[Co,Ci,k,k]");
    int64_t ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    int64_t co = w.shape()[0], k = w.shape()[2];
    if (w.shape()[1] != ci || w.shape()[3] != k || b.numel() != co)
        throw ValidationError("conv2d: weight/bias shape mismatch");
    int64_t ho = detail::conv_out_dim(h, k, stride, pad);
    int64_t wo = detail::conv_out_dim(wd, k, stride, pad);
    if (ho < 1 || wo < 1) throw ValidationError("conv2d: output would be empty");

    std::vector<T> cols;
    detail::im2col(x.val().v.data(), ci, h, wd, k, stride, pad, cols);
    std::vector<T> out(static_cast<size_t>(co * ho * wo));
    {
        ECMap<T> mw(w.val().v.data(), co, ci * k * k);
        ECMap<T> mc(cols.data(), ci * k * k, ho * wo);
        EMap<T> mo(out.data(), co, ho * wo);
        mo.noalias() = mw * mc;
        for (int64_t o = 0; o < co; ++o) mo.row(o).array() += b.val().v[static_cast<size_t>(o)];
    }
    return detail::make_op<T>(
        {co, ho, wo}, std::move(out), {x.node(), w.node(), b.node()},
        [ci, h, wd, co, k, stride, pad, ho, wo](Node<T>& self) {
            auto& px = self.parents[0];
            auto& pw = self.parents[1];
            auto& pb = self.parents[2];
            ECMap<T> g(self.grad.data(), co, ho * wo);
            std::vector<T> cols;
            if (px->requires_grad || pw->requires_grad)
                detail::im2col(px->value.v.data(), ci, h, wd, k, stride, pad, cols);
            if (pw->requires_grad) {
                pw->ensure_grad();
                ECMap<T> mc(cols.data(), ci * k * k, ho * wo);
                EMap<T> gw(pw->grad.data(), co, ci * k * k);
                gw.noalias() += g * mc.transpose();
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int64_t o = 0; o < co; ++o) pb->grad[static_cast<size_t>(o)] += g.row(o).sum();
            }
            if (px->requires_grad) {
                px->ensure_grad();
                std::vector<T> dcols(static_cast<size_t>(ci * k * k * ho * wo));
                ECMap<T> mw(pw->value.v.data(), co, ci * k * k);
                EMap<T> mdc(dcols.data(), ci * k * k, ho * wo);
                mdc.noalias() = mw.transpose() * g;
                detail::col2im(dcols.data(), ci, h, wd, k, stride, pad, px->grad.data());
            }
        });
}

// x [Ci,H,W], w [Ci,Co,k,k], b [Co] -> [Co,(H-1)s-2p+k, (W-1)s-2p+k]
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad) {
    if (x.shape().size() != 3 || w.shape().size() != 4)
        throw ValidationError("conv_transpose2d: expects x[C,H,W], w[Ci,Co,k,k]");
    int64_t ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    int64_t co = w.shape()[1], k = w.shape()[2];
    if (w.shape()[0] != ci || w.shape()[3] != k || b.numel() != co)
        throw ValidationError("conv_transpose2d: weight/bias shape mismatch");
    int64_t ho = (h - 1) * stride - 2 * pad + k;
    int64_t wo = (wd - 1) * stride - 2 * pad + k;
    if (ho < 1 || wo < 1) throw ValidationError("conv_transpose2d: output would be empty");

    // Forward is the data-gradient of a conv mapping [Co,ho,wo] -> [Ci,h,w].
    std::vector<T> cols(static_cast<size_t>(co * k * k * h * wd));
    {
        ECMap<T> mw(w.val().v.data(), ci, co * k * k);
        ECMap<T> mx(x.val().v.data(), ci, h * wd);
        EMap<T> mc(cols.data(), co * k * k, h * wd);
        mc.noalias() = mw.transpose() * mx;
    }
    std::vector<T> out(static_cast<size_t>(co * ho * wo), T(0));
    detail::col2im(cols.data(), co, ho, wo, k, stride, pad, out.data());
    for (int64_t o = 0; o < co; ++o) {
        T bv = b.val().v[static_cast<size_t>(o)];
        T* dst = out.data() + o * ho * wo;
        for (int64_t i = 0; i < ho * wo; ++i) dst[i] += bv;
    }
    return detail::make_op<T>(
        {co, ho, wo}, std::move(out), {x.node(), w.node(), b.node()},
        [ci, h, wd, co, k, stride, pad, ho, wo](Node<T>& self) {
            auto& px = self.parents[0];
            auto& pw = self.parents[1];
            auto& pb = self.parents[2];
            std::vector<T> gcols;
            if (px->requires_grad || pw->requires_grad)
                detail::im2col(self.grad.data(), co, ho, wo, k, stride, pad, gcols);
            if (px->requires_grad) {
                px->ensure_grad();
                ECMap<T> mw(pw->value.v.data(), ci, co * k * k);
                ECMap<T> mg(gcols.data(), co * k * k, h * wd);
                EMap<T> gx(px->grad.data(), ci, h * wd);
                gx.noalias() += mw * mg;
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                ECMap<T> mx(px->value.v.data(), ci, h * wd);
                ECMap<T> mg(gcols.data(), co * k * k, h * wd);
                EMap<T> gw(pw->grad.data(), ci, co * k * k);
                gw.noalias() += mx * mg.transpose();
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int64_t o = 0; o < co; ++o) {
                    T acc = T(0);
                    const T* src = self.grad.data() + o * ho * wo;
                    for (int64_t i = 0; i < ho * wo; ++i) acc += src[i];
                    pb->grad[static_cast<size_t>(o)] += acc;
                }
            }
        });
}

}  // namespace uniugg::core
