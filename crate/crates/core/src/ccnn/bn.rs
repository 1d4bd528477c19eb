use super::{Mode, Planes, Real};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel whitening batch norm. `gamma[c, 0] = γ_rr + j·γ_ii` and
/// `gamma[c, 1] = γ_ri` (imaginary part unused); `running_cov` packs the
/// 2×2 covariance the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<R> {
    pub gamma: Planes<R>,
    pub beta: Planes<R>,
    pub running_mean: Planes<R>,
    pub running_cov: Planes<R>,
}

impl<R: Real> BnParams<R> {
    /// Γ = I/√2, β = 0, running statistics of a unit circular Gaussian.
    pub fn new(channels: usize) -> Self {
        let mut gamma = Planes::zeros(&[channels, 2]);
        let mut running_cov = Planes::zeros(&[channels, 2]);
        for c in 0..channels {
            gamma.re[2 * c] = R::of(std::f64::consts::FRAC_1_SQRT_2);
            gamma.im[2 * c] = R::of(std::f64::consts::FRAC_1_SQRT_2);
            running_cov.re[2 * c] = R::of(0.5);
            running_cov.im[2 * c] = R::of(0.5);
        }
        BnParams {
            gamma,
            beta: Planes::zeros(&[channels]),
            running_mean: Planes::zeros(&[channels]),
            running_cov,
        }
    }

    /// Same layout, every entry zero; used to hold gradients.
    pub fn zeros(channels: usize) -> Self {
        BnParams {
            gamma: Planes::zeros(&[channels, 2]),
            beta: Planes::zeros(&[channels]),
            running_mean: Planes::zeros(&[channels]),
            running_cov: Planes::zeros(&[channels, 2]),
        }
    }

    pub fn channels(&self) -> usize {
        self.beta.len()
    }

    fn gamma_of(&self, c: usize) -> Sym {
        Sym {
            rr: self.gamma.re[2 * c].f64(),
            ii: self.gamma.im[2 * c].f64(),
            ri: self.gamma.re[2 * c + 1].f64(),
        }
    }

    /// Exponential moving average of the batch statistics in `cache`.
    pub fn update_running(&mut self, cache: &BnCache<R>, momentum: f64) {
        let blend =
            |old: &mut R, new: f64| *old = R::of((1.0 - momentum) * old.f64() + momentum * new);
        for (c, st) in cache.stats.iter().enumerate() {
            blend(&mut self.running_mean.re[c], st.mean.0);
            blend(&mut self.running_mean.im[c], st.mean.1);
            blend(&mut self.running_cov.re[2 * c], st.cov.rr);
            blend(&mut self.running_cov.im[2 * c], st.cov.ii);
            blend(&mut self.running_cov.re[2 * c + 1], st.cov.ri);
        }
    }
}

/// Symmetric 2×2 matrix `[[rr, ri], [ri, ii]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sym {
    rr: f64,
    ii: f64,
    ri: f64,
}

impl Sym {
    fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (self.rr * v.0 + self.ri * v.1, self.ri * v.0 + self.ii * v.1)
    }
}

/// Eigendecomposition `V = Q diag(λ) Qᵀ`, `Q = [[c, −s], [s, c]]`.
#[derive(Debug, Clone, Copy)]
struct Eig {
    c: f64,
    s: f64,
    lambda: [f64; 2],
}

impl Eig {
    fn of(v: Sym) -> Eig {
        let theta = 0.5 * (2.0 * v.ri).atan2(v.rr - v.ii);
        let (s, c) = theta.sin_cos();
        let l1 = v.rr * c * c + 2.0 * v.ri * c * s + v.ii * s * s;
        let l2 = v.rr * s * s - 2.0 * v.ri * c * s + v.ii * c * c;
        Eig {
            c,
            s,
            lambda: [l1, l2],
        }
    }

    /// `Q diag(d) Qᵀ`.
    fn compose(&self, d: [f64; 2]) -> Sym {
        let (c, s) = (self.c, self.s);
        Sym {
            rr: c * c * d[0] + s * s * d[1],
            ii: s * s * d[0] + c * c * d[1],
            ri: c * s * (d[0] - d[1]),
        }
    }

    /// Sensitivity of `V^(-1/2)` to `V`: `Q ((Qᵀ A Q) ∘ F) Qᵀ` for symmetric `A`.
    fn inv_sqrt_backward(&self, a: Sym) -> Sym {
        let (c, s) = (self.c, self.s);
        // Qᵀ A Q
        let t11 = c * c * a.rr + 2.0 * c * s * a.ri + s * s * a.ii;
        let t22 = s * s * a.rr - 2.0 * c * s * a.ri + c * c * a.ii;
        let t12 = c * s * (a.ii - a.rr) + (c * c - s * s) * a.ri;
        let [r1, r2] = self.lambda.map(f64::sqrt);
        let f11 = -0.5 / (r1 * r1 * r1);
        let f22 = -0.5 / (r2 * r2 * r2);
        let f12 = -1.0 / (r1 * r2 * (r1 + r2));
        let (b11, b22, b12) = (t11 * f11, t22 * f22, t12 * f12);
        // Q B̃ Qᵀ
        Sym {
            rr: c * c * b11 - 2.0 * c * s * b12 + s * s * b22,
            ii: s * s * b11 + 2.0 * c * s * b12 + c * c * b22,
            ri: c * s * (b11 - b22) + (c * c - s * s) * b12,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ChannelStats {
    mean: (f64, f64),
    /// Batch covariance without the ε regulariser.
    cov: Sym,
    eig: Eig,
    whiten: Sym,
}

/// Saved state for the reverse pass of a train-mode call.
#[derive(Debug, Clone)]
pub struct BnCache<R> {
    xhat: Planes<R>,
    stats: Vec<ChannelStats>,
}

fn dims<R: Real>(x: &Planes<R>, channels: usize) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() < 2 || s[1] != channels {
        return Err(Error::InvalidArgument(format!(
            "batch norm over {channels} channels cannot take shape {s:?}"
        )));
    }
    Ok((s[0], s[2..].iter().product()))
}

fn channel_indices(
    batch: usize,
    channels: usize,
    plane: usize,
    c: usize,
) -> impl Iterator<Item = usize> {
    (0..batch).flat_map(move |n| {
        let start = (n * channels + c) * plane;
        start..start + plane
    })
}

/// `y = Γ·W·(x − μ) + β` per channel, with `W` the inverse square root of
/// the regularised covariance. Train mode uses batch statistics and returns
/// a cache; eval mode uses the running statistics.
pub fn bn_forward<R: Real>(
    x: &Planes<R>,
    p: &BnParams<R>,
    mode: Mode,
) -> Result<(Planes<R>, Option<BnCache<R>>)> {
    let ch = p.channels();
    let (batch, plane) = dims(x, ch)?;
    let m = (batch * plane) as f64;
    if m == 0.0 {
        return Err(Error::Degenerate("batch norm over an empty batch".into()));
    }
    let mut y = Planes::zeros(x.shape());
    let mut xhat = match mode {
        Mode::Train => Some(Planes::zeros(x.shape())),
        Mode::Eval => None,
    };
    let mut stats = Vec::with_capacity(ch);
    for c in 0..ch {
        let (mean, cov) = match mode {
            Mode::Train => {
                let (mut sr, mut si) = (0.0, 0.0);
                for i in channel_indices(batch, ch, plane, c) {
                    sr += x.re[i].f64();
                    si += x.im[i].f64();
                }
                let mean = (sr / m, si / m);
                let (mut vrr, mut vii, mut vri) = (0.0, 0.0, 0.0);
                for i in channel_indices(batch, ch, plane, c) {
                    let (a, b) = (x.re[i].f64() - mean.0, x.im[i].f64() - mean.1);
                    vrr += a * a;
                    vii += b * b;
                    vri += a * b;
                }
                (
                    mean,
                    Sym {
                        rr: vrr / m,
                        ii: vii / m,
                        ri: vri / m,
                    },
                )
            }
            Mode::Eval => (
                (p.running_mean.re[c].f64(), p.running_mean.im[c].f64()),
                Sym {
                    rr: p.running_cov.re[2 * c].f64(),
                    ii: p.running_cov.im[2 * c].f64(),
                    ri: p.running_cov.re[2 * c + 1].f64(),
                },
            ),
        };
        let eig = Eig::of(Sym {
            rr: cov.rr + BN_EPS,
            ii: cov.ii + BN_EPS,
            ri: cov.ri,
        });
        let whiten = eig.compose(eig.lambda.map(|l| 1.0 / l.sqrt()));
        let gamma = p.gamma_of(c);
        let beta = (p.beta.re[c].f64(), p.beta.im[c].f64());
        for i in channel_indices(batch, ch, plane, c) {
            let xh = whiten.apply((x.re[i].f64() - mean.0, x.im[i].f64() - mean.1));
            let out = gamma.apply(xh);
            y.re[i] = R::of(out.0 + beta.0);
            y.im[i] = R::of(out.1 + beta.1);
            if let Some(xhat) = xhat.as_mut() {
                xhat.re[i] = R::of(xh.0);
                xhat.im[i] = R::of(xh.1);
            }
        }
        stats.push(ChannelStats {
            mean,
            cov,
            eig,
            whiten,
        });
    }
    Ok((y, xhat.map(|xhat| BnCache { xhat, stats })))
}

/// Reverse pass of a train-mode [`bn_forward`]; returns parameter gradients
/// (running-statistic slots left at zero) and the input gradient.
pub fn bn_backward<R: Real>(
    p: &BnParams<R>,
    cache: &BnCache<R>,
    upstream: &Planes<R>,
) -> Result<(BnParams<R>, Planes<R>)> {
    let ch = p.channels();
    upstream.ensure_shape(cache.xhat.shape())?;
    let (batch, plane) = dims(upstream, ch)?;
    let m = (batch * plane) as f64;
    let mut grads = BnParams::zeros(ch);
    let mut gx = Planes::zeros(upstream.shape());
    let xhat = &cache.xhat;
    for c in 0..ch {
        let st = &cache.stats[c];
        let gamma = p.gamma_of(c);
        // c = V^(1/2)·x̂
        let unwhiten = st.eig.compose(st.eig.lambda.map(f64::sqrt));
        let (mut gb, mut gg) = (
            (0.0, 0.0),
            Sym {
                rr: 0.0,
                ii: 0.0,
                ri: 0.0,
            },
        );
        let (mut hsum, mut a) = ((0.0, 0.0), [0.0; 4]);
        for i in channel_indices(batch, ch, plane, c) {
            let g = (upstream.re[i].f64(), upstream.im[i].f64());
            let xh = (xhat.re[i].f64(), xhat.im[i].f64());
            gb.0 += g.0;
            gb.1 += g.1;
            gg.rr += g.0 * xh.0;
            gg.ii += g.1 * xh.1;
            gg.ri += g.0 * xh.1 + g.1 * xh.0;
            let h = gamma.apply(g);
            let cv = unwhiten.apply(xh);
            hsum.0 += h.0;
            hsum.1 += h.1;
            a[0] += h.0 * cv.0;
            a[1] += h.0 * cv.1;
            a[2] += h.1 * cv.0;
            a[3] += h.1 * cv.1;
        }
        grads.beta.re[c] = R::of(gb.0);
        grads.beta.im[c] = R::of(gb.1);
        grads.gamma.re[2 * c] = R::of(gg.rr);
        grads.gamma.im[2 * c] = R::of(gg.ii);
        grads.gamma.re[2 * c + 1] = R::of(gg.ri);

        let dv = st.eig.inv_sqrt_backward(Sym {
            rr: a[0],
            ii: a[3],
            ri: 0.5 * (a[1] + a[2]),
        });
        let hmean = (hsum.0 / m, hsum.1 / m);
        for i in channel_indices(batch, ch, plane, c) {
            let g = (upstream.re[i].f64(), upstream.im[i].f64());
            let h = gamma.apply(g);
            let wh = st.whiten.apply((h.0 - hmean.0, h.1 - hmean.1));
            let cv = unwhiten.apply((xhat.re[i].f64(), xhat.im[i].f64()));
            let bc = dv.apply(cv);
            gx.re[i] = R::of(wh.0 + 2.0 / m * bc.0);
            gx.im[i] = R::of(wh.1 + 2.0 / m * bc.1);
        }
    }
    Ok((grads, gx))
}
