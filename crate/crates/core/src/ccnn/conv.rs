use super::{PadMode, Planes, Real};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Complex weights `[C_out, C_in, K_R, K_D, K_θ]` and biases `[C_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<R> {
    pub weight: Planes<R>,
    pub bias: Planes<R>,
}

/// Gradients share the parameter layout.
pub type ConvGrads<R> = ConvParams<R>;

impl<R: Real> ConvParams<R> {
    pub fn zeros(c_out: usize, c_in: usize, kernel: [usize; 3]) -> Self {
        ConvParams {
            weight: Planes::zeros(&[c_out, c_in, kernel[0], kernel[1], kernel[2]]),
            bias: Planes::zeros(&[c_out]),
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }

    fn taps(&self) -> usize {
        self.kernel().iter().product()
    }
}

const BLOCK: usize = 256;
const WGRAD_BLOCK: usize = 2048;

/// Index bookkeeping for one spatial size. Output position `(r, d, a)` is
/// addressed as `q = r·D'·A' + d·A' + a` in the padded buffer's strides, so
/// tap `k` reads the padded input at `q + offsets[k]` for every position.
struct Geometry {
    dims: [usize; 3],
    plane: usize,
    padded: usize,
    q_len: usize,
    offsets: Vec<usize>,
    max_off: usize,
    /// `q → output index`, or `u32::MAX` for positions that fall in padding.
    out_map: Vec<u32>,
    /// Per axis, padded coordinate → source coordinate.
    src: [Vec<Option<usize>>; 3],
}

impl Geometry {
    fn new(dims: [usize; 3], kernel: [usize; 3], modes: [PadMode; 3]) -> Self {
        let halo = kernel.map(|k| k / 2);
        let pd: [usize; 3] = std::array::from_fn(|i| dims[i] + 2 * halo[i]);
        let src = std::array::from_fn(|i| {
            (0..pd[i])
                .map(|p| {
                    let s = p as isize - halo[i] as isize;
                    match modes[i] {
                        PadMode::Zero => (0..dims[i] as isize).contains(&s).then_some(s as usize),
                        PadMode::Circular => Some(s.rem_euclid(dims[i] as isize) as usize),
                    }
                })
                .collect()
        });
        let (sr, sd) = (pd[1] * pd[2], pd[2]);
        let mut offsets = Vec::with_capacity(kernel.iter().product());
        for kr in 0..kernel[0] {
            for kd in 0..kernel[1] {
                for ka in 0..kernel[2] {
                    offsets.push(kr * sr + kd * sd + ka);
                }
            }
        }
        let q_len = (dims[0] - 1) * sr + (dims[1] - 1) * sd + dims[2];
        let mut out_map = vec![u32::MAX; q_len];
        for r in 0..dims[0] {
            for d in 0..dims[1] {
                for a in 0..dims[2] {
                    out_map[r * sr + d * sd + a] = ((r * dims[1] + d) * dims[2] + a) as u32;
                }
            }
        }
        Geometry {
            dims,
            plane: dims.iter().product(),
            padded: pd.iter().product(),
            q_len,
            max_off: *offsets.last().unwrap_or(&0),
            offsets,
            out_map,
            src,
        }
    }

    fn for_each_padded(&self, mut f: impl FnMut(usize, usize)) {
        let [sr, sd, sa] = &self.src;
        let [_, dims_d, dims_a] = self.dims;
        let mut p = 0;
        for r in sr {
            for d in sd {
                for a in sa {
                    if let (Some(r), Some(d), Some(a)) = (r, d, a) {
                        f(p, (r * dims_d + d) * dims_a + a);
                    }
                    p += 1;
                }
            }
        }
    }
}

fn pad_plane<R: Real>(g: &Geometry, src: &[R], dst: &mut [R]) {
    dst.fill(R::zero());
    g.for_each_padded(|p, s| dst[p] = src[s]);
}

fn fold_plane<R: Real>(g: &Geometry, src: &[R], dst: &mut [R]) {
    g.for_each_padded(|p, s| dst[s] += src[p]);
}

fn check_input<R: Real>(x: &Planes<R>, params: &ConvParams<R>) -> Result<[usize; 3]> {
    let s = x.shape();
    if s.len() != 5 {
        return Err(Error::InvalidArgument(format!(
            "activations must be [batch, channel, R, D, A], got {s:?}"
        )));
    }
    if s[1] != params.c_in() {
        return Err(Error::shape(&[s[0], params.c_in(), s[2], s[3], s[4]], s));
    }
    if params.kernel().iter().any(|k| k % 2 == 0) {
        return Err(Error::InvalidArgument(format!(
            "kernel {:?} has an even dimension",
            params.kernel()
        )));
    }
    if s[2..].contains(&0) {
        return Err(Error::EmptyAxis(2));
    }
    Ok([s[2], s[3], s[4]])
}

/// Stride-1, same-size complex cross-correlation plus bias.
pub fn conv_forward<R: Real>(
    x: &Planes<R>,
    params: &ConvParams<R>,
    padding: [PadMode; 3],
) -> Result<Planes<R>> {
    let dims = check_input(x, params)?;
    let (batch, ci, co) = (x.shape()[0], params.c_in(), params.c_out());
    let g = Geometry::new(dims, params.kernel(), padding);
    let taps = params.taps();
    let mut out = Planes::zeros(&[batch, co, dims[0], dims[1], dims[2]]);
    let in_item = ci * g.plane;
    let out_item = co * g.plane;
    let (w, b) = (&params.weight, &params.bias);

    out.re
        .par_chunks_mut(out_item)
        .zip(out.im.par_chunks_mut(out_item))
        .enumerate()
        .for_each(|(n, (out_re, out_im))| {
            let xr = &x.re[n * in_item..(n + 1) * in_item];
            let xi = &x.im[n * in_item..(n + 1) * in_item];
            let mut pad_re = vec![R::zero(); ci * g.padded];
            let mut pad_im = vec![R::zero(); ci * g.padded];
            for i in 0..ci {
                let (s, d) = (
                    i * g.plane..(i + 1) * g.plane,
                    i * g.padded..(i + 1) * g.padded,
                );
                pad_plane(&g, &xr[s.clone()], &mut pad_re[d.clone()]);
                pad_plane(&g, &xi[s], &mut pad_im[d]);
            }
            let mut acc_re = [R::zero(); BLOCK];
            let mut acc_im = [R::zero(); BLOCK];
            for q0 in (0..g.q_len).step_by(BLOCK) {
                let len = BLOCK.min(g.q_len - q0);
                for o in 0..co {
                    let (ar, ai) = (&mut acc_re[..len], &mut acc_im[..len]);
                    ar.fill(b.re[o]);
                    ai.fill(b.im[o]);
                    for i in 0..ci {
                        let base = i * g.padded + q0;
                        for (k, &off) in g.offsets.iter().enumerate() {
                            let widx = (o * ci + i) * taps + k;
                            let (wr, wi) = (w.re[widx], w.im[widx]);
                            let sr = &pad_re[base + off..base + off + len];
                            let si = &pad_im[base + off..base + off + len];
                            for (((a_r, a_i), &v_r), &v_i) in
                                ar.iter_mut().zip(ai.iter_mut()).zip(sr).zip(si)
                            {
                                *a_r += wr * v_r - wi * v_i;
                                *a_i += wr * v_i + wi * v_r;
                            }
                        }
                    }
                    let dst = o * g.plane;
                    for j in 0..len {
                        let t = g.out_map[q0 + j];
                        if t != u32::MAX {
                            out_re[dst + t as usize] = ar[j];
                            out_im[dst + t as usize] = ai[j];
                        }
                    }
                }
            }
        });
    Ok(out)
}

const LANES: usize = 64;

/// `Σ g · conj(v)`. Products accumulate elementwise into a lane buffer
/// (the same shape as the forward loop, so it vectorises) and the lanes are
/// then summed pairwise.
fn dot_conj<R: Real>(gr: &[R], gi: &[R], vr: &[R], vi: &[R]) -> (f64, f64) {
    let mut acc_re = [R::zero(); LANES];
    let mut acc_im = [R::zero(); LANES];
    let n = gr.len() / LANES * LANES;
    for s in (0..n).step_by(LANES) {
        let (g_r, g_i) = (&gr[s..s + LANES], &gi[s..s + LANES]);
        let (v_r, v_i) = (&vr[s..s + LANES], &vi[s..s + LANES]);
        for ((((a_r, a_i), &g_r), &g_i), (&v_r, &v_i)) in acc_re
            .iter_mut()
            .zip(acc_im.iter_mut())
            .zip(g_r)
            .zip(g_i)
            .zip(v_r.iter().zip(v_i))
        {
            *a_r += g_r * v_r + g_i * v_i;
            *a_i += g_i * v_r - g_r * v_i;
        }
    }
    let mut half = LANES / 2;
    while half > 0 {
        for j in 0..half {
            acc_re[j] = acc_re[j] + acc_re[j + half];
            acc_im[j] = acc_im[j] + acc_im[j + half];
        }
        half /= 2;
    }
    let (mut s_re, mut s_im) = (acc_re[0].f64(), acc_im[0].f64());
    for j in n..gr.len() {
        s_re += (gr[j] * vr[j] + gi[j] * vi[j]).f64();
        s_im += (gi[j] * vr[j] - gr[j] * vi[j]).f64();
    }
    (s_re, s_im)
}

struct ItemGrads<R> {
    w_re: Vec<f64>,
    w_im: Vec<f64>,
    b_re: Vec<f64>,
    b_im: Vec<f64>,
    gx: Option<(Vec<R>, Vec<R>)>,
}

/// Reverse pass of [`conv_forward`]. Gradients are `∂L/∂Re + j·∂L/∂Im` of a
/// real loss. The input gradient is only formed when `want_input` is set.
pub fn conv_backward<R: Real>(
    x: &Planes<R>,
    params: &ConvParams<R>,
    padding: [PadMode; 3],
    upstream: &Planes<R>,
    want_input: bool,
) -> Result<(ConvGrads<R>, Option<Planes<R>>)> {
    let dims = check_input(x, params)?;
    let (batch, ci, co) = (x.shape()[0], params.c_in(), params.c_out());
    upstream.ensure_shape(&[batch, co, dims[0], dims[1], dims[2]])?;
    let g = Geometry::new(dims, params.kernel(), padding);
    let taps = params.taps();
    let (in_item, out_item) = (ci * g.plane, co * g.plane);
    let m = g.max_off;
    let glen = g.padded + m;
    let w = &params.weight;

    let per_item: Vec<ItemGrads<R>> = (0..batch)
        .into_par_iter()
        .map(|n| {
            let xr = &x.re[n * in_item..(n + 1) * in_item];
            let xi = &x.im[n * in_item..(n + 1) * in_item];
            let ur = &upstream.re[n * out_item..(n + 1) * out_item];
            let ui = &upstream.im[n * out_item..(n + 1) * out_item];

            let mut pad_re = vec![R::zero(); ci * g.padded];
            let mut pad_im = vec![R::zero(); ci * g.padded];
            for i in 0..ci {
                let (s, d) = (
                    i * g.plane..(i + 1) * g.plane,
                    i * g.padded..(i + 1) * g.padded,
                );
                pad_plane(&g, &xr[s.clone()], &mut pad_re[d.clone()]);
                pad_plane(&g, &xi[s], &mut pad_im[d]);
            }
            // upstream gradient in padded strides, shifted right by max_off
            let mut gm_re = vec![R::zero(); co * glen];
            let mut gm_im = vec![R::zero(); co * glen];
            let mut b_re = vec![0.0; co];
            let mut b_im = vec![0.0; co];
            for o in 0..co {
                for (q, &t) in g.out_map.iter().enumerate() {
                    if t != u32::MAX {
                        let src = o * g.plane + t as usize;
                        gm_re[o * glen + m + q] = ur[src];
                        gm_im[o * glen + m + q] = ui[src];
                    }
                }
                b_re[o] = ur[o * g.plane..(o + 1) * g.plane]
                    .iter()
                    .map(|v| v.f64())
                    .sum();
                b_im[o] = ui[o * g.plane..(o + 1) * g.plane]
                    .iter()
                    .map(|v| v.f64())
                    .sum();
            }

            // weight gradient: Σ_q G_o[q] · conj(x_i[q + off_k])
            let mut w_re = vec![0.0; co * ci * taps];
            let mut w_im = vec![0.0; co * ci * taps];
            for q0 in (0..g.q_len).step_by(WGRAD_BLOCK) {
                let len = WGRAD_BLOCK.min(g.q_len - q0);
                for o in 0..co {
                    let gr = &gm_re[o * glen + m + q0..o * glen + m + q0 + len];
                    let gi = &gm_im[o * glen + m + q0..o * glen + m + q0 + len];
                    for i in 0..ci {
                        let base = i * g.padded + q0;
                        for (k, &off) in g.offsets.iter().enumerate() {
                            let sr = &pad_re[base + off..base + off + len];
                            let si = &pad_im[base + off..base + off + len];
                            let (s_re, s_im) = dot_conj(gr, gi, sr, si);
                            let widx = (o * ci + i) * taps + k;
                            w_re[widx] += s_re;
                            w_im[widx] += s_im;
                        }
                    }
                }
            }

            // input gradient: Σ_o Σ_k conj(w) · G_o[p − off_k], then fold padding
            let gx = want_input.then(|| {
                let mut gx_re = vec![R::zero(); in_item];
                let mut gx_im = vec![R::zero(); in_item];
                let mut gp_re = vec![R::zero(); g.padded];
                let mut gp_im = vec![R::zero(); g.padded];
                for i in 0..ci {
                    for p0 in (0..g.padded).step_by(BLOCK) {
                        let len = BLOCK.min(g.padded - p0);
                        let (ar, ai) = (&mut gp_re[p0..p0 + len], &mut gp_im[p0..p0 + len]);
                        ar.fill(R::zero());
                        ai.fill(R::zero());
                        for o in 0..co {
                            for (k, &off) in g.offsets.iter().enumerate() {
                                let widx = (o * ci + i) * taps + k;
                                let (wr, wi) = (w.re[widx], w.im[widx]);
                                let s = o * glen + m + p0 - off;
                                let (gr, gi) = (&gm_re[s..s + len], &gm_im[s..s + len]);
                                for (((a_r, a_i), &g_r), &g_i) in
                                    ar.iter_mut().zip(ai.iter_mut()).zip(gr).zip(gi)
                                {
                                    *a_r += wr * g_r + wi * g_i;
                                    *a_i += wr * g_i - wi * g_r;
                                }
                            }
                        }
                    }
                    let plane = i * g.plane..(i + 1) * g.plane;
                    fold_plane(&g, &gp_re, &mut gx_re[plane.clone()]);
                    fold_plane(&g, &gp_im, &mut gx_im[plane]);
                }
                (gx_re, gx_im)
            });
            ItemGrads {
                w_re,
                w_im,
                b_re,
                b_im,
                gx,
            }
        })
        .collect();

    // fixed-order reduction keeps results independent of the thread count
    let mut w_re = vec![0.0; co * ci * taps];
    let mut w_im = vec![0.0; co * ci * taps];
    let mut b_re = vec![0.0; co];
    let mut b_im = vec![0.0; co];
    let mut gx = want_input.then(|| Planes::zeros(x.shape()));
    for (n, item) in per_item.into_iter().enumerate() {
        w_re.iter_mut().zip(&item.w_re).for_each(|(a, b)| *a += b);
        w_im.iter_mut().zip(&item.w_im).for_each(|(a, b)| *a += b);
        b_re.iter_mut().zip(&item.b_re).for_each(|(a, b)| *a += b);
        b_im.iter_mut().zip(&item.b_im).for_each(|(a, b)| *a += b);
        if let (Some(gx), Some((r, i))) = (gx.as_mut(), item.gx) {
            gx.re[n * in_item..(n + 1) * in_item].copy_from_slice(&r);
            gx.im[n * in_item..(n + 1) * in_item].copy_from_slice(&i);
        }
    }
    let to_r = |v: Vec<f64>| v.into_iter().map(R::of).collect::<Vec<R>>();
    let grads = ConvParams {
        weight: Planes::from_parts(w.shape(), to_r(w_re), to_r(w_im))?,
        bias: Planes::from_parts(&[co], to_r(b_re), to_r(b_im))?,
    };
    Ok((grads, gx))
}
