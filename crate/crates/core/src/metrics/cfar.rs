use crate::dsp::PowerMap;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarConfig {
    /// Guard cells on each side of the cell under test, per axis.
    pub guard: usize,
    /// Training cells beyond the guard band, per axis.
    pub training: usize,
    pub pfa: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        CfarConfig {
            guard: 2,
            training: 8,
            pfa: 1e-3,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training == 0 {
            return Err(Error::InvalidConfig(
                "CFAR needs at least one training cell".into(),
            ));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "P_fa must lie in (0, 1), got {}",
                self.pfa
            )));
        }
        Ok(())
    }

    /// Side length of the full square window.
    pub fn window(&self) -> usize {
        2 * (self.guard + self.training) + 1
    }

    /// Number of averaged cells in the 2-D window.
    pub fn training_cells(&self) -> usize {
        let outer = self.window();
        let inner = 2 * self.guard + 1;
        outer * outer - inner * inner
    }
}

/// CA-CFAR scaling for `n` exponentially distributed training cells.
pub fn cfar_alpha(n: usize, pfa: f64) -> f64 {
    let n = n as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl BinaryMap {
    pub fn empty(rows: usize, cols: usize) -> Self {
        BinaryMap {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Square-window sums with circular wrap, via an integral image of the
/// periodically extended map.
struct WrappedIntegral {
    stride: usize,
    sums: Vec<f64>,
    half: usize,
}

impl WrappedIntegral {
    fn new(map: &PowerMap, half: usize) -> Self {
        let (rows, cols) = (map.rows, map.cols);
        let (er, ec) = (rows + 2 * half, cols + 2 * half);
        let stride = ec + 1;
        let mut sums = vec![0.0; (er + 1) * stride];
        for i in 0..er {
            let r = (i + rows - half % rows) % rows;
            let mut row_acc = 0.0;
            for j in 0..ec {
                let c = (j + cols - half % cols) % cols;
                row_acc += map.get(r, c);
                sums[(i + 1) * stride + j + 1] = sums[i * stride + j + 1] + row_acc;
            }
        }
        WrappedIntegral { stride, sums, half }
    }

    /// Sum over the `(2h+1)²` square centred on `(r, c)`.
    fn square(&self, r: usize, c: usize, h: usize) -> f64 {
        // (r, c) sits at (r + half, c + half) in the extended map
        let (r0, c0) = (r + self.half - h, c + self.half - h);
        let (r1, c1) = (r + self.half + h + 1, c + self.half + h + 1);
        let s = |i: usize, j: usize| self.sums[i * self.stride + j];
        s(r1, c1) - s(r0, c1) - s(r1, c0) + s(r0, c0)
    }
}

/// Cell-averaging CFAR over a 2-D power map with circular edges.
pub fn cacfar(power: &PowerMap, cfg: &CfarConfig) -> Result<BinaryMap> {
    cfg.validate()?;
    let win = cfg.window();
    if win > power.rows || win > power.cols {
        return Err(Error::InvalidArgument(format!(
            "CFAR window {win}×{win} exceeds map {}×{}",
            power.rows, power.cols
        )));
    }
    let outer = cfg.guard + cfg.training;
    let n = cfg.training_cells();
    let alpha = cfar_alpha(n, cfg.pfa);
    let integral = WrappedIntegral::new(power, outer);
    let mut out = BinaryMap::empty(power.rows, power.cols);
    for r in 0..power.rows {
        for c in 0..power.cols {
            let train = integral.square(r, c, outer) - integral.square(r, c, cfg.guard);
            let estimate = train / n as f64;
            if power.get(r, c) > alpha * estimate {
                out.set(r, c, true);
            }
        }
    }
    Ok(out)
}
