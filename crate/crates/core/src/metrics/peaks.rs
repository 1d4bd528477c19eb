use super::BinaryMap;
use crate::dsp::PowerMap;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Object peak location `(range bin, Doppler bin)`. Serializes as `[r, d]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Peak(pub usize, pub usize);

impl Peak {
    pub fn range_bin(&self) -> usize {
        self.0
    }

    pub fn doppler_bin(&self) -> usize {
        self.1
    }

    pub fn chebyshev(&self, other: &Peak) -> usize {
        self.0.abs_diff(other.0).max(self.1.abs_diff(other.1))
    }
}

/// One peak per 8-connected cluster of detections: the cluster's
/// maximum-power cell, ties going to the smallest `(r, d)`.
pub fn extract_peaks(detections: &BinaryMap, power: &PowerMap) -> Result<Vec<Peak>> {
    if (detections.rows, detections.cols) != (power.rows, power.cols) {
        return Err(Error::shape(
            &[power.rows, power.cols],
            &[detections.rows, detections.cols],
        ));
    }
    let (rows, cols) = (detections.rows, detections.cols);
    let mut visited = vec![false; rows * cols];
    let mut peaks = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if !detections.data[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut best = start;
        while let Some(cell) = stack.pop() {
            let (r, c) = (cell / cols, cell % cols);
            let (v, bv) = (power.data[cell], power.data[best]);
            if v > bv || (v == bv && cell < best) {
                best = cell;
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let n = nr as usize * cols + nc as usize;
                    if detections.data[n] && !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        peaks.push(Peak(best / cols, best % cols));
    }
    peaks.sort();
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(rows: usize, cols: usize, cells: &[(usize, usize, f64)]) -> (BinaryMap, PowerMap) {
        let mut b = BinaryMap::empty(rows, cols);
        let mut p = PowerMap::zeros(rows, cols);
        for &(r, c, v) in cells {
            b.set(r, c, true);
            p.set(r, c, v);
        }
        (b, p)
    }

    #[test]
    fn single_cell() {
        let (b, p) = maps(5, 5, &[(2, 3, 1.0)]);
        assert_eq!(extract_peaks(&b, &p).unwrap(), vec![Peak(2, 3)]);
    }

    #[test]
    fn blob_keeps_its_interior_maximum() {
        let mut cells = Vec::new();
        for r in 1..4 {
            for c in 1..4 {
                cells.push((r, c, 1.0));
            }
        }
        cells[4].2 = 5.0;
        let (b, p) = maps(6, 6, &cells);
        assert_eq!(extract_peaks(&b, &p).unwrap(), vec![Peak(2, 2)]);
    }

    #[test]
    fn separated_blobs_and_diagonal_links() {
        let (b, p) = maps(8, 8, &[(0, 0, 1.0), (1, 1, 2.0), (5, 5, 1.0), (5, 6, 1.0)]);
        // (0,0)-(1,1) touch diagonally; the flat pair ties to the smaller index
        assert_eq!(extract_peaks(&b, &p).unwrap(), vec![Peak(1, 1), Peak(5, 5)]);
        assert!(extract_peaks(&BinaryMap::empty(3, 3), &PowerMap::zeros(3, 4)).is_err());
    }
}
