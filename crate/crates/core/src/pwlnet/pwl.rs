//! Segment-sampling checks for continuity and piecewise linearity.
//!
//! A map is sampled along `x(t) = a + t (b - a)`. Continuity is checked by
//! comparing the largest jump between neighbouring samples at two resolutions.
//! Linearity is checked on every triple of consecutive samples that share an
//! activation pattern: such triples lie in one linear region, so their second
//! difference must vanish.

use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    /// Largest neighbour jump with `samples` points.
    pub max_jump: f64,
    /// Largest neighbour jump with `2 * samples - 1` points.
    pub max_jump_refined: f64,
    /// Largest |second difference| over same-region triples.
    pub max_second_diff: f64,
    /// Number of same-region triples examined.
    pub same_region_triples: usize,
}

impl SegmentReport {
    /// Jumps shrink under refinement and same-region second differences are within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        let shrinks = self.max_jump_refined <= 0.75 * self.max_jump + 1e-12;
        shrinks && self.max_second_diff <= tol
    }
}

/// Samples `f` (returning output and activation pattern) along the segment `a -> b`.
pub fn check_segment<F>(mut f: F, a: &[f64], b: &[f64], samples: usize) -> Result<SegmentReport>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, Vec<bool>)>,
{
    assert!(samples >= 3, "need at least three samples");
    assert_eq!(a.len(), b.len());
    let mut eval = |n: usize| -> Result<Vec<(Vec<f64>, Vec<bool>)>> {
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let x: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect();
                f(&x)
            })
            .collect()
    };
    let coarse = eval(samples)?;
    let fine = eval(2 * samples - 1)?;

    let max_jump = |pts: &[(Vec<f64>, Vec<bool>)]| {
        pts.windows(2)
            .flat_map(|w| w[0].0.iter().zip(&w[1].0).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    };

    let mut max_second_diff: f64 = 0.0;
    let mut triples = 0;
    for w in coarse.windows(3) {
        if w[0].1 == w[1].1 && w[1].1 == w[2].1 {
            triples += 1;
            for k in 0..w[0].0.len() {
                let d2 = w[0].0[k] - 2.0 * w[1].0[k] + w[2].0[k];
                max_second_diff = max_second_diff.max(d2.abs());
            }
        }
    }

    Ok(SegmentReport {
        max_jump: max_jump(&coarse),
        max_jump_refined: max_jump(&fine),
        max_second_diff,
        same_region_triples: triples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_curvature() {
        let square = |x: &[f64]| Ok((vec![x[0] * x[0]], vec![]));
        let r = check_segment(square, &[0.0], &[1.0], 101).unwrap();
        assert!(r.max_second_diff > 1e-6);
        assert!(!r.passes(1e-9));
    }

    #[test]
    fn detects_discontinuity() {
        let step = |x: &[f64]| {
            let on = x[0] > 0.5;
            Ok((vec![if on { 1.0 } else { 0.0 }], vec![on]))
        };
        let r = check_segment(step, &[0.0], &[1.0], 101).unwrap();
        assert!(r.max_jump_refined > 0.75 * r.max_jump);
        assert!(!r.passes(1e-9));
    }

    #[test]
    fn accepts_hinge() {
        let hinge = |x: &[f64]| Ok((vec![(x[0] - 0.3).max(0.0)], vec![x[0] > 0.3]));
        let r = check_segment(hinge, &[-1.0], &[1.0], 1001).unwrap();
        assert!(r.passes(1e-9), "{r:?}");
    }
}
