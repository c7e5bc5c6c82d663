//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Segment {
    lo: f64,
    hi: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    /// Largest component error relative to its tolerance.
    priority: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

fn kronrod<F, E>(f: &mut F, lo: f64, hi: f64, dim: usize) -> Result<(Vec<f64>, Vec<f64>), E>
where
    F: FnMut(f64, &mut [f64]) -> Result<(), E>,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for j in 0..8 {
        let nodes: &[f64] = if j == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &sign in nodes {
            f(center + sign * half * XGK[j], &mut buf)?;
            for d in 0..dim {
                k[d] += WGK[j] * buf[d];
                if j % 2 == 1 {
                    g[d] += WG[j / 2] * buf[d];
                }
            }
        }
    }
    let err = k.iter().zip(&g).map(|(a, b)| (half * (a - b)).abs()).collect();
    k.iter_mut().for_each(|v| *v *= half);
    Ok((k, err))
}

/// Integrates `f: R → R^dim` over `[lo, hi]` with an initial split into
/// `pieces` equal segments, subdividing until each component satisfies
/// `err ≤ max(abs_tol, rel_tol · |I|)`.
pub fn integrate<F, E>(
    mut f: F,
    lo: f64,
    hi: f64,
    dim: usize,
    pieces: usize,
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<QuadResult, E>
where
    F: FnMut(f64, &mut [f64]) -> Result<(), E>,
{
    let pieces = pieces.max(1);
    let width = (hi - lo) / pieces as f64;
    let mut segs = Vec::with_capacity(pieces);
    for p in 0..pieces {
        let a = lo + p as f64 * width;
        let b = if p + 1 == pieces { hi } else { a + width };
        let (value, error) = kronrod(&mut f, a, b, dim)?;
        segs.push(Segment {
            lo: a,
            hi: b,
            value,
            error,
            priority: 0.0,
        });
    }
    let mut evaluations = 15 * pieces;

    let totals = |segs: &[&Segment]| {
        let mut v = vec![0.0; dim];
        let mut e = vec![0.0; dim];
        for s in segs {
            for d in 0..dim {
                v[d] += s.value[d];
                e[d] += s.error[d];
            }
        }
        (v, e)
    };
    let tol_of = |total: &[f64]| -> Vec<f64> {
        total.iter().map(|t| (rel_tol * t.abs()).max(abs_tol)).collect()
    };

    let (mut total, _) = totals(&segs.iter().collect::<Vec<_>>());
    let mut tol = tol_of(&total);
    let prio = |s: &Segment, tol: &[f64]| {
        s.error
            .iter()
            .zip(tol)
            .map(|(e, t)| e / t)
            .fold(0.0, f64::max)
    };
    let mut heap: BinaryHeap<Segment> = segs
        .into_iter()
        .map(|mut s| {
            s.priority = prio(&s, &tol);
            s
        })
        .collect();

    let mut converged = false;
    loop {
        let all: Vec<&Segment> = heap.iter().collect();
        let (t, err) = totals(&all);
        total = t;
        tol = tol_of(&total);
        if err.iter().zip(&tol).all(|(e, t)| e <= t) {
            converged = true;
            break;
        }
        if heap.len() >= max_segments {
            break;
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.lo + worst.hi);
        for (a, b) in [(worst.lo, mid), (mid, worst.hi)] {
            let (value, error) = kronrod(&mut f, a, b, dim)?;
            let mut s = Segment {
                lo: a,
                hi: b,
                value,
                error,
                priority: 0.0,
            };
            s.priority = prio(&s, &tol);
            heap.push(s);
        }
        evaluations += 30;
        // Priorities go stale as the tolerance moves; rebuild occasionally.
        if heap.len() % 64 == 0 {
            let v: Vec<Segment> = heap.drain().collect();
            heap = v
                .into_iter()
                .map(|mut s| {
                    s.priority = prio(&s, &tol);
                    s
                })
                .collect();
        }
    }
    let all: Vec<&Segment> = heap.iter().collect();
    let (value, error) = totals(&all);
    Ok(QuadResult {
        value,
        error,
        evaluations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn weights_integrate_constants_and_polynomials() {
        assert!((WGK.iter().sum::<f64>() * 2.0 - WGK[7] - 2.0).abs() < 1e-15);
        assert!((WG.iter().sum::<f64>() * 2.0 - WG[3] - 2.0).abs() < 1e-15);
        // K15 is exact to degree 22 (odd nodes symmetric), G7 to degree 13
        let r = integrate::<_, Infallible>(
            |x, out| {
                out[0] = x.powi(12);
                out[1] = x.powi(22);
                Ok(())
            },
            -1.0,
            1.0,
            2,
            1,
            1e-30,
            0.0,
            1,
        )
        .unwrap();
        assert!((r.value[0] - 2.0 / 13.0).abs() < 1e-15);
        assert!((r.value[1] - 2.0 / 23.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let r = integrate::<_, Infallible>(
            |x, out| {
                out[0] = (-(x * 40.0).powi(2)).exp();
                out[1] = x * x * out[0];
                Ok(())
            },
            -20.0,
            20.0,
            2,
            4,
            1e-12,
            0.0,
            10_000,
        )
        .unwrap();
        assert!(r.converged);
        let exact = std::f64::consts::PI.sqrt() / 40.0;
        assert!(((r.value[0] - exact) / exact).abs() < 1e-12);
        let exact2 = exact / (2.0 * 1600.0);
        assert!(((r.value[1] - exact2) / exact2).abs() < 1e-11);
    }
}
