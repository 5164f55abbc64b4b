//! The limiting front `P = {z : H(z) = ν}` with
//! `H(z) = Σ_i |z_i|^{γ_i^{κ(z_i)}}`, the layers `O_ε = {H > ν + ε}` and
//! `Q_ε = {H < ν − ε}`, and shell statistics over simulated ensembles.
//!
//! Ensemble statistics are computed while runs are simulated: each snapshot
//! is reduced to a [`SnapshotSummary`] so that large populations never need
//! to be kept in memory.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::jump_laws::{JumpLaw, Side};
use crate::seed::StreamSeed;
use crate::sim::{max_h_statistic, occupied_in_tail, run_observed, SimConfig, SnapshotView};

/// Tolerance on `|H − ν|` for points reported on the surface.
pub const SURFACE_TOL: f64 = 1e-9;
/// Tolerance on `|H(y) − ν|` for a direction target.
pub const ON_SURFACE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontShape {
    nu: f64,
    /// Per axis `(γ⁺, γ⁻)`.
    exponents: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    InsideQEps,
    Shell,
    OutsideOEps,
}

impl FrontShape {
    pub fn new(nu: f64, exponents: Vec<(f64, f64)>) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid("nu", format!("must be positive, got {nu}")));
        }
        if exponents.is_empty() {
            return Err(invalid("exponents", "need at least one axis"));
        }
        if exponents
            .iter()
            .any(|&(p, m)| !(p > 0.0 && p < 1.0 && m > 0.0 && m < 1.0))
        {
            return Err(invalid("exponents", "every exponent must lie in (0,1)"));
        }
        Ok(Self { nu, exponents })
    }

    pub fn from_law(nu: f64, law: &JumpLaw) -> Result<Self> {
        Self::new(nu, law.axes().iter().map(|a| (a.gamma_plus, a.gamma_minus)).collect())
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dimension(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponent(&self, axis: usize, side: Side) -> f64 {
        match side {
            Side::Plus => self.exponents[axis].0,
            Side::Minus => self.exponents[axis].1,
        }
    }

    /// `H(z)`.
    pub fn shape_value(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.exponents)
            .map(|(&x, &(p, m))| {
                if x == 0.0 {
                    0.0
                } else {
                    x.abs().powf(if x > 0.0 { p } else { m })
                }
            })
            .sum()
    }

    pub fn classify_point(&self, z: &[f64], epsilon: f64) -> Result<PointClass> {
        if !(epsilon >= 0.0 && epsilon < self.nu) {
            return Err(invalid("epsilon", format!("must lie in [0, nu = {}), got {epsilon}", self.nu)));
        }
        let h = self.shape_value(z);
        Ok(if h > self.nu + epsilon {
            PointClass::OutsideOEps
        } else if h < self.nu - epsilon {
            PointClass::InsideQEps
        } else {
            PointClass::Shell
        })
    }

    /// The `r > 0` with `H(r·u) = ν` (H increases strictly along rays).
    fn radial_root(&self, u: &[f64]) -> f64 {
        let h = |r: f64| self.shape_value(&u.iter().map(|c| r * c).collect::<Vec<_>>());
        let mut hi = 1.0;
        while h(hi) < self.nu {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut mid = hi;
        for _ in 0..400 {
            mid = 0.5 * (lo + hi);
            let v = h(mid) - self.nu;
            if v.abs() <= 0.1 * SURFACE_TOL {
                break;
            }
            if v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid
    }

    /// Points of `P`: per orthant (bit `i` set means `z_i ≤ 0`), a grid of
    /// `resolution + 1` hyperspherical angles per free angle over the
    /// orthant's quarter-sphere, each scaled onto the surface.
    pub fn sample_shape_surface(&self, resolution: usize) -> Result<Vec<SurfacePoint>> {
        if resolution < 8 {
            return Err(invalid("resolution", format!("must be at least 8, got {resolution}")));
        }
        let d = self.dimension();
        // Exact endpoints: a stray cos(π/2) ≈ 6e-17 would shift H by its
        // γ-th power.
        let angles: Vec<(f64, f64)> = (0..=resolution)
            .map(|j| match j {
                0 => (1.0, 0.0),
                j if j == resolution => (0.0, 1.0),
                j => {
                    let a = j as f64 / resolution as f64 * std::f64::consts::FRAC_PI_2;
                    (a.cos(), a.sin())
                }
            })
            .collect();
        let mut dirs: Vec<Vec<f64>> = vec![vec![1.0]];
        for _ in 1..d {
            let mut next = Vec::with_capacity(dirs.len() * angles.len());
            for dir in &dirs {
                for &(cos, sin) in &angles {
                    let mut v: Vec<f64> = dir.iter().map(|c| c * cos).collect();
                    v.push(sin);
                    next.push(v);
                }
            }
            dirs = next;
        }
        let mut out = Vec::with_capacity(dirs.len() << d);
        for orthant in 0..(1usize << d) {
            for dir in &dirs {
                let u: Vec<f64> = dir
                    .iter()
                    .enumerate()
                    .map(|(i, c)| if orthant >> i & 1 == 1 { -c } else { *c })
                    .collect();
                let r = self.radial_root(&u);
                out.push(SurfacePoint {
                    orthant,
                    z: u.iter().map(|c| r * c).collect(),
                });
            }
        }
        Ok(out)
    }

    /// The two positive axis points of `P` on axes 1 and 2, and `H` at their
    /// midpoint. A midpoint value above `ν` shows that `{H ≤ ν}` is not
    /// convex.
    pub fn nonconvexity_witness(&self) -> Result<NonconvexityWitness> {
        if self.dimension() < 2 {
            return Err(Error::NotApplicable("non-convexity needs at least two axes".into()));
        }
        let d = self.dimension();
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        a[0] = self.nu.powf(1.0 / self.exponents[0].0);
        b[1] = self.nu.powf(1.0 / self.exponents[1].0);
        let midpoint: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let midpoint_value = self.shape_value(&midpoint);
        Ok(NonconvexityWitness {
            a,
            b,
            midpoint,
            midpoint_value,
            nu: self.nu,
        })
    }

    fn check_epsilon(&self, epsilon: f64) -> Result<()> {
        if !(epsilon > 0.0 && epsilon < self.nu) {
            return Err(invalid("epsilon", format!("must lie in (0, nu = {}), got {epsilon}", self.nu)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub orthant: usize,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexityWitness {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub midpoint: Vec<f64>,
    pub midpoint_value: f64,
    pub nu: f64,
}

impl NonconvexityWitness {
    pub fn certifies_nonconvexity(&self) -> bool {
        self.midpoint_value > self.nu
    }
}

pub fn write_surface_csv<W: Write>(points: &[SurfacePoint], dimension: usize, mut w: W) -> io::Result<()> {
    let mut header = vec!["orthant".to_string()];
    header.extend((1..=dimension).map(|i| format!("x_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for p in points {
        let coords: Vec<String> = p.z.iter().map(|c| format!("{c}")).collect();
        writeln!(w, "{},{}", p.orthant, coords.join(","))?;
    }
    Ok(())
}

/// A point `y ∈ P` and a radius around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionTarget {
    pub y: Vec<f64>,
    pub radius: f64,
}

/// Reduces simulation snapshots to front statistics.
#[derive(Clone, Debug)]
pub struct FrontProbe {
    front: FrontShape,
    law: JumpLaw,
    targets: Vec<DirectionTarget>,
}

impl FrontProbe {
    pub fn new(front: FrontShape, law: JumpLaw) -> Result<Self> {
        if front.dimension() != law.dimension() {
            return Err(invalid("front", "dimension does not match the jump law"));
        }
        Ok(Self {
            front,
            law,
            targets: Vec::new(),
        })
    }

    /// Add a direction target; `y` must lie on `P`.
    pub fn with_target(mut self, y: Vec<f64>, radius: f64) -> Result<Self> {
        if y.len() != self.front.dimension() {
            return Err(invalid("y", "dimension does not match the front"));
        }
        let value = self.front.shape_value(&y);
        if (value - self.front.nu).abs() > ON_SURFACE_TOL {
            return Err(Error::NotOnSurface { value, nu: self.front.nu });
        }
        if !(radius >= 0.0) {
            return Err(invalid("radius", format!("must be >= 0, got {radius}")));
        }
        self.targets.push(DirectionTarget { y, radius });
        Ok(self)
    }

    pub fn front(&self) -> &FrontShape {
        &self.front
    }

    pub fn targets(&self) -> &[DirectionTarget] {
        &self.targets
    }

    pub fn summarize(&self, view: &SnapshotView<'_>) -> SnapshotSummary {
        let t = view.time;
        let max_h = if t > 0.0 {
            max_h_statistic(view.positions(), &self.law, &self.front, t)
        } else {
            0.0
        };
        let near = self
            .targets
            .iter()
            .map(|target| {
                t > 0.0
                    && view
                        .positions()
                        .any(|p| normalized_distance(p, &self.law, t, &target.y) < target.radius)
            })
            .collect();
        SnapshotSummary {
            time: t,
            total: view.total,
            local_total: view.local_counts.iter().sum(),
            max_h,
            near,
            truncated: view.truncated,
        }
    }
}

fn normalized_distance(p: &[i64], law: &JumpLaw, t: f64, y: &[f64]) -> f64 {
    p.iter()
        .zip(law.axes())
        .zip(y)
        .map(|((&x, a), &yi)| {
            let n = a.inverse_norm(Side::of(x as f64), t);
            let z = if n > 0.0 { x as f64 / n } else { 0.0 };
            (z - yi).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub time: f64,
    pub total: usize,
    pub local_total: usize,
    /// `max_v H(X^v(t)/R^{-1,κ}(t))`; 0 for an empty population or `t = 0`.
    pub max_h: f64,
    /// Per direction target: some normalized particle lies strictly within
    /// the radius.
    pub near: Vec<bool>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontRecord {
    pub seed: u64,
    pub truncated: bool,
    pub extinct: bool,
    pub snapshots: Vec<SnapshotSummary>,
}

impl FrontRecord {
    /// Catalyst-visit proxy (see [`crate::sim::visits_catalysts_indicator`]).
    pub fn i_proxy(&self) -> bool {
        let local: Vec<usize> = self.snapshots.iter().map(|s| s.local_total).collect();
        occupied_in_tail(&local)
    }
}

/// Simulate one run and reduce each snapshot with `probe`.
pub fn run_front(cfg: &SimConfig, seed: StreamSeed, probe: &FrontProbe) -> Result<FrontRecord> {
    let mut snapshots = Vec::with_capacity(cfg.snapshot_times.len());
    let (stats, _) = run_observed(cfg, seed, |v| snapshots.push(probe.summarize(v)))?;
    Ok(FrontRecord {
        seed: stats.seed,
        truncated: stats.truncated,
        extinct: stats.extinct,
        snapshots,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellReport {
    pub epsilon: f64,
    pub nu: f64,
    pub times: Vec<f64>,
    /// Fraction of runs with some normalized particle in `O_ε`.
    pub frac_outside_o: Vec<f64>,
    /// Among catalyst-visiting runs, fraction with some normalized particle
    /// outside `Q_ε`.
    pub frac_beyond_q: Vec<f64>,
    /// Untruncated runs used.
    pub n_runs: usize,
    /// Of those, runs satisfying the catalyst-visit proxy.
    pub n_proxy_runs: usize,
    /// Runs excluded because they hit the population cap.
    pub n_truncated: usize,
}

impl ShellReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,epsilon,frac_outside_o,frac_beyond_q,n_runs,n_proxy_runs,n_truncated")?;
        for (i, t) in self.times.iter().enumerate() {
            writeln!(
                w,
                "{t},{},{},{},{},{},{}",
                self.epsilon, self.frac_outside_o[i], self.frac_beyond_q[i], self.n_runs, self.n_proxy_runs, self.n_truncated
            )?;
        }
        Ok(())
    }
}

fn usable(records: &[FrontRecord]) -> Result<(Vec<&FrontRecord>, Vec<f64>)> {
    let first = records.first().ok_or(Error::EmptyEnsemble)?;
    let times: Vec<f64> = first.snapshots.iter().map(|s| s.time).collect();
    if records
        .iter()
        .any(|r| r.snapshots.len() != times.len() || r.snapshots.iter().zip(&times).any(|(s, t)| s.time != *t))
    {
        return Err(invalid("ensemble", "runs disagree on snapshot times"));
    }
    let kept: Vec<&FrontRecord> = records.iter().filter(|r| !r.truncated).collect();
    if kept.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok((kept, times))
}

/// Per snapshot time, the share of untruncated runs with a particle in
/// `O_ε`, and the share of catalyst-visiting runs with a particle outside
/// `Q_ε`.
pub fn shell_containment(records: &[FrontRecord], front: &FrontShape, epsilon: f64) -> Result<ShellReport> {
    front.check_epsilon(epsilon)?;
    let (kept, times) = usable(records)?;
    let nu = front.nu();
    let proxy: Vec<&&FrontRecord> = kept.iter().filter(|r| r.i_proxy()).collect();
    let frac = |runs: &[&&FrontRecord], k: usize, pred: &dyn Fn(f64) -> bool| {
        if runs.is_empty() {
            0.0
        } else {
            runs.iter().filter(|r| pred(r.snapshots[k].max_h)).count() as f64 / runs.len() as f64
        }
    };
    let all: Vec<&&FrontRecord> = kept.iter().collect();
    let frac_outside_o = (0..times.len()).map(|k| frac(&all, k, &|h| h > nu + epsilon)).collect();
    let frac_beyond_q = (0..times.len()).map(|k| frac(&proxy, k, &|h| h >= nu - epsilon)).collect();
    Ok(ShellReport {
        epsilon,
        nu,
        times,
        frac_outside_o,
        frac_beyond_q,
        n_runs: kept.len(),
        n_proxy_runs: proxy.len(),
        n_truncated: records.len() - kept.len(),
    })
}

/// Per snapshot time, the share of untruncated catalyst-visiting runs with a
/// normalized particle within the radius of target `target`.
pub fn directional_limit_check(records: &[FrontRecord], target: usize) -> Result<Vec<f64>> {
    let (kept, times) = usable(records)?;
    if kept.iter().any(|r| r.snapshots.iter().any(|s| s.near.len() <= target)) {
        return Err(invalid("target", format!("no direction target with index {target}")));
    }
    let proxy: Vec<&&FrontRecord> = kept.iter().filter(|r| r.i_proxy()).collect();
    Ok((0..times.len())
        .map(|k| {
            if proxy.is_empty() {
                0.0
            } else {
                proxy.iter().filter(|r| r.snapshots[k].near[target]).count() as f64 / proxy.len() as f64
            }
        })
        .collect())
}

/// Sign of the least-squares slope of `values` against `times` over the last
/// `window` points; a flat fit counts for either direction.
pub fn trend_holds(times: &[f64], values: &[f64], window: usize, increasing: bool) -> bool {
    let k = window.min(values.len()).min(times.len());
    if k < 2 {
        return true;
    }
    let (t, v) = (&times[times.len() - k..], &values[values.len() - k..]);
    let tm = t.iter().sum::<f64>() / k as f64;
    let vm = v.iter().sum::<f64>() / k as f64;
    let slope: f64 = t.iter().zip(v).map(|(a, b)| (a - tm) * (b - vm)).sum();
    if increasing {
        slope >= 0.0
    } else {
        slope <= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half(nu: f64, d: usize) -> FrontShape {
        FrontShape::new(nu, vec![(0.5, 0.5); d]).unwrap()
    }

    #[test]
    fn shape_value_examples() {
        assert_eq!(half(1.0, 1).shape_value(&[4.0]), 2.0);
        assert_eq!(half(2.0, 2).shape_value(&[4.0, 0.0]), 2.0);
        assert_eq!(half(2.0, 2).shape_value(&[0.0, 0.0]), 0.0);
        let f = half(2.0, 2);
        assert_eq!(f.shape_value(&[3.0, -1.5]), f.shape_value(&[-3.0, 1.5]));
        let asym = FrontShape::new(1.0, vec![(0.5, 0.25)]).unwrap();
        assert_eq!(asym.shape_value(&[-16.0]), 2.0);
    }

    #[test]
    fn classify_examples() {
        let f = half(2.0, 2);
        assert_eq!(f.classify_point(&[0.0, 0.0], 0.5).unwrap(), PointClass::InsideQEps);
        assert_eq!(f.classify_point(&[4.0, 0.0], 0.1).unwrap(), PointClass::Shell);
        assert_eq!(f.classify_point(&[9.0, 0.0], 0.5).unwrap(), PointClass::OutsideOEps);
        assert!(f.classify_point(&[0.0, 0.0], 2.0).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FrontShape::new(0.0, vec![(0.5, 0.5)]).is_err());
        assert!(FrontShape::new(1.0, vec![(1.0, 0.5)]).is_err());
        assert!(half(1.0, 1).sample_shape_surface(7).is_err());
    }

    #[test]
    fn one_dimensional_surface_is_two_points() {
        let f = FrontShape::new(2.0, vec![(0.5, 0.25)]).unwrap();
        let s = f.sample_shape_surface(8).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].z[0] - 4.0).abs() < 1e-8);
        assert!((s[1].z[0] + 16.0).abs() < 1e-7);
    }

    #[test]
    fn surface_points_lie_on_p_and_in_the_shell() {
        let f = FrontShape::new(1.5, vec![(0.75, 0.5), (1.0 / 3.0, 0.25)]).unwrap();
        for p in f.sample_shape_surface(16).unwrap() {
            assert!((f.shape_value(&p.z) - 1.5).abs() <= SURFACE_TOL);
            assert_eq!(f.classify_point(&p.z, 1e-6).unwrap(), PointClass::Shell);
        }
        let f3 = half(1.0, 3);
        let pts = f3.sample_shape_surface(8).unwrap();
        assert_eq!(pts.len(), 8 * 81);
        assert!(pts.iter().all(|p| (f3.shape_value(&p.z) - 1.0).abs() <= SURFACE_TOL));
    }

    #[test]
    fn symmetric_surface_is_invariant_under_swap_and_flips() {
        let f = half(2.0, 2);
        let pts = f.sample_shape_surface(12).unwrap();
        let contains = |z: [f64; 2]| pts.iter().any(|p| (p.z[0] - z[0]).abs() < 1e-9 && (p.z[1] - z[1]).abs() < 1e-9);
        for p in &pts {
            assert!(contains([p.z[1], p.z[0]]));
            assert!(contains([-p.z[0], p.z[1]]));
            assert!(contains([p.z[0], -p.z[1]]));
        }
    }

    #[test]
    fn witness_examples() {
        let w = half(2.0, 2).nonconvexity_witness().unwrap();
        assert_eq!((w.a.clone(), w.b.clone()), (vec![4.0, 0.0], vec![0.0, 4.0]));
        assert!((w.midpoint_value - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let w = FrontShape::new(1.0, vec![(0.75, 0.75); 2]).unwrap().nonconvexity_witness().unwrap();
        assert!((w.midpoint_value - 2f64.powf(0.25)).abs() < 1e-12);
        assert!(w.certifies_nonconvexity());
        let w = FrontShape::new(1.0, vec![(0.999999, 0.5); 2]).unwrap().nonconvexity_witness().unwrap();
        assert!((w.midpoint_value - 1.0).abs() < 1e-5);
        assert!(matches!(half(1.0, 1).nonconvexity_witness(), Err(Error::NotApplicable(_))));
    }

    fn record(max_h: &[f64], local: &[usize], truncated: bool) -> FrontRecord {
        FrontRecord {
            seed: 0,
            truncated,
            extinct: false,
            snapshots: max_h
                .iter()
                .zip(local)
                .enumerate()
                .map(|(i, (&h, &l))| SnapshotSummary {
                    time: i as f64,
                    total: 1,
                    local_total: l,
                    max_h: h,
                    near: vec![h > 1.0],
                    truncated,
                })
                .collect(),
        }
    }

    #[test]
    fn shell_fractions() {
        let f = half(2.0, 1);
        let recs = vec![
            record(&[0.0, 1.5, 2.0], &[1, 1, 1], false),
            record(&[0.0, 3.0, 2.9], &[1, 0, 0], false),
            record(&[0.0, 9.0, 9.0], &[1, 1, 1], true),
        ];
        let r = shell_containment(&recs, &f, 0.6).unwrap();
        assert_eq!(r.n_runs, 2);
        assert_eq!(r.n_proxy_runs, 1);
        assert_eq!(r.n_truncated, 1);
        assert_eq!(r.frac_outside_o, vec![0.0, 0.5, 0.5]);
        assert_eq!(r.frac_beyond_q, vec![0.0, 1.0, 1.0]);
        let wide = shell_containment(&recs, &f, 1.9).unwrap();
        assert!(wide.frac_outside_o.iter().zip(&r.frac_outside_o).all(|(a, b)| a <= b));
        assert!(shell_containment(&[], &f, 0.5).is_err());
        assert!(shell_containment(&recs, &f, 2.0).is_err());
        assert_eq!(directional_limit_check(&recs, 0).unwrap(), vec![0.0, 1.0, 1.0]);
        assert!(directional_limit_check(&recs, 1).is_err());
    }

    #[test]
    fn direction_targets_must_lie_on_p() {
        let f = half(2.0, 2);
        let law = JumpLaw::new(vec![crate::AxisTailLaw::symmetric(0.5, 1.0).unwrap(); 2]).unwrap();
        let probe = FrontProbe::new(f, law).unwrap();
        assert!(probe.clone().with_target(vec![4.0, 0.0], 0.5).is_ok());
        assert!(matches!(probe.with_target(vec![3.0, 0.0], 0.5), Err(Error::NotOnSurface { .. })));
    }

    #[test]
    fn trend_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert!(trend_holds(&t, &[0.9, 0.2, 0.1, 0.1], 3, false));
        assert!(trend_holds(&t[1..], &[0.06, 0.01, 0.02], 3, false));
        assert!(!trend_holds(&t[1..], &[0.2, 0.3, 0.1], 3, true));
        assert!(trend_holds(&t[1..], &[0.5, 0.7, 0.95], 3, true));
    }

    proptest! {
        #[test]
        fn h_scales_per_orthant(x in -50.0f64..50.0, y in -50.0f64..50.0, c in 0.01f64..20.0) {
            let f = FrontShape::new(1.0, vec![(0.75, 0.5), (1.0 / 3.0, 0.25)]).unwrap();
            let g = |v: f64, p: f64, m: f64| if v == 0.0 { 0.0 } else { let e = if v > 0.0 { p } else { m }; c.powf(e) * v.abs().powf(e) };
            let expect = g(x, 0.75, 0.5) + g(y, 1.0 / 3.0, 0.25);
            let got = f.shape_value(&[c * x, c * y]);
            prop_assert!((got - expect).abs() <= 1e-9 * expect.max(1.0));
        }
    }
}
