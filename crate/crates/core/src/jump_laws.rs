//! Semi-exponential jump laws with independent coordinates.
//!
//! Each coordinate of a jump is `Y = Y⁺ − Y⁻`. With probability `l1_plus`
//! the positive part is drawn from a discrete Weibull law on `{1, 2, …}` with
//! `P(Y⁺ > y) = exp(−l2_plus · y^gamma_plus)`, with probability `l1_minus`
//! the negative part is drawn likewise, and with the remaining probability
//! (zero once the weights are normalized) the coordinate is `0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A lattice point of `Z^d`.
pub type Site = Vec<i64>;

/// Tail side `κ ∈ {+, −}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    /// `κ(x)`: `+` for `x ≥ 0`, `−` for `x < 0`.
    pub fn of(x: f64) -> Side {
        if x < 0.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// Series terms below this value stop the summation of `Σ exp(−L2 y^γ)`.
pub const SERIES_TERM_FLOOR: f64 = 1e-15;
/// Hard cap on the number of series terms.
pub const SERIES_TERM_CAP: usize = 10_000_000;
/// Tolerance on `|E Y_i|` for a law to count as calibrated.
pub const MEAN_ZERO_TOL: f64 = 1e-8;

/// `S = Σ_{y ≥ 0} exp(−l2 · y^gamma)`, the mean of the conditional
/// discrete Weibull law.
///
/// Summation stops once the current term and the integral bound on the
/// remaining tail, `term · y^(1−γ) / (l2 γ)`, are both below
/// [`SERIES_TERM_FLOOR`].
pub fn tail_sum(l2: f64, gamma: f64) -> Result<f64> {
    check_gamma("gamma", gamma)?;
    check_positive("l2", l2)?;
    let mut sum = 0.0;
    let mut comp = 0.0; // Kahan compensation
    for y in 0..SERIES_TERM_CAP {
        let yf = y as f64;
        let term = (-l2 * yf.powf(gamma)).exp();
        let t = term - comp;
        let s = sum + t;
        comp = (s - sum) - t;
        sum = s;
        let remainder = term * yf.powf(1.0 - gamma) / (l2 * gamma);
        if y > 0 && term < SERIES_TERM_FLOOR && remainder < SERIES_TERM_FLOOR {
            return Ok(sum);
        }
    }
    Err(Error::SeriesTruncation {
        terms: SERIES_TERM_CAP,
    })
}

/// Weights `(l1_plus, l1_minus)` with `l1_plus + l1_minus = 1` that make the
/// coordinate mean vanish: `l1_plus · S⁺ = l1_minus · S⁻`.
pub fn solve_mean_zero_weights(
    gamma_plus: f64,
    gamma_minus: f64,
    l2_plus: f64,
    l2_minus: f64,
) -> Result<(f64, f64)> {
    let s_plus = tail_sum(l2_plus, gamma_plus)?;
    let s_minus = tail_sum(l2_minus, gamma_minus)?;
    let l1_plus = s_minus / (s_plus + s_minus);
    Ok((l1_plus, 1.0 - l1_plus))
}

fn check_gamma(name: &'static str, g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("exponent must lie in (0,1), got {g}")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive, got {v}")))
    }
}

/// Tail parameters of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisTailLaw {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub l1_plus: f64,
    pub l1_minus: f64,
    pub l2_plus: f64,
    pub l2_minus: f64,
}

impl AxisTailLaw {
    /// Validates a law with explicit weights. Weights may sum to less than
    /// one, in which case the remainder is an atom at zero.
    pub fn new(
        gamma_plus: f64,
        gamma_minus: f64,
        l1_plus: f64,
        l1_minus: f64,
        l2_plus: f64,
        l2_minus: f64,
    ) -> Result<Self> {
        check_gamma("gamma_plus", gamma_plus)?;
        check_gamma("gamma_minus", gamma_minus)?;
        check_positive("l2_plus", l2_plus)?;
        check_positive("l2_minus", l2_minus)?;
        for (name, w) in [("l1_plus", l1_plus), ("l1_minus", l1_minus)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid(name, format!("weight must lie in [0,1], got {w}")));
            }
        }
        if l1_plus + l1_minus > 1.0 + 1e-12 {
            return Err(invalid(
                "l1_plus + l1_minus",
                format!("weights sum to {} > 1", l1_plus + l1_minus),
            ));
        }
        Ok(Self {
            gamma_plus,
            gamma_minus,
            l1_plus,
            l1_minus,
            l2_plus,
            l2_minus,
        })
    }

    /// Law whose weights are chosen by [`solve_mean_zero_weights`].
    pub fn calibrated(gamma_plus: f64, gamma_minus: f64, l2_plus: f64, l2_minus: f64) -> Result<Self> {
        check_gamma("gamma_plus", gamma_plus)?;
        check_gamma("gamma_minus", gamma_minus)?;
        let (p, m) = solve_mean_zero_weights(gamma_plus, gamma_minus, l2_plus, l2_minus)?;
        Self::new(gamma_plus, gamma_minus, p, m, l2_plus, l2_minus)
    }

    /// Symmetric law with the same exponent and scale on both sides.
    pub fn symmetric(gamma: f64, l2: f64) -> Result<Self> {
        Self::calibrated(gamma, gamma, l2, l2)
    }

    pub fn gamma(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.gamma_plus,
            Side::Minus => self.gamma_minus,
        }
    }

    pub fn l1(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.l1_plus,
            Side::Minus => self.l1_minus,
        }
    }

    pub fn l2(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.l2_plus,
            Side::Minus => self.l2_minus,
        }
    }

    /// `P(Y^κ > y) = l1 · exp(−l2 · y^γ)`.
    pub fn tail_prob(&self, side: Side, y: u64) -> f64 {
        self.l1(side) * (-self.l2(side) * (y as f64).powf(self.gamma(side))).exp()
    }

    /// `ln P(Y^κ > y)`, finite where `tail_prob` underflows.
    pub fn log_tail_prob(&self, side: Side, y: u64) -> f64 {
        self.l1(side).ln() - self.l2(side) * (y as f64).powf(self.gamma(side))
    }

    pub fn tail_sum(&self, side: Side) -> Result<f64> {
        tail_sum(self.l2(side), self.gamma(side))
    }

    /// `E Y = l1⁺ S⁺ − l1⁻ S⁻`.
    pub fn mean(&self) -> Result<f64> {
        Ok(self.l1_plus * self.tail_sum(Side::Plus)? - self.l1_minus * self.tail_sum(Side::Minus)?)
    }

    pub fn prob_zero(&self) -> f64 {
        (1.0 - self.l1_plus - self.l1_minus).max(0.0)
    }

    /// Exact c.d.f. `P(Y ≤ y)` of the signed coordinate.
    pub fn cdf(&self, y: i64) -> f64 {
        if y >= 0 {
            1.0 - self.tail_prob(Side::Plus, y as u64)
        } else {
            self.tail_prob(Side::Minus, (-y - 1) as u64)
        }
    }

    /// Sample the signed coordinate `Y = Y⁺ − Y⁻`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        if u < self.l1_plus {
            sample_positive_weibull(self.l2_plus, self.gamma_plus, rng)
        } else if u < self.l1_plus + self.l1_minus {
            -sample_positive_weibull(self.l2_minus, self.gamma_minus, rng)
        } else {
            0
        }
    }

    /// `R^{-1,κ}(s) = (s / l2^κ)^{1/γ^κ}`.
    pub fn inverse_norm(&self, side: Side, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        (s / self.l2(side)).powf(1.0 / self.gamma(side))
    }
}

/// Inverse-transform draw from `P(Y > y) = exp(−l2 y^γ)`, `y ∈ {0, 1, …}`,
/// which puts all mass on `{1, 2, …}`.
fn sample_positive_weibull<R: Rng + ?Sized>(l2: f64, gamma: f64, rng: &mut R) -> i64 {
    // u ∈ (0, 1]; Y > y  ⇔  u < exp(−l2 y^γ)  ⇔  (−ln u / l2)^{1/γ} > y.
    let u = 1.0 - rng.random::<f64>();
    let v = (-u.ln() / l2).powf(1.0 / gamma);
    let y = v.ceil();
    if y >= (i64::MAX / 4) as f64 {
        i64::MAX / 4
    } else {
        (y as i64).max(1)
    }
}

/// Jump law with independent semi-exponential coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    axes: Vec<AxisTailLaw>,
}

impl JumpLaw {
    pub fn new(axes: Vec<AxisTailLaw>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("axes", "a jump law needs at least one axis"));
        }
        Ok(Self { axes })
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisTailLaw] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &AxisTailLaw {
        &self.axes[i]
    }

    /// Largest `|E Y_i|` over axes.
    pub fn max_abs_mean(&self) -> Result<f64> {
        self.axes
            .iter()
            .try_fold(0.0_f64, |acc, a| Ok(acc.max(a.mean()?.abs())))
    }

    /// Fails unless every axis has mean zero within [`MEAN_ZERO_TOL`].
    pub fn check_calibrated(&self) -> Result<()> {
        for (i, a) in self.axes.iter().enumerate() {
            let m = a.mean()?;
            if m.abs() > MEAN_ZERO_TOL {
                return Err(invalid("axes", format!("axis {i} has mean {m:e}, not zero")));
            }
        }
        Ok(())
    }

    pub fn prob_zero(&self) -> f64 {
        self.axes.iter().map(AxisTailLaw::prob_zero).product()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.axes.iter().map(|a| a.sample(rng)).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i64]) {
        for (o, a) in out.iter_mut().zip(&self.axes) {
            *o = a.sample(rng);
        }
    }
}

/// Jump law with finitely many atoms, used for nearest-neighbour walks and
/// degenerate test laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteLaw {
    jumps: Vec<Site>,
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl FiniteLaw {
    pub fn new(jumps: Vec<Site>, probs: Vec<f64>) -> Result<Self> {
        if jumps.is_empty() || jumps.len() != probs.len() {
            return Err(invalid("jumps", "need one probability per jump and at least one jump"));
        }
        let d = jumps[0].len();
        if d == 0 || jumps.iter().any(|j| j.len() != d) {
            return Err(invalid("jumps", "all jumps must share a positive dimension"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(invalid("probs", "probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("probs", format!("probabilities sum to {total}, not 1")));
        }
        let mut law = Self {
            jumps,
            probs,
            cumulative: Vec::new(),
        };
        law.rebuild();
        Ok(law)
    }

    fn rebuild(&mut self) {
        let mut acc = 0.0;
        self.cumulative = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
    }

    /// Simple symmetric walk: `±e_i` with probability `1/(2d)` each.
    pub fn nearest_neighbour(d: usize) -> Self {
        let mut jumps = Vec::with_capacity(2 * d);
        for i in 0..d {
            for s in [1, -1] {
                let mut j = vec![0; d];
                j[i] = s;
                jumps.push(j);
            }
        }
        let p = 1.0 / (2 * d) as f64;
        Self::new(jumps, vec![p; 2 * d]).expect("valid nearest-neighbour law")
    }

    /// Point mass on a single jump.
    pub fn dirac(jump: Site) -> Result<Self> {
        Self::new(vec![jump], vec![1.0])
    }

    pub fn dimension(&self) -> usize {
        self.jumps[0].len()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.jumps.iter().zip(self.probs.iter().copied())
    }

    pub fn prob_zero(&self) -> f64 {
        self.atoms()
            .filter(|(j, _)| j.iter().all(|&c| c == 0))
            .map(|(_, p)| p)
            .sum()
    }

    fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.cumulative.len() != self.probs.len() {
            // deserialized without the cache
            let mut acc = 0.0;
            let u: f64 = rng.random();
            for (i, p) in self.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            return self.probs.len() - 1;
        }
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.jumps.len() - 1)
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i64]) {
        out.copy_from_slice(&self.jumps[self.sample_index(rng)]);
    }
}

/// The increment law of the walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLaw {
    SemiExponential(JumpLaw),
    Finite(FiniteLaw),
}

impl StepLaw {
    pub fn dimension(&self) -> usize {
        match self {
            StepLaw::SemiExponential(l) => l.dimension(),
            StepLaw::Finite(l) => l.dimension(),
        }
    }

    /// `P(Y = 0)`, the probability that a clock tick does not move the walk.
    pub fn prob_zero(&self) -> f64 {
        match self {
            StepLaw::SemiExponential(l) => l.prob_zero(),
            StepLaw::Finite(l) => l.prob_zero(),
        }
    }

    pub fn semi_exponential(&self) -> Option<&JumpLaw> {
        match self {
            StepLaw::SemiExponential(l) => Some(l),
            StepLaw::Finite(_) => None,
        }
    }

    /// Draw one jump (possibly the zero vector) into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i64]) {
        match self {
            StepLaw::SemiExponential(l) => l.sample_into(rng, out),
            StepLaw::Finite(l) => l.sample_into(rng, out),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        let mut out = vec![0; self.dimension()];
        self.sample_into(rng, &mut out);
        out
    }

    /// Draw from the law conditioned on a non-zero jump, by rejection.
    /// Requires `prob_zero() < 1`.
    pub fn sample_nonzero_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i64]) {
        loop {
            self.sample_into(rng, out);
            if out.iter().any(|&c| c != 0) {
                return;
            }
        }
    }

    /// If every non-zero jump moves strictly in one direction along some
    /// axis, returns that axis and direction. Such a walk never revisits a
    /// site.
    pub fn monotone_axis(&self) -> Option<(usize, Side)> {
        match self {
            StepLaw::SemiExponential(l) => l.axes().iter().enumerate().find_map(|(i, a)| {
                if a.l1_plus >= 1.0 {
                    Some((i, Side::Plus))
                } else if a.l1_minus >= 1.0 {
                    Some((i, Side::Minus))
                } else {
                    None
                }
            }),
            StepLaw::Finite(l) => (0..l.dimension()).find_map(|i| {
                let moving = || l.atoms().filter(|(j, p)| *p > 0.0 && j.iter().any(|&c| c != 0));
                if moving().all(|(j, _)| j[i] > 0) {
                    Some((i, Side::Plus))
                } else if moving().all(|(j, _)| j[i] < 0) {
                    Some((i, Side::Minus))
                } else {
                    None
                }
            }),
        }
    }
}

impl From<JumpLaw> for StepLaw {
    fn from(l: JumpLaw) -> Self {
        StepLaw::SemiExponential(l)
    }
}

impl From<FiniteLaw> for StepLaw {
    fn from(l: FiniteLaw) -> Self {
        StepLaw::Finite(l)
    }
}
