//! Codelength-minimizing tuning constants.
//!
//! Soundness asks for some `a > 0` with `a (d_z - lambda_a d_ell) >= R_S`,
//! completeness for some `b > 0` with `b (lambda_b d_ell - d_z) >= R_C`.
//! The two pull `d_z` in opposite directions, so at the optimum both bind.
//! For fixed witnesses `(a, b, d_delta)` with `lambda_b > lambda_a` that
//! pins down
//!
//! ```text
//! d_ell = (R_S / a + R_C / b) / (lambda_b - lambda_a)
//! d_z   = R_S / a + lambda_a d_ell
//! ```
//!
//! and what remains is an unconstrained minimization of `d_ell` over three
//! positive reals, done here in log coordinates by multi-start coordinate
//! descent with golden-section line searches.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, LadderEntry, ProblemInstance, TuningConstants, UniversalLadder, Variant};

/// `(e^x - 1 - x) / x^2`, continuous at zero with value 1/2.
pub fn h(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // Taylor series; the closed form cancels catastrophically here.
        0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0)))
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// `a h(a sqrt(d_delta) c0^(-1/3))`
pub fn lambda_a(a: f64, d_delta: f64, c0: f64) -> f64 {
    a * h(a * d_delta.sqrt() * c0.powf(-1.0 / 3.0))
}

/// `2/pi - 4/(d_delta pi) c0^(-1/3) - b h(b sqrt(d_delta)) c0^(-2/3)`.
/// May be negative.
pub fn lambda_b(b: f64, d_delta: f64, c0: f64) -> f64 {
    2.0 / PI
        - 4.0 / (d_delta * PI) * c0.powf(-1.0 / 3.0)
        - b * h(b * d_delta.sqrt()) * c0.powf(-2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Soundness {
    /// Single accusation at the end of the code.
    Static,
    /// Accusation at every position; costs an extra `ln 2 / ln(n/eps1)`.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Completeness {
    /// At least one pirate caught.
    Static,
    /// Every pirate caught when disconnections act `delay` positions late.
    /// `delay = 1` is the plain dynamic condition.
    Delayed { delay: u32 },
}

/// The pair of feasibility conditions a scheme variant must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionVariant {
    pub soundness: Soundness,
    pub completeness: Completeness,
}

impl ConditionVariant {
    pub const STATIC: ConditionVariant = ConditionVariant {
        soundness: Soundness::Static,
        completeness: Completeness::Static,
    };
    pub const DYNAMIC: ConditionVariant = ConditionVariant {
        soundness: Soundness::Dynamic,
        completeness: Completeness::Delayed { delay: 1 },
    };

    pub fn delayed(delay: u32) -> Self {
        ConditionVariant {
            soundness: Soundness::Dynamic,
            completeness: Completeness::Delayed { delay },
        }
    }

    /// Conditions the optimizer uses for an instance. The first weakly
    /// dynamic scheme and the universal ladder reuse the dynamic ones.
    pub fn for_instance(inst: &ProblemInstance) -> Self {
        match inst.variant {
            Variant::Static => Self::STATIC,
            Variant::Dynamic | Variant::WeaklyDynamicA | Variant::Universal => Self::DYNAMIC,
            Variant::WeaklyDynamicB => Self::delayed(inst.b.max(1)),
        }
    }
}

/// Everything the two conditions depend on: `c0`, `L = ln(n/eps1)`, `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub c0: f64,
    pub log_factor: f64,
    pub eta: f64,
    pub variant: ConditionVariant,
}

impl Conditions {
    pub fn new(c0: f64, log_factor: f64, eta: f64, variant: ConditionVariant) -> Self {
        Conditions {
            c0,
            log_factor,
            eta,
            variant,
        }
    }

    pub fn for_instance(inst: &ProblemInstance) -> Self {
        Self::new(
            inst.c0 as f64,
            inst.log_factor(),
            inst.eta(),
            ConditionVariant::for_instance(inst),
        )
    }

    /// Right-hand side of the soundness condition.
    pub fn soundness_rhs(&self) -> f64 {
        match self.variant.soundness {
            Soundness::Static => 1.0,
            Soundness::Dynamic => 1.0 + LN_2 / self.log_factor,
        }
    }

    /// Right-hand side of the completeness condition; depends on the
    /// witness `b` and on `d_delta` through the score overshoot bound.
    pub fn completeness_rhs(&self, b: f64, d_delta: f64) -> f64 {
        let scale = self.c0.powf(-1.0 / 3.0);
        match self.variant.completeness {
            Completeness::Static => self.eta * scale,
            Completeness::Delayed { delay } => {
                let overshoot = LN_2 + f64::from(delay) * b * d_delta.sqrt();
                (self.eta + overshoot / self.log_factor) * scale
            }
        }
    }

    /// `(soundness, completeness)` as LHS - RHS. Both non-negative iff the
    /// constants certify the scheme.
    pub fn margins(&self, d_ell: f64, d_z: f64, d_delta: f64, a: f64, b: f64) -> (f64, f64) {
        let la = lambda_a(a, d_delta, self.c0);
        let lb = lambda_b(b, d_delta, self.c0);
        (
            a * (d_z - la * d_ell) - self.soundness_rhs(),
            b * (lb * d_ell - d_z) - self.completeness_rhs(b, d_delta),
        )
    }

    /// Closed-form `(d_ell, d_z)` making both conditions tight, or `None`
    /// where the witnesses cannot certify anything.
    pub fn tight(&self, a: f64, b: f64, d_delta: f64) -> Option<Tight> {
        if !(a > 0.0 && b > 0.0 && d_delta > 0.0) {
            return None;
        }
        if d_delta * self.c0.powf(4.0 / 3.0) <= 2.0 {
            return None;
        }
        let la = lambda_a(a, d_delta, self.c0);
        let lb = lambda_b(b, d_delta, self.c0);
        if !(lb > la && lb > 0.0) {
            return None;
        }
        let rs = self.soundness_rhs() / a;
        let rc = self.completeness_rhs(b, d_delta) / b;
        let d_ell = (rs + rc) / (lb - la);
        if !d_ell.is_finite() {
            return None;
        }
        Some(Tight {
            d_ell,
            d_z: rs + la * d_ell,
            lambda_a: la,
            lambda_b: lb,
        })
    }

    fn objective(&self, x: [f64; 3]) -> f64 {
        self.tight(x[0].exp(), x[1].exp(), x[2].exp())
            .map_or(f64::INFINITY, |t| t.d_ell)
    }

    /// Packages witnesses as a certificate. `d_ell` is inflated by a relative
    /// 1e-9 and `d_z` placed mid-interval so rounding cannot make either
    /// margin negative.
    fn certificate(&self, a: f64, b: f64, d_delta: f64) -> Option<TuningConstants> {
        let t = self.tight(a, b, d_delta)?;
        let d_ell = t.d_ell * (1.0 + 1e-9);
        let lo = self.soundness_rhs() / a + t.lambda_a * d_ell;
        let hi = t.lambda_b * d_ell - self.completeness_rhs(b, d_delta) / b;
        let d_z = 0.5 * (lo + hi);
        let (sm, cm) = self.margins(d_ell, d_z, d_delta, a, b);
        Some(TuningConstants {
            d_ell,
            d_z,
            d_delta,
            a,
            b,
            lambda_a: t.lambda_a,
            lambda_b: t.lambda_b,
            soundness_margin: sm,
            completeness_margin: cm,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tight {
    pub d_ell: f64,
    pub d_z: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

/// Margins of `tc` under the conditions an instance's variant requires.
pub fn margins(inst: &ProblemInstance, tc: &TuningConstants) -> (f64, f64) {
    Conditions::for_instance(inst).margins(tc.d_ell, tc.d_z, tc.d_delta, tc.a, tc.b)
}

const GOLDEN_RATIO_CONJ: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimum of `f` on `[lo, hi]`; tolerates `+inf` values.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN_RATIO_CONJ * (hi - lo);
    let mut x2 = lo + GOLDEN_RATIO_CONJ * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN_RATIO_CONJ * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN_RATIO_CONJ * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimizes `phi(t)` near `t = 0` given `phi(0) = f0`: bracket by step
/// doubling in the downhill direction, then golden section.
fn line_search(phi: impl Fn(f64) -> f64, f0: f64, step: f64) -> (f64, f64) {
    let mut best = (0.0, f0);
    for dir in [1.0, -1.0] {
        let mut prev = 0.0;
        let mut cur = dir * step;
        let mut fcur = phi(cur);
        if fcur >= f0 {
            continue;
        }
        let mut next = 2.0 * cur;
        let mut fnext = phi(next);
        let mut guard = 0;
        while fnext < fcur && guard < 60 {
            prev = cur;
            cur = next;
            fcur = fnext;
            next = 2.0 * cur;
            fnext = phi(next);
            guard += 1;
        }
        let (lo, hi) = if prev < next { (prev, next) } else { (next, prev) };
        let (t, ft) = golden_section(&phi, lo, hi, 1e-12);
        let cand = if ft < fcur { (t, ft) } else { (cur, fcur) };
        if cand.1 < best.1 {
            best = cand;
        }
        return best;
    }
    // Neither direction descends at this step size: search the bracket.
    let (t, ft) = golden_section(&phi, -step, step, 1e-12);
    if ft < best.1 {
        best = (t, ft);
    }
    best
}

/// Coordinate descent from `x0` with a pattern move after each sweep.
fn descend(cond: &Conditions, x0: [f64; 3]) -> ([f64; 3], f64) {
    let mut x = x0;
    let mut fx = cond.objective(x);
    let mut step = 0.25;
    for _sweep in 0..2000 {
        let start = x;
        let f_start = fx;
        for k in 0..3 {
            let (t, ft) = line_search(
                |t| {
                    let mut y = x;
                    y[k] += t;
                    cond.objective(y)
                },
                fx,
                step,
            );
            if ft < fx {
                x[k] += t;
                fx = ft;
            }
        }
        let dir = [x[0] - start[0], x[1] - start[1], x[2] - start[2]];
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm > 0.0 {
            let (t, ft) = line_search(
                |t| cond.objective([x[0] + t * dir[0], x[1] + t * dir[1], x[2] + t * dir[2]]),
                fx,
                1.0,
            );
            if ft < fx {
                for k in 0..3 {
                    x[k] += t * dir[k];
                }
                fx = ft;
            }
        }
        step = norm.clamp(1e-6, 0.25);
        if f_start - fx <= 1e-14 * fx.abs() {
            break;
        }
    }
    (x, fx)
}

/// Minimizes `d_ell` subject to `cond`. Starting points are the eight best
/// nodes of a coarse log-spaced grid over `(a, b, d_delta)`.
pub fn optimize_conditions(cond: &Conditions) -> Result<TuningConstants> {
    let mut grid: Vec<([f64; 3], f64)> = Vec::new();
    for ia in 0..11 {
        let la = -3.0 + 0.5 * ia as f64;
        for ib in 0..17 {
            let lb = -4.0 + 0.5 * ib as f64;
            for id in 0..15 {
                let ld = -1.0 + 0.5 * id as f64;
                let x = [la, lb, ld];
                let f = cond.objective(x);
                if f.is_finite() {
                    grid.push((x, f));
                }
            }
        }
    }
    if grid.is_empty() {
        return Err(Error::Infeasible(format!(
            "lambda_b never exceeds lambda_a for c0 = {}, ln(n/eps1) = {:.4}, eta = {:.4}, conditions {:?}",
            cond.c0, cond.log_factor, cond.eta, cond.variant
        )));
    }
    grid.sort_by(|l, r| l.1.total_cmp(&r.1));
    grid.truncate(8);

    let best = grid
        .iter()
        .map(|(x, _)| descend(cond, *x))
        .min_by(|l, r| l.1.total_cmp(&r.1))
        .expect("grid is non-empty");
    let [a, b, d] = best.0.map(f64::exp);
    cond.certificate(a, b, d).ok_or_else(|| {
        Error::Infeasible("optimizer converged to an infeasible point".to_string())
    })
}

pub fn optimize_constants(inst: &ProblemInstance) -> Result<TuningConstants> {
    inst.validate()?;
    optimize_conditions(&Conditions::for_instance(inst))
}

/// How the soundness budget is split across ladder entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocation {
    /// `6 eps1 / (pi^2 c^2)`; sums to less than `eps1` over all `c >= 2`.
    Basel,
    /// Explicit per-entry budgets, aligned with the grid.
    Custom(Vec<f64>),
}

pub fn allocate_eps(eps1: f64, c_grid: &[u64], allocation: &Allocation) -> Result<Vec<f64>> {
    if c_grid.is_empty() {
        return Err(Error::Allocation("empty coalition-size grid".to_string()));
    }
    let eps: Vec<f64> = match allocation {
        Allocation::Basel => c_grid
            .iter()
            .map(|&c| 6.0 * eps1 / (PI * PI * (c as f64).powi(2)))
            .collect(),
        Allocation::Custom(v) => {
            if v.len() != c_grid.len() {
                return Err(Error::Allocation(format!(
                    "{} budgets for {} grid entries",
                    v.len(),
                    c_grid.len()
                )));
            }
            v.clone()
        }
    };
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::Allocation(format!("budget {bad} is not in (0, 1)")));
    }
    let total: f64 = eps.iter().sum();
    if total > eps1 * (1.0 + 1e-12) {
        return Err(Error::Allocation(format!(
            "budgets sum to {total}, more than eps1 = {eps1}"
        )));
    }
    Ok(eps)
}

pub fn full_grid(c_max: u64) -> Vec<u64> {
    (2..=c_max).collect()
}

/// `2, 2r, 2r^2, ...` rounded up to integers, always ending at `c_max`.
pub fn geometric_grid(c_max: u64, ratio: f64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut c = 2u64;
    while c <= c_max {
        grid.push(c);
        c = ((c as f64 * ratio).ceil() as u64).max(c + 1);
    }
    if grid.last().is_some_and(|&l| l < c_max) {
        grid.push(c_max);
    }
    grid
}

/// Full grid up to 64, powers of two beyond.
pub fn default_grid(c_max: u64) -> Vec<u64> {
    if c_max <= 64 {
        full_grid(c_max)
    } else {
        geometric_grid(c_max, 2.0)
    }
}

pub fn build_universal_ladder(
    n: u64,
    eps1: f64,
    eps2: f64,
    c_grid: &[u64],
    allocation: &Allocation,
) -> Result<UniversalLadder> {
    if c_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInstance(
            "coalition-size grid must be strictly increasing".to_string(),
        ));
    }
    if c_grid.first().is_some_and(|&c| c < 2) || c_grid.last().is_some_and(|&c| c > n) {
        return Err(Error::InvalidInstance(format!(
            "coalition-size grid must lie within 2..={n}"
        )));
    }
    if !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(Error::InvalidInstance(format!("eps2 = {eps2} must lie in (0, 1)")));
    }
    let eps = allocate_eps(eps1, c_grid, allocation)?;
    let entries = c_grid
        .par_iter()
        .zip(eps.par_iter())
        .map(|(&c, &eps1_c)| {
            let log_factor = model::log_factor(n, eps1_c);
            let eta_c = (1.0 / eps2).ln() / log_factor;
            let cond = Conditions::new(c as f64, log_factor, eta_c, ConditionVariant::DYNAMIC);
            let constants = optimize_conditions(&cond)?;
            let (ell, z, delta) = model::scheme_numbers(&constants, c, n, eps1_c)?;
            Ok(LadderEntry {
                c,
                eps1_c,
                eta_c,
                ell,
                z,
                delta,
                constants,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UniversalLadder {
        n,
        eps1,
        eps2,
        entries,
    })
}

/// One point of a `d_ell` versus `c0` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub c0: u64,
    pub log_factor: f64,
    pub eta: f64,
    pub constants: TuningConstants,
}

/// Optimal constants over a range of `c0` for fixed `ln(n/eps1)` and `eta`.
pub fn sweep(
    c0s: &[u64],
    log_factor: f64,
    eta: f64,
    variant: ConditionVariant,
) -> Result<Vec<SweepPoint>> {
    c0s.par_iter()
        .map(|&c0| {
            let cond = Conditions::new(c0 as f64, log_factor, eta, variant);
            Ok(SweepPoint {
                c0,
                log_factor,
                eta,
                constants: optimize_conditions(&cond)?,
            })
        })
        .collect()
}
