//! Shared domain types and the parameter formulas common to every scheme.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which tracing scheme an instance is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Static,
    Dynamic,
    /// Dynamic constants; positions following a delayed disconnection are
    /// dropped from scoring.
    WeaklyDynamicA,
    /// Constants re-optimized for the delay; nothing is dropped.
    WeaklyDynamicB,
    Universal,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Static,
        Variant::Dynamic,
        Variant::WeaklyDynamicA,
        Variant::WeaklyDynamicB,
        Variant::Universal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Static => "static",
            Variant::Dynamic => "dynamic",
            Variant::WeaklyDynamicA => "weakly-dynamic-a",
            Variant::WeaklyDynamicB => "weakly-dynamic-b",
            Variant::Universal => "universal",
        }
    }

    pub fn is_weakly_dynamic(self) -> bool {
        matches!(self, Variant::WeaklyDynamicA | Variant::WeaklyDynamicB)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Variant::Static),
            "dynamic" => Ok(Variant::Dynamic),
            "weakly-dynamic-a" | "weakly-a" => Ok(Variant::WeaklyDynamicA),
            "weakly-dynamic-b" | "weakly-b" => Ok(Variant::WeaklyDynamicB),
            "universal" => Ok(Variant::Universal),
            other => Err(format!(
                "unknown variant `{other}` (expected static, dynamic, weakly-a, weakly-b or universal)"
            )),
        }
    }
}

/// `ln(eps2) / ln(eps1 / n)`: the log-ratio coupling the two error budgets.
pub fn eta(n: u64, eps1: f64, eps2: f64) -> f64 {
    eps2.ln() / (eps1 / n as f64).ln()
}

/// `ln(n / eps1)`, the logarithmic factor shared by codelength and threshold.
pub fn log_factor(n: u64, eps1: f64) -> f64 {
    (n as f64 / eps1).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub n: u64,
    pub eps1: f64,
    pub eps2: f64,
    /// Collusion bound. For the universal scheme this is the largest
    /// coalition size the ladder covers.
    pub c0: u64,
    /// Feedback delay in positions; only meaningful for weakly dynamic
    /// variants and zero otherwise.
    #[serde(rename = "B", default)]
    pub b: u32,
    pub variant: Variant,
}

impl ProblemInstance {
    /// Weakly dynamic variants start at the minimal delay `B = 1`; use
    /// [`ProblemInstance::with_delay`] to change it.
    pub fn new(n: u64, eps1: f64, eps2: f64, c0: u64, variant: Variant) -> Result<Self> {
        let inst = ProblemInstance {
            n,
            eps1,
            eps2,
            c0,
            b: u32::from(variant.is_weakly_dynamic()),
            variant,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_delay(mut self, b: u32) -> Result<Self> {
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 2 {
            problems.push(format!("n = {} must be at least 2", self.n));
        }
        if !(self.eps1 > 0.0 && self.eps1 < 1.0) {
            problems.push(format!("eps1 = {} must lie in (0, 1)", self.eps1));
        }
        if !(self.eps2 > 0.0 && self.eps2 < 1.0) {
            problems.push(format!("eps2 = {} must lie in (0, 1)", self.eps2));
        }
        if self.c0 < 2 || self.c0 > self.n {
            problems.push(format!("c0 = {} must satisfy 2 <= c0 <= n", self.c0));
        }
        match self.variant {
            Variant::WeaklyDynamicA | Variant::WeaklyDynamicB if self.b == 0 => {
                problems.push("weakly dynamic variants need a delay B >= 1".to_string())
            }
            v if !v.is_weakly_dynamic() && self.b != 0 => problems.push(format!(
                "delay B = {} is only used by weakly dynamic variants",
                self.b
            )),
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(problems.join("; ")))
        }
    }

    pub fn eta(&self) -> f64 {
        eta(self.n, self.eps1, self.eps2)
    }

    pub fn log_factor(&self) -> f64 {
        log_factor(self.n, self.eps1)
    }
}

/// Optimizer output: the three scheme constants plus the witnesses that
/// certify both feasibility conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConstants {
    pub d_ell: f64,
    pub d_z: f64,
    pub d_delta: f64,
    pub a: f64,
    pub b: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub soundness_margin: f64,
    pub completeness_margin: f64,
}

impl TuningConstants {
    pub fn is_feasible(&self) -> bool {
        self.soundness_margin >= 0.0 && self.completeness_margin >= 0.0
    }
}

/// Concrete numbers for one scheme instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParameters {
    pub ell: u64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub delta: f64,
    pub instance: ProblemInstance,
    pub constants: TuningConstants,
}

impl SchemeParameters {
    /// Upper bound on the broadcast length of the first weakly dynamic
    /// scheme: scored positions plus at most `B` dropped positions per
    /// pirate.
    pub fn contaminated_length_bound(&self) -> u64 {
        self.ell + u64::from(self.instance.b) * self.instance.c0
    }
}

/// Real-valued codelength `d_ell * c^2 * ln(n / eps1)` before rounding.
pub fn raw_codelength(d_ell: f64, c: u64, n: u64, eps1: f64) -> f64 {
    d_ell * (c as f64).powi(2) * log_factor(n, eps1)
}

pub fn threshold(d_z: f64, c: u64, n: u64, eps1: f64) -> f64 {
    d_z * c as f64 * log_factor(n, eps1)
}

pub fn cutoff(d_delta: f64, c: u64) -> f64 {
    1.0 / (d_delta * (c as f64).powf(4.0 / 3.0))
}

pub(crate) fn check_constants(d_ell: f64, d_z: f64, d_delta: f64) -> Result<()> {
    for (name, v) in [("d_ell", d_ell), ("d_z", d_z), ("d_delta", d_delta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidConstants(format!(
                "{name} = {v} must be finite and positive"
            )));
        }
    }
    Ok(())
}

/// Codelength, threshold and cutoff for `c` colluders under `eps1`.
pub(crate) fn scheme_numbers(
    tc: &TuningConstants,
    c: u64,
    n: u64,
    eps1: f64,
) -> Result<(u64, f64, f64)> {
    check_constants(tc.d_ell, tc.d_z, tc.d_delta)?;
    let delta = cutoff(tc.d_delta, c);
    if delta >= 0.5 {
        return Err(Error::InvalidConstants(format!(
            "d_delta = {} gives cutoff {delta} >= 1/2 at c = {c}",
            tc.d_delta
        )));
    }
    let ell = raw_codelength(tc.d_ell, c, n, eps1).ceil() as u64;
    Ok((ell, threshold(tc.d_z, c, n, eps1), delta))
}

pub fn derive_scheme_params(
    inst: &ProblemInstance,
    tc: &TuningConstants,
) -> Result<SchemeParameters> {
    inst.validate()?;
    let (ell, z, delta) = scheme_numbers(tc, inst.c0, inst.n, inst.eps1)?;
    Ok(SchemeParameters {
        ell,
        z,
        delta,
        instance: *inst,
        constants: *tc,
    })
}

/// One rung of the universal scheme: a dynamic scheme for exactly `c`
/// colluders running on the shared code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub c: u64,
    pub eps1_c: f64,
    pub eta_c: f64,
    pub ell: u64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub delta: f64,
    pub constants: TuningConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalLadder {
    pub n: u64,
    pub eps1: f64,
    pub eps2: f64,
    pub entries: Vec<LadderEntry>,
}

impl UniversalLadder {
    pub fn c_grid(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.c).collect()
    }

    pub fn entry(&self, c: u64) -> Option<&LadderEntry> {
        self.entries.iter().find(|e| e.c == c)
    }

    pub fn top(&self) -> Option<&LadderEntry> {
        self.entries.last()
    }

    /// Total soundness budget spent by the ladder.
    pub fn eps1_spent(&self) -> f64 {
        self.entries.iter().map(|e| e.eps1_c).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants(d_ell: f64, d_z: f64, d_delta: f64) -> TuningConstants {
        TuningConstants {
            d_ell,
            d_z,
            d_delta,
            a: 1.0,
            b: 1.0,
            lambda_a: 0.0,
            lambda_b: 1.0,
            soundness_margin: 0.0,
            completeness_margin: 0.0,
        }
    }

    fn running_example(variant: Variant) -> ProblemInstance {
        ProblemInstance::new(1_000_000, 1e-3, 1e-3, 25, variant).unwrap()
    }

    #[test]
    fn static_example_numbers() {
        let p = derive_scheme_params(
            &running_example(Variant::Static),
            &constants(8.46, 4.53, 14.36),
        )
        .unwrap();
        // The printed two-decimal constants land within 0.2% of the
        // published lengths.
        assert!((p.ell as f64 - 109_585.0).abs() / 109_585.0 < 2e-3, "{}", p.ell);
        assert!((p.z - 2345.0).abs() / 2345.0 < 2e-3, "{}", p.z);
        // 1 / (14.36 * 25^(4/3))
        assert!((p.delta - 9.527e-4).abs() < 1e-6, "{}", p.delta);
    }

    #[test]
    fn dynamic_example_numbers() {
        let p = derive_scheme_params(
            &running_example(Variant::Dynamic),
            &constants(9.00, 4.73, 13.44),
        )
        .unwrap();
        assert!((p.ell as f64 - 116_561.0).abs() / 116_561.0 < 2e-3, "{}", p.ell);
        assert!((p.z - 2448.0).abs() / 2448.0 < 2e-3, "{}", p.z);
        assert!((p.delta - 1.02e-3).abs() < 5e-6, "{}", p.delta);
    }

    #[test]
    fn rejects_wide_cutoff() {
        let inst = ProblemInstance::new(100, 0.01, 0.01, 2, Variant::Dynamic).unwrap();
        // 2^(4/3) ~ 2.52, so d_delta = 0.5 gives delta ~ 0.79.
        let err = derive_scheme_params(&inst, &constants(10.0, 5.0, 0.5)).unwrap_err();
        assert!(matches!(err, Error::InvalidConstants(_)));
        let err = derive_scheme_params(&inst, &constants(10.0, -1.0, 20.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidConstants(_)));
    }

    #[test]
    fn d_ell_round_trip() {
        let inst = running_example(Variant::Dynamic);
        for d in [1.0, 4.93, 9.0, 123.456] {
            let raw = raw_codelength(d, inst.c0, inst.n, inst.eps1);
            let back = raw / ((inst.c0 as f64).powi(2) * inst.log_factor());
            assert!((back - d).abs() < 1e-9);
        }
    }

    #[test]
    fn eta_running_example_is_one_third() {
        assert!((running_example(Variant::Static).eta() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eta_decreases_with_n() {
        let mut prev = f64::INFINITY;
        for n in [10u64, 100, 1_000, 10_000, 1_000_000, 1_000_000_000] {
            let e = eta(n, 1e-3, 1e-2);
            assert!(e.is_finite() && e > 0.0);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn instance_validation() {
        assert!(ProblemInstance::new(1, 0.1, 0.1, 2, Variant::Static).is_err());
        assert!(ProblemInstance::new(100, 0.0, 0.1, 2, Variant::Static).is_err());
        assert!(ProblemInstance::new(100, 0.1, 1.0, 2, Variant::Static).is_err());
        assert!(ProblemInstance::new(100, 0.1, 0.1, 101, Variant::Static).is_err());
        assert!(ProblemInstance::new(100, 0.1, 0.1, 5, Variant::WeaklyDynamicB)
            .unwrap()
            .with_delay(0)
            .is_err());
        let inst = ProblemInstance::new(100, 0.1, 0.1, 5, Variant::Dynamic).unwrap();
        assert!(inst.with_delay(3).is_err());
        let mut weak = inst;
        weak.variant = Variant::WeaklyDynamicA;
        assert!(weak.with_delay(3).is_ok());
    }

    #[test]
    fn json_field_names() {
        let inst = running_example(Variant::WeaklyDynamicB).with_delay(8).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        assert!(s.contains("\"B\":8"), "{s}");
        assert!(s.contains("\"weakly-dynamic-b\""), "{s}");
        let back: ProblemInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
    }
}
