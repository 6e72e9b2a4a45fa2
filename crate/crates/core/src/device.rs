//! Single-device model: level placement inside the `[1/R_OFF, 1/R_ON]`
//! window, aging, variability and program-and-verify.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::LevelSet;
use crate::rng::standard_normal;

/// Where the `L` stable levels sit inside the conductance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelPlacement {
    /// Equal conductance spacing.
    LinearInConductance,
    /// Equal resistance spacing.
    LinearInResistance,
    /// Equal conductance ratios between neighbours (log-uniform).
    Geometric,
    /// Fixed levels in siemens.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub r_on: f64,
    pub r_off: f64,
    pub levels: u32,
    pub placement: LevelPlacement,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self {
            r_on: 1e3,
            r_off: 1e5,
            levels: 2,
            placement: LevelPlacement::LinearInConductance,
        }
    }
}

impl DeviceSpec {
    pub fn new(r_on: f64, r_off: f64, levels: u32, placement: LevelPlacement) -> Result<Self> {
        let spec = Self {
            r_on,
            r_off,
            levels,
            placement,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Device with explicitly listed levels; the window is taken from their extremes.
    pub fn explicit(levels: Vec<f64>) -> Result<Self> {
        let set = LevelSet::new(levels)?;
        Self::new(
            1.0 / set.g_max(),
            1.0 / set.g_min(),
            set.len() as u32,
            LevelPlacement::Explicit(set.as_slice().to_vec()),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_on > 0.0 && self.r_on.is_finite() && self.r_off.is_finite()) {
            return Err(Error::Domain(format!("invalid r_on = {}", self.r_on)));
        }
        if self.levels == 0 {
            return Err(Error::Domain("device needs at least one level".into()));
        }
        let explicit_single = matches!(&self.placement, LevelPlacement::Explicit(v) if v.len() == 1);
        if !(self.r_on < self.r_off || (explicit_single && self.r_on == self.r_off)) {
            return Err(Error::Domain(format!(
                "require 0 < r_on < r_off (r_on = {}, r_off = {})",
                self.r_on, self.r_off
            )));
        }
        if let LevelPlacement::Explicit(v) = &self.placement {
            if v.len() != self.levels as usize {
                return Err(Error::Domain(format!(
                    "explicit placement lists {} levels but L = {}",
                    v.len(),
                    self.levels
                )));
            }
        }
        Ok(())
    }

    pub fn g_min(&self) -> f64 {
        1.0 / self.r_off
    }

    pub fn g_max(&self) -> f64 {
        1.0 / self.r_on
    }

    pub fn derive_levels(&self) -> Result<LevelSet> {
        derive_levels(self)
    }

    /// Same placement rule inside a different resistance window. Explicit
    /// levels keep their relative position in the window.
    pub fn with_window(&self, r_on: f64, r_off: f64) -> Result<Self> {
        let placement = match &self.placement {
            LevelPlacement::Explicit(v) => {
                let (lo, hi) = (self.g_min(), self.g_max());
                let (nlo, nhi) = (1.0 / r_off, 1.0 / r_on);
                let span = hi - lo;
                LevelPlacement::Explicit(
                    v.iter()
                        .map(|&g| {
                            if span > 0.0 {
                                nlo + (g - lo) / span * (nhi - nlo)
                            } else {
                                nhi
                            }
                        })
                        .collect(),
                )
            }
            p => p.clone(),
        };
        Self::new(r_on, r_off, self.levels, placement)
    }
}

impl DeviceSpec {
    /// Conductance of level `index` when the placement rule is applied to the
    /// window `[1/r_off, 1/r_on]`. Used for boundary drift, where each
    /// device sees its own perturbed window.
    pub fn level_in_window(&self, index: usize, r_on: f64, r_off: f64) -> f64 {
        let (g_lo, g_hi) = (1.0 / r_off, 1.0 / r_on);
        let n = self.levels as usize;
        if let LevelPlacement::Explicit(v) = &self.placement {
            let (lo, hi) = (self.g_min(), self.g_max());
            let span = hi - lo;
            return if span > 0.0 {
                g_lo + (v[index] - lo) / span * (g_hi - g_lo)
            } else {
                g_hi
            };
        }
        if n == 1 {
            return g_hi;
        }
        let t = index as f64 / (n - 1) as f64;
        match self.placement {
            LevelPlacement::LinearInConductance => g_lo + (g_hi - g_lo) * t,
            LevelPlacement::LinearInResistance => 1.0 / (r_on + (r_off - r_on) * (1.0 - t)),
            LevelPlacement::Geometric => g_lo * (g_hi / g_lo).powf(t),
            LevelPlacement::Explicit(_) => unreachable!(),
        }
    }
}

/// Stable levels of a device, strictly increasing, spanning `[1/r_off, 1/r_on]`.
pub fn derive_levels(spec: &DeviceSpec) -> Result<LevelSet> {
    spec.validate()?;
    let (g_lo, g_hi) = (spec.g_min(), spec.g_max());
    let n = spec.levels as usize;
    if let LevelPlacement::Explicit(v) = &spec.placement {
        let tol = 1e-9 * g_hi;
        if let Some(&g) = v.iter().find(|&&g| g < g_lo - tol || g > g_hi + tol) {
            return Err(Error::Domain(format!(
                "explicit level {g} S lies outside the device window [{g_lo}, {g_hi}] S"
            )));
        }
        return LevelSet::new(v.clone());
    }
    if n == 1 {
        return LevelSet::new(vec![g_hi]);
    }
    let mut g: Vec<f64> = (0..n).map(|k| spec.level_in_window(k, spec.r_on, spec.r_off)).collect();
    g[0] = g_lo;
    g[n - 1] = g_hi;
    LevelSet::new(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgingType {
    /// Both boundary resistances fall.
    Type1,
    /// Both boundary resistances rise.
    Type2,
    /// R_ON rises while R_OFF falls, shrinking the window.
    Type3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingState {
    pub aging_type: AgingType,
    pub ratio: f64,
}

impl AgingState {
    pub fn new(aging_type: AgingType, ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::Domain(format!("aging ratio must lie in [0, 1) (got {ratio})")));
        }
        Ok(Self { aging_type, ratio })
    }

    /// Boundary resistances after aging.
    pub fn aged_window(&self, r_on: f64, r_off: f64) -> (f64, f64) {
        let a = self.ratio;
        match self.aging_type {
            AgingType::Type1 => (r_on * (1.0 - a), r_off * (1.0 - a)),
            AgingType::Type2 => (r_on * (1.0 + a), r_off * (1.0 + a)),
            AgingType::Type3 => (r_on * (1.0 + a), r_off * (1.0 - a)),
        }
    }
}

/// Ages the device window and re-derives the levels inside it (the device
/// is reprogrammed to the same number of levels).
pub fn apply_aging(spec: &DeviceSpec, state: &AgingState) -> Result<DeviceSpec> {
    if !(0.0..1.0).contains(&state.ratio) {
        return Err(Error::Domain(format!(
            "aging ratio must lie in [0, 1) (got {})",
            state.ratio
        )));
    }
    if state.ratio == 0.0 {
        return Ok(spec.clone());
    }
    let (r_on, r_off) = state.aged_window(spec.r_on, spec.r_off);
    if !(r_on > 0.0 && r_on < r_off) {
        return Err(Error::AgingCollapse { r_on, r_off });
    }
    spec.with_window(r_on, r_off)
}

/// One draw of a programmed conductance under relative Gaussian variability,
/// resampled until strictly positive.
pub fn perturb_level<R: Rng + ?Sized>(target: f64, var_frac: f64, rng: &mut R) -> f64 {
    if var_frac <= 0.0 {
        return target;
    }
    loop {
        let g = target + var_frac * target * standard_normal(rng);
        if g > 0.0 {
            return g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Set,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub polarity: Polarity,
    pub conductance_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramPulseTrace {
    pub pulses: Vec<Pulse>,
    pub converged: bool,
    pub final_conductance: f64,
    pub final_error: f64,
}

/// Iterative SET/RESET programming with read-back verification.
///
/// Each pulse moves the conductance toward `target` by
/// `step_frac * |target - current|`, scaled by a uniform factor in
/// `[0.8, 1.2]`. With `step_frac > 5/6` a pulse can overshoot, and the next
/// pulse then has the opposite polarity.
pub fn program_and_verify<R: Rng + ?Sized>(
    current: f64,
    target: f64,
    step_frac: f64,
    tolerance: f64,
    max_pulses: usize,
    rng: &mut R,
) -> Result<ProgramPulseTrace> {
    if !(current > 0.0 && target > 0.0) {
        return Err(Error::Domain("conductances must be positive".into()));
    }
    if !(step_frac > 0.0 && step_frac <= 1.0) {
        return Err(Error::Domain(format!("step_frac must lie in (0, 1] (got {step_frac})")));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::Domain("tolerance must be >= 0".into()));
    }
    let floor = target * 1e-6;
    let mut g = current;
    let mut pulses = Vec::new();
    while (target - g).abs() > tolerance && pulses.len() < max_pulses {
        let err = target - g;
        let step = step_frac * err.abs() * rng.random_range(0.8..=1.2);
        let polarity = if err > 0.0 {
            g += step;
            Polarity::Set
        } else {
            g = (g - step).max(floor);
            Polarity::Reset
        };
        pulses.push(Pulse {
            polarity,
            conductance_after: g,
        });
    }
    let final_error = (target - g).abs();
    Ok(ProgramPulseTrace {
        pulses,
        converged: final_error <= tolerance,
        final_conductance: g,
        final_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamKey, StreamKind};
    use approx::assert_relative_eq;

    fn spec(l: u32, placement: LevelPlacement) -> DeviceSpec {
        DeviceSpec::new(1e3, 1e5, l, placement).unwrap()
    }

    #[test]
    fn binary_levels_are_endpoints() {
        let ls = spec(2, LevelPlacement::LinearInConductance).derive_levels().unwrap();
        assert_eq!(ls.as_slice(), &[1e-5, 1e-3]);
    }

    #[test]
    fn three_linear_levels() {
        let ls = spec(3, LevelPlacement::LinearInConductance).derive_levels().unwrap();
        assert_relative_eq!(ls.as_slice()[1], 505e-6, max_relative = 1e-12);
    }

    #[test]
    fn placements_span_the_window() {
        for p in [
            LevelPlacement::LinearInConductance,
            LevelPlacement::LinearInResistance,
            LevelPlacement::Geometric,
        ] {
            for l in [2, 3, 7, 12] {
                let ls = spec(l, p.clone()).derive_levels().unwrap();
                assert_eq!(ls.len(), l as usize);
                assert_eq!(ls.g_min(), 1e-5);
                assert_eq!(ls.g_max(), 1e-3);
            }
        }
        let ls = spec(1, LevelPlacement::Geometric).derive_levels().unwrap();
        assert_eq!(ls.as_slice(), &[1e-3]);
    }

    #[test]
    fn explicit_levels_round_trip() {
        let us = [10e-6, 15e-6, 29e-6, 1000e-6];
        let d = DeviceSpec::explicit(us.to_vec()).unwrap();
        assert_eq!(d.derive_levels().unwrap().as_slice(), &us);
        let bad = DeviceSpec::new(1e3, 1e5, 2, LevelPlacement::Explicit(vec![1e-6, 1e-3])).unwrap();
        assert!(matches!(bad.derive_levels(), Err(Error::Domain(_))));
    }

    #[test]
    fn type3_aging_window() {
        let d = spec(4, LevelPlacement::LinearInConductance);
        let aged = apply_aging(&d, &AgingState::new(AgingType::Type3, 0.1).unwrap()).unwrap();
        assert_relative_eq!(aged.r_on, 1.1e3, max_relative = 1e-12);
        assert_relative_eq!(aged.r_off, 90e3, max_relative = 1e-12);
        let aged = apply_aging(&d, &AgingState::new(AgingType::Type3, 0.7).unwrap()).unwrap();
        assert_relative_eq!(aged.r_on, 1.7e3, max_relative = 1e-12);
        assert_relative_eq!(aged.r_off, 30e3, max_relative = 1e-12);
    }

    #[test]
    fn zero_aging_is_identity() {
        for t in [AgingType::Type1, AgingType::Type2, AgingType::Type3] {
            let d = spec(5, LevelPlacement::Geometric);
            assert_eq!(apply_aging(&d, &AgingState::new(t, 0.0).unwrap()).unwrap(), d);
        }
    }

    #[test]
    fn type3_shrinks_window_and_keeps_count() {
        let d = spec(6, LevelPlacement::Geometric);
        let before = d.derive_levels().unwrap();
        for ratio in [0.1, 0.3, 0.5, 0.7] {
            let aged = apply_aging(&d, &AgingState::new(AgingType::Type3, ratio).unwrap()).unwrap();
            let after = aged.derive_levels().unwrap();
            assert_eq!(after.len(), before.len());
            assert!(after.g_max() < before.g_max());
            assert!(after.g_min() > before.g_min());
        }
    }

    #[test]
    fn type1_and_type2_scale_both_boundaries() {
        let d = spec(3, LevelPlacement::LinearInConductance);
        let a1 = apply_aging(&d, &AgingState::new(AgingType::Type1, 0.5).unwrap()).unwrap();
        assert_relative_eq!(a1.r_on, 500.0);
        assert_relative_eq!(a1.r_off, 50e3);
        let a2 = apply_aging(&d, &AgingState::new(AgingType::Type2, 0.5).unwrap()).unwrap();
        assert_relative_eq!(a2.r_on, 1.5e3);
        assert_relative_eq!(a2.r_off, 150e3);
    }

    #[test]
    fn aging_collapse_is_reported() {
        let d = DeviceSpec::new(1e3, 1.5e3, 2, LevelPlacement::LinearInConductance).unwrap();
        let err = apply_aging(&d, &AgingState::new(AgingType::Type3, 0.3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::AgingCollapse { .. }));
        assert!(AgingState::new(AgingType::Type3, 1.0).is_err());
    }

    #[test]
    fn explicit_levels_follow_aged_window() {
        let d = DeviceSpec::explicit(vec![10e-6, 15e-6, 29e-6, 1000e-6]).unwrap();
        let aged = apply_aging(&d, &AgingState::new(AgingType::Type3, 0.2).unwrap()).unwrap();
        let ls = aged.derive_levels().unwrap();
        assert_relative_eq!(ls.g_min(), 1.0 / 80e3, max_relative = 1e-12);
        assert_relative_eq!(ls.g_max(), 1.0 / 1.2e3, max_relative = 1e-12);
        assert_eq!(ls.len(), 4);
    }

    #[test]
    fn perturb_zero_is_exact_and_seeded_is_repeatable() {
        let mut rng = StreamKey::root(1).kind(StreamKind::Variability).rng();
        assert_eq!(perturb_level(100e-6, 0.0, &mut rng), 100e-6);
        let key = StreamKey::root(5).kind(StreamKind::Variability).index(3);
        let a = perturb_level(10e-6, 0.1, &mut key.rng());
        let b = perturb_level(10e-6, 0.1, &mut key.rng());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn perturb_mean_and_spread() {
        let mut rng = StreamKey::root(2).kind(StreamKind::Variability).rng();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| perturb_level(100e-6, 0.1, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean / 100e-6 - 1.0).abs() < 0.005, "mean {mean}");
        assert!((var.sqrt() / 10e-6 - 1.0).abs() < 0.02, "std {}", var.sqrt());
        let mut rng = StreamKey::root(3).rng();
        assert!((0..10_000).all(|_| perturb_level(1e-6, 2.0, &mut rng) > 0.0));
    }

    #[test]
    fn program_verify_trivial_and_set_sequence() {
        let mut rng = StreamKey::root(9).kind(StreamKind::Program).rng();
        let t = program_and_verify(50e-6, 50e-6, 0.5, 1e-6, 100, &mut rng).unwrap();
        assert!(t.pulses.is_empty() && t.converged);

        let t = program_and_verify(10e-6, 1000e-6, 0.5, 1e-6, 200, &mut rng).unwrap();
        assert!(t.converged, "{t:?}");
        assert!(t.pulses.len() <= 40, "{} pulses", t.pulses.len());
        assert!(t.pulses.iter().all(|p| p.polarity == Polarity::Set));
        let mut prev = 10e-6;
        for p in &t.pulses {
            assert!(p.conductance_after >= prev);
            prev = p.conductance_after;
        }
        assert!(t.final_error <= 1e-6);
    }

    #[test]
    fn program_verify_reset_and_budget() {
        let mut rng = StreamKey::root(10).kind(StreamKind::Program).rng();
        let t = program_and_verify(900e-6, 20e-6, 0.4, 0.5e-6, 200, &mut rng).unwrap();
        assert!(t.converged);
        assert!(t.pulses.iter().all(|p| p.polarity == Polarity::Reset));

        let t = program_and_verify(10e-6, 1000e-6, 0.1, 1e-9, 3, &mut rng).unwrap();
        assert!(!t.converged);
        assert_eq!(t.pulses.len(), 3);
    }

    #[test]
    fn program_verify_polarity_tracks_error_sign() {
        let mut rng = StreamKey::root(11).kind(StreamKind::Program).rng();
        let target = 300e-6;
        let t = program_and_verify(10e-6, target, 1.0, 1e-7, 500, &mut rng).unwrap();
        let mut g = 10e-6;
        for p in &t.pulses {
            let expect = if target > g { Polarity::Set } else { Polarity::Reset };
            assert_eq!(p.polarity, expect);
            match p.polarity {
                Polarity::Set => assert!(p.conductance_after > g),
                Polarity::Reset => assert!(p.conductance_after < g),
            }
            g = p.conductance_after;
        }
        assert!(t.converged);
    }
}
