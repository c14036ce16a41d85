//! Horizontal projection and the chord bound on the quotient distance.
//!
//! Tangent vectors live in energy coordinates (`Jω`, `L·I`, `C·V`) over the
//! full state layout; rotor-angle components are always set to zero. In
//! physical co-energy coordinates the frozen-time conservative field does
//! not depend on time, so no time argument is needed.

use crate::dynamics::System;
use crate::error::{Error, Result};

/// How the component along the conservative field is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    /// `δ − (⟨v,δ⟩/⟨v,v⟩) v`: the orthogonal projector.
    #[default]
    Orthogonal,
    /// `δ − (⟨v,δ⟩/(‖v‖‖δ‖)) v`, the normalization as literally written.
    /// Not idempotent; kept for comparison only.
    Literal,
}

/// Diagonal inner-product weight over state slots plus projection mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub weight: Vec<f64>,
    pub mode: ProjectionMode,
}

impl Projector {
    /// `P = R⁻¹` per slot. Slots without damping (RL-host capacitors) get
    /// `1/λ_min` of the positive entries; angle slots get zero weight.
    pub fn for_system(sys: &System) -> Self {
        let r = sys.damping();
        let floor = r.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        let angles = sys.angle_slots();
        let weight = r
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if angles.contains(&i) {
                    0.0
                } else if v > 0.0 {
                    1.0 / v
                } else {
                    1.0 / floor
                }
            })
            .collect();
        Projector {
            weight,
            mode: ProjectionMode::Orthogonal,
        }
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weight.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }
}

/// Removes from `delta` its component along `v = J(x)∇H`.
pub fn horizontal_project(
    sys: &System,
    x: &[f64],
    delta: &[f64],
    proj: &Projector,
) -> Result<Vec<f64>> {
    if delta.len() != sys.dim() || proj.weight.len() != sys.dim() {
        return Err(Error::Dimension {
            expected: sys.dim(),
            got: delta.len().min(proj.weight.len()),
        });
    }
    let v = sys.conservative_field(x)?;
    let grad = sys.gradient(x)?;
    let euclid = |a: &[f64]| a.iter().map(|z| z * z).sum::<f64>().sqrt();
    let (nv, ng) = (euclid(&v), euclid(&grad));
    if !(nv > f64::EPSILON * ng) || nv == 0.0 {
        return Err(Error::DegenerateDirection { norm: nv });
    }
    let mut d = delta.to_vec();
    for s in sys.angle_slots() {
        d[s] = 0.0;
    }
    let vv = proj.dot(&v, &v);
    let coef = match proj.mode {
        ProjectionMode::Orthogonal => proj.dot(&v, &d) / vv,
        ProjectionMode::Literal => {
            let nd = proj.norm(&d);
            if nd == 0.0 {
                0.0
            } else {
                proj.dot(&v, &d) / (vv.sqrt() * nd)
            }
        }
    };
    for (di, vi) in d.iter_mut().zip(&v) {
        *di -= coef * vi;
    }
    Ok(d)
}

/// Midpoint-rule integral of `‖𝒫(γ(s)) γ′(s)‖_P` along the straight chord
/// from `x1` to `x2`. An upper bound on the quotient distance.
pub fn quotient_distance_chord(
    sys: &System,
    x1: &[f64],
    x2: &[f64],
    n_seg: usize,
    proj: &Projector,
) -> Result<f64> {
    if n_seg == 0 {
        return Err(Error::Config("n_seg must be >= 1".into()));
    }
    let n = sys.dim();
    if x1.len() != n || x2.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: if x1.len() != n { x1.len() } else { x2.len() },
        });
    }
    let storage = sys.storage();
    let angles = sys.angle_slots();
    let mut tangent: Vec<f64> = (0..n).map(|i| storage[i] * (x2[i] - x1[i])).collect();
    for &s in &angles {
        tangent[s] = 0.0;
    }
    if proj.norm(&tangent) == 0.0 {
        return Ok(0.0);
    }
    let mut point = vec![0.0; n];
    let mut sum = 0.0;
    for k in 0..n_seg {
        // Weights chosen so that reversing the chord visits identical points.
        let a = (n_seg - k) as f64 - 0.5;
        let b = k as f64 + 0.5;
        let m = n_seg as f64;
        for i in 0..n {
            point[i] = (a / m) * x1[i] + (b / m) * x2[i];
        }
        sum += proj.norm(&horizontal_project(sys, &point, &tangent, proj)?);
    }
    Ok(sum / n_seg as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{random_initial, two_machine_default};

    fn setup() -> (System, Projector, Vec<f64>) {
        let sys = System::new(two_machine_default()).unwrap();
        let proj = Projector::for_system(&sys);
        let x = random_initial(sys.dim(), 3, 10.0);
        (sys, proj, x)
    }

    #[test]
    fn parallel_is_removed_orthogonal_kept() {
        let (sys, proj, x) = setup();
        let v = sys.conservative_field(&x).unwrap();
        let p = horizontal_project(&sys, &x, &v, &proj).unwrap();
        assert!(proj.norm(&p) < 1e-12 * proj.norm(&v));

        let d = random_initial(sys.dim(), 4, 1.0);
        let h = horizontal_project(&sys, &x, &d, &proj).unwrap();
        let again = horizontal_project(&sys, &x, &h, &proj).unwrap();
        for (a, b) in h.iter().zip(&again) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        assert!(proj.dot(&h, &v).abs() < 1e-9 * proj.norm(&h) * proj.norm(&v));
    }

    #[test]
    fn zero_state_is_degenerate() {
        let (sys, proj, _) = setup();
        let z = vec![0.0; sys.dim()];
        let d = vec![1.0; sys.dim()];
        assert!(matches!(
            horizontal_project(&sys, &z, &d, &proj),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn literal_mode_is_not_idempotent() {
        let (sys, mut proj, x) = setup();
        proj.mode = ProjectionMode::Literal;
        let d = random_initial(sys.dim(), 9, 1.0);
        let once = horizontal_project(&sys, &x, &d, &proj).unwrap();
        let twice = horizontal_project(&sys, &x, &once, &proj).unwrap();
        let diff: f64 = once.iter().zip(&twice).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn chord_zero_and_positive() {
        let (sys, proj, x) = setup();
        assert_eq!(quotient_distance_chord(&sys, &x, &x, 16, &proj).unwrap(), 0.0);
        let mut y = x.clone();
        y[sys.ports()[4].offset] += 5.0;
        let h1 = sys.hamiltonian(&x).unwrap().total;
        let h2 = sys.hamiltonian(&y).unwrap().total;
        assert!(h1 != h2);
        assert!(quotient_distance_chord(&sys, &x, &y, 16, &proj).unwrap() > 0.0);
        assert!(quotient_distance_chord(&sys, &x, &y, 0, &proj).is_err());
    }
}
